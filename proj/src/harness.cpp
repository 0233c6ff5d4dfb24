#include "lakekernel/harness.hpp"

#include "lakekernel/error.hpp"
#include "lakekernel/hash.hpp"
#include "lakekernel/lakehouse.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <numeric>
#include <thread>

namespace lake {

namespace fs = std::filesystem;
using nlohmann::json;

void WorkloadSpec::validate() const {
    if (n_agents <= 0) throw Error(ErrorCode::InvalidArgument, "n_agents must be positive");
    if (ops_per_agent < 0) throw Error(ErrorCode::InvalidArgument, "ops_per_agent must be non-negative");
    double w[] = {mix.read_session_scan, mix.run_pipeline, mix.run_pipeline_with_fault, mix.branch_and_merge};
    for (double x : w) {
        if (!(x >= 0)) throw Error(ErrorCode::InvalidArgument, "mix weights must be non-negative");
    }
    if (w[0] + w[1] + w[2] + w[3] <= 0) throw Error(ErrorCode::InvalidArgument, "mix weights sum to zero");
}

// ---- JSON ----

namespace {

json map_json(const TableMap& m) {
    json j = json::object();
    for (const auto& [t, id] : m) j[t] = id.hex;
    return j;
}

TableMap map_from(const json& j) {
    TableMap m;
    for (const auto& [t, v] : j.items()) m[t] = SnapshotId{v.get<std::string>()};
    return m;
}

} // namespace

json to_json(const Trace& trace) {
    json events = json::array();
    for (const auto& e : trace.events) {
        json j = {{"seq", e.seq},         {"agent", e.agent},         {"op", e.op},
                  {"heads_seen", e.heads_seen}, {"pinned", e.pinned}, {"reads", map_json(e.reads)},
                  {"outcome", e.outcome}};
        if (e.merge) {
            j["merge"] = {{"kind", e.merge->kind},
                          {"commit", e.merge->commit},
                          {"base_tables", map_json(e.merge->base_tables)},
                          {"source_tables", map_json(e.merge->source_tables)},
                          {"target_tables", map_json(e.merge->target_tables)},
                          {"result_tables", map_json(e.merge->result_tables)}};
        }
        if (e.committed_state) j["committed_state"] = map_json(*e.committed_state);
        events.push_back(std::move(j));
    }
    return {{"schema_version", 1},
            {"branch", trace.branch},
            {"initial_head", trace.initial_head},
            {"initial_state", map_json(trace.initial_state)},
            {"events", std::move(events)},
            {"final_head", trace.final_head},
            {"final_state", map_json(trace.final_state)}};
}

Trace trace_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != 1) {
            throw Error(ErrorCode::InvalidArgument, "unsupported trace schema_version");
        }
        Trace t;
        t.branch = j.at("branch").get<std::string>();
        t.initial_head = j.at("initial_head").get<std::string>();
        t.initial_state = map_from(j.at("initial_state"));
        t.final_head = j.at("final_head").get<std::string>();
        t.final_state = map_from(j.at("final_state"));
        for (const auto& je : j.at("events")) {
            TraceEvent e;
            e.seq = je.at("seq").get<std::uint64_t>();
            e.agent = je.at("agent").get<int>();
            e.op = je.at("op").get<std::string>();
            e.heads_seen = je.at("heads_seen").get<std::map<std::string, std::string>>();
            e.pinned = je.at("pinned").get<std::string>();
            e.reads = map_from(je.at("reads"));
            e.outcome = je.at("outcome").get<std::string>();
            if (je.contains("merge")) {
                const auto& m = je["merge"];
                e.merge = MergeRecord{m.at("kind").get<std::string>(), m.at("commit").get<std::string>(),
                                      map_from(m.at("base_tables")),   map_from(m.at("source_tables")),
                                      map_from(m.at("target_tables")), map_from(m.at("result_tables"))};
            }
            if (je.contains("committed_state")) e.committed_state = map_from(je["committed_state"]);
            t.events.push_back(std::move(e));
        }
        return t;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed trace: ") + e.what());
    }
}

// ---- checkers ----

namespace {

std::string describe(const TableMap& m) {
    std::string out = "{";
    for (const auto& [t, id] : m) {
        if (out.size() > 1) out += ", ";
        out += t + "=" + id.hex.substr(0, 8);
    }
    return out + "}";
}

} // namespace

std::vector<IsolationViolation> check_isolation(const Trace& trace) {
    std::vector<const TableMap*> states{&trace.initial_state};
    for (const auto& e : trace.events) {
        if (e.committed_state) states.push_back(&*e.committed_state);
    }
    std::vector<IsolationViolation> out;
    for (const auto& e : trace.events) {
        if (e.reads.empty()) continue;
        bool matched = std::any_of(states.begin(), states.end(), [&](const TableMap* s) { return *s == e.reads; });
        if (!matched) {
            out.push_back({e.seq, "agent " + std::to_string(e.agent) + " " + e.op + " read " + describe(e.reads) +
                                      ", which no committed transaction produced"});
        }
    }
    return out;
}

SerializabilityResult check_serializability(const Trace& trace) {
    std::vector<const TraceEvent*> merges;
    for (const auto& e : trace.events) {
        if (e.merge && e.committed_state) merges.push_back(&e);
    }
    if (merges.size() > max_serializable_merges) {
        throw Error(ErrorCode::TooLarge, std::to_string(merges.size()) + " merges exceed the brute-force bound of " +
                                             std::to_string(max_serializable_merges));
    }
    std::vector<std::size_t> order(merges.size());
    std::iota(order.begin(), order.end(), 0);
    do {
        TableMap state = trace.initial_state;
        bool applied = true;
        for (std::size_t i : order) {
            auto r = three_way_merge(merges[i]->merge->base_tables, merges[i]->merge->source_tables, state);
            if (!r.conflicts.empty()) {
                applied = false;
                break;
            }
            state = std::move(r.merged);
        }
        if (applied && state == trace.final_state) {
            SerializabilityResult ok{true, {}, {}};
            for (std::size_t i : order) ok.witness.push_back(merges[i]->seq);
            return ok;
        }
    } while (std::next_permutation(order.begin(), order.end()));
    return {false, {}, "no order of the " + std::to_string(merges.size()) + " merges reproduces the final state " +
                           describe(trace.final_state)};
}

// ---- simulation ----

Policy harness_policy(int n_agents) {
    Policy p;
    Role role{"agent", {}};
    for (const char* g : {"ReadTable:*:*", "WriteBranch:*", "CreateBranch:*", "MergeInto:*", "RunPipeline:*",
                          "RegisterVerifier"}) {
        role.permissions.push_back(Permission::parse(g));
    }
    p.roles.push_back(std::move(role));
    p.principals.push_back({"harness", {"agent"}});
    for (int i = 0; i < n_agents; ++i) p.principals.push_back({"agent" + std::to_string(i), {"agent"}});
    return p;
}

namespace {

constexpr std::int64_t harness_epoch = 1'700'000'000;

std::string agent_name(int i) { return "agent" + std::to_string(i); }

class Recorder {
public:
    void add(TraceEvent e) {
        std::lock_guard lock(mu_);
        e.seq = ++seq_;
        events_.push_back(std::move(e));
    }
    std::vector<TraceEvent> take() {
        std::lock_guard lock(mu_);
        std::sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
        return std::move(events_);
    }

private:
    std::mutex mu_;
    std::uint64_t seq_ = 0;
    std::vector<TraceEvent> events_;
};

MergeRecord merge_record(const Catalog& catalog, const MergeResult& m) {
    return {std::string(to_string(m.kind)),    m.commit.hex,
            catalog.tables_at(m.base),         catalog.tables_at(m.source_head),
            catalog.tables_at(m.target_head),  catalog.tables_at(m.commit)};
}

void record_merge(const Catalog& catalog, const MergeResult& m, TraceEvent& e) {
    e.outcome = std::string(to_string(m.kind));
    if (!m.succeeded()) return;
    e.merge = merge_record(catalog, m);
    e.committed_state = e.merge->result_tables;
}

/// Reads every table at a fresh session on `branch` through the governed API.
void full_scan(Lakehouse& lake, const std::string& branch, const std::string& principal, TraceEvent& e) {
    ReadSession s = lake.open_session(branch);
    e.pinned = s.pinned.hex;
    for (const auto& [table, _] : lake.catalog().tables_at(s.pinned)) {
        TableData data = lake.read_table(s, table, principal);
        e.reads[table] = SnapshotId{sha256_hex(encode_table(data))};
    }
}

Trace begin_trace(const Lakehouse& lake, const std::string& branch) {
    Trace t;
    t.branch = branch;
    CommitId head = lake.catalog().head(branch);
    t.initial_head = head.hex;
    t.initial_state = lake.catalog().tables_at(head);
    return t;
}

void end_trace(const Lakehouse& lake, Trace& t, Recorder& rec) {
    t.events = rec.take();
    CommitId head = lake.catalog().head(t.branch);
    t.final_head = head.hex;
    t.final_state = lake.catalog().tables_at(head);
}

TableData int_table(std::vector<std::string> names, std::vector<std::vector<std::int64_t>> rows) {
    TableData t;
    for (auto& n : names) t.schema.columns.push_back({std::move(n), ColumnType::Int64});
    for (auto& r : rows) t.rows.push_back(Row(r.begin(), r.end()));
    return t;
}

PipelineSpec agent_pipeline(int agent, std::uint64_t literal) {
    std::string p = "p" + std::to_string(agent);
    return parse_pipeline("pipeline " + p + "\n" +
                          "node " + p + "_a:\n"
                          "  inputs: seed\n"
                          "  env: runtime=python3.11 packages=[]\n"
                          "  materialize: REPLACE\n"
                          "  query: SELECT k, v + " + std::to_string(literal) + " AS v FROM seed\n" +
                          "node " + p + "_b:\n"
                          "  inputs: " + p + "_a\n"
                          "  env: runtime=python3.11 packages=[]\n"
                          "  materialize: REPLACE\n"
                          "  query: SELECT count(*) AS n, sum(v) AS total FROM " + p + "_a\n");
}

enum class Op { ReadScan, Run, RunWithFault, BranchAndMerge };

Op pick_op(const WorkloadMix& mix, SplitMix64& rng) {
    double w[] = {mix.read_session_scan, mix.run_pipeline, mix.run_pipeline_with_fault, mix.branch_and_merge};
    double x = rng.next_unit() * (w[0] + w[1] + w[2] + w[3]);
    for (int i = 0; i < 3; ++i) {
        if (x < w[i]) return static_cast<Op>(i);
        x -= w[i];
    }
    for (int i = 3; i > 0; --i) {
        if (w[i] > 0) return static_cast<Op>(i);
    }
    return Op::ReadScan;
}

std::string_view op_name(Op op) {
    switch (op) {
    case Op::ReadScan: return "read_session_scan";
    case Op::Run: return "run_pipeline";
    case Op::RunWithFault: return "run_pipeline_with_fault";
    case Op::BranchAndMerge: return "branch_and_merge";
    }
    return "?";
}

void run_agent(Lakehouse& lake, Recorder& rec, const WorkloadSpec& spec, int agent, std::uint64_t stream_seed) {
    SplitMix64 rng(stream_seed);
    const std::string me = agent_name(agent);
    for (int k = 0; k < spec.ops_per_agent; ++k) {
        Op op = pick_op(spec.mix, rng);
        std::string run_id = uuid_v4(rng);
        std::uint64_t literal = rng.below(100);
        TraceEvent e;
        e.agent = agent;
        e.op = std::string(op_name(op));
        try {
            e.heads_seen["main"] = lake.catalog().head("main").hex;
            switch (op) {
            case Op::ReadScan:
                full_scan(lake, "main", me, e);
                e.outcome = "Read";
                break;
            case Op::Run:
            case Op::RunWithFault: {
                PipelineSpec p = agent_pipeline(agent, literal);
                RunOptions o;
                o.principal = me;
                o.run_id = run_id;
                if (op == Op::RunWithFault) o.fail_after = p.nodes.front().name;
                RunReport r = lake.run(p, "main", o);
                e.outcome = std::string(to_string(r.outcome));
                if (r.merge && r.merge->succeeded()) {
                    e.merge = merge_record(lake.catalog(), *r.merge);
                    e.committed_state = e.merge->result_tables;
                }
                if (r.outcome != RunOutcome::Denied && r.outcome != RunOutcome::Planned) lake.cleanup_temp(r.run_id, me);
                break;
            }
            case Op::BranchAndMerge: {
                std::string branch = me + "/op" + std::to_string(k);
                lake.create_branch(branch, "main", me);
                ReadSession s = lake.open_session(branch);
                TableData ledger = lake.read_table(s, "ledger", me);
                ledger.rows.push_back({std::int64_t{agent}, std::int64_t{k}});
                lake.commit_data(branch, {{"ledger", ledger}}, s.pinned, "ledger " + me, me);
                record_merge(lake.catalog(), lake.merge(branch, "main", me), e);
                lake.delete_branch(branch, me);
                break;
            }
            }
        } catch (const Error& err) {
            e.outcome = "error " + std::string(to_string(err.code())) + ": " + err.what();
        }
        rec.add(std::move(e));
    }
}

std::unique_ptr<Lakehouse> open_harness_lake(const fs::path& dir, int n_agents) {
    LakehouseOptions o;
    o.clock = counting_clock(harness_epoch);
    o.audit_to_file = false;
    return std::make_unique<Lakehouse>(dir, harness_policy(n_agents), std::move(o));
}

} // namespace

Trace simulate(const fs::path& dir, const WorkloadSpec& spec) {
    spec.validate();
    auto lake = open_harness_lake(dir, spec.n_agents);
    if (!lake->catalog().tables_at(lake->catalog().head("main")).count("seed")) {
        std::vector<std::vector<std::int64_t>> rows;
        for (std::int64_t k = 0; k < 8; ++k) rows.push_back({k, k * k});
        lake->commit_data("main", {{"seed", int_table({"k", "v"}, rows)}, {"ledger", int_table({"agent", "op"}, {})}},
                          lake->catalog().head("main"), "seed tables", "harness");
    }
    Trace trace = begin_trace(*lake, "main");
    Recorder rec;
    SplitMix64 streams(spec.seed);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < spec.n_agents; ++i) seeds.push_back(streams.next());
    std::vector<std::thread> threads;
    for (int i = 0; i < spec.n_agents; ++i) {
        threads.emplace_back(run_agent, std::ref(*lake), std::ref(rec), std::cref(spec), i, seeds[i]);
    }
    for (auto& t : threads) t.join();
    end_trace(*lake, trace, rec);
    return trace;
}

// ---- scripted scenarios ----

Fig1Result scenario_fig1(const fs::path& dir) {
    auto lake = open_harness_lake(dir, 2);
    lake->commit_data("main", {{"a", int_table({"value"}, {{100}})}, {"b", int_table({"value"}, {{500}})}},
                      lake->catalog().head("main"), "U0 writes A and B", "harness");
    Fig1Result out;
    out.trace = begin_trace(*lake, "main");
    Recorder rec;

    // U1 starts its transaction.
    ReadSession u1 = lake->open_session("main");

    // U2 updates B and commits.
    TraceEvent u2;
    u2.agent = 1;
    u2.op = "update_b";
    u2.heads_seen["main"] = lake->catalog().head("main").hex;
    lake->create_branch("u2", "main", "agent1");
    lake->commit_data("u2", {{"b", int_table({"value"}, {{300}})}}, lake->catalog().head("u2"), "U2 sets B=300",
                      "agent1");
    record_merge(lake->catalog(), lake->merge("u2", "main", "agent1"), u2);
    rec.add(std::move(u2));

    // U1 reads B inside its transaction.
    TraceEvent read;
    read.agent = 0;
    read.op = "read_session_scan";
    read.heads_seen["main"] = lake->catalog().head("main").hex;
    read.pinned = u1.pinned.hex;
    for (const char* t : {"a", "b"}) {
        TableData d = lake->read_table(u1, t, "agent0");
        read.reads[t] = SnapshotId{sha256_hex(encode_table(d))};
        if (std::string(t) == "b") out.pinned_read = std::get<std::int64_t>(d.rows.at(0).at(0));
    }
    read.outcome = "Read";
    rec.add(std::move(read));

    ReadSession fresh = lake->open_session("main");
    out.latest_read = std::get<std::int64_t>(lake->read_table(fresh, "b", "agent0").rows.at(0).at(0));
    end_trace(*lake, out.trace, rec);
    return out;
}

namespace {

PipelineSpec fig2_pipeline() {
    return parse_pipeline("pipeline fig2\n"
                          "node a:\n"
                          "  inputs: raw\n"
                          "  env: runtime=python3.11 packages=[]\n"
                          "  materialize: REPLACE\n"
                          "  query: SELECT x * 10 AS x FROM raw\n"
                          "node b:\n"
                          "  inputs: a\n"
                          "  env: runtime=python3.11 packages=[]\n"
                          "  materialize: REPLACE\n"
                          "  query: SELECT count(*) AS n, sum(x) AS total FROM a\n");
}

/// The anti-pattern: every node commits straight to the target. Test double
/// only; the governed API has no way to ask for this.
bool naive_run(Lakehouse& lake, const PipelineSpec& spec, const std::string& target,
               const std::optional<std::string>& fail_after, const std::string& principal,
               const std::function<void(const std::string&)>& after_node) {
    for (const auto& name : topological_order(spec)) {
        const NodeSpec& node = *spec.find(name);
        ReadSession s = lake.open_session(target);
        std::map<std::string, TableData> bindings;
        for (const auto& in : node.inputs) bindings[in] = lake.read_table(s, in, principal);
        lake.commit_data(target, {{node.name, execute_query(node.query, bindings)}}, s.pinned,
                         "naive: materialize " + node.name, principal);
        after_node(node.name);
        if (fail_after && *fail_after == node.name) return false;
    }
    return true;
}

std::size_t ref_moves(const Catalog& catalog, const std::string& branch, std::size_t since) {
    auto log = catalog.reflog();
    return static_cast<std::size_t>(std::count_if(log.begin() + static_cast<std::ptrdiff_t>(since), log.end(),
                                                  [&](const RefUpdate& u) { return u.branch == branch; }));
}

} // namespace

bool Fig2Result::as_expected() const {
    if (variant == RunnerVariant::Naive) return !violations.empty() && !main_unchanged_after_fault;
    return violations.empty() && main_unchanged_after_fault && temp_commits_after_fault == 1 &&
           main_ref_moves_on_success == 1 && success_published_both;
}

Fig2Result scenario_fig2(const fs::path& dir, RunnerVariant variant) {
    auto lake = open_harness_lake(dir, 2);
    lake->commit_data("main",
                      {{"raw", int_table({"x"}, {{1}, {2}, {3}, {4}})},
                       {"a", int_table({"x"}, {{0}})},
                       {"b", int_table({"n", "total"}, {{0, 0}})}},
                      lake->catalog().head("main"), "seed raw, A, B", "harness");
    const PipelineSpec spec = fig2_pipeline();
    Fig2Result out;
    out.variant = variant;

    auto reader = [&](Recorder& rec) {
        TraceEvent e;
        e.agent = 1;
        e.op = "read_session_scan";
        e.heads_seen["main"] = lake->catalog().head("main").hex;
        full_scan(*lake, "main", "agent1", e);
        e.outcome = "Read";
        rec.add(std::move(e));
    };

    // Each half: writer runs; the reader observes main after node a and after
    // the run. Returns the writer's event.
    auto half = [&](Trace& trace, const std::string& run_id, std::optional<std::string> fail_after) {
        trace = begin_trace(*lake, "main");
        Recorder rec;
        TraceEvent w;
        w.agent = 0;
        w.op = fail_after ? "run_pipeline_with_fault" : "run_pipeline";
        w.heads_seen["main"] = trace.initial_head;
        auto after_node = [&](const std::string& node) {
            if (node == "a") reader(rec);
        };
        std::string temp;
        if (variant == RunnerVariant::Transactional) {
            RunOptions o;
            o.principal = "agent0";
            o.run_id = run_id;
            o.fail_after = fail_after;
            o.on_node_committed = after_node;
            RunReport r = lake->run(spec, "main", o);
            w.outcome = std::string(to_string(r.outcome));
            if (r.merge && r.merge->succeeded()) {
                w.merge = merge_record(lake->catalog(), *r.merge);
                w.committed_state = w.merge->result_tables;
            }
            temp = r.temp_branch;
        } else {
            bool done = naive_run(*lake, spec, "main", fail_after, "agent0", after_node);
            w.outcome = done ? "Completed" : "Failed";
            if (done) w.committed_state = lake->catalog().tables_at(lake->catalog().head("main"));
        }
        rec.add(std::move(w));
        reader(rec);
        end_trace(*lake, trace, rec);
        return temp;
    };

    // run_2: fault after node a.
    std::string temp = half(out.failure_trace, "run-2", "a");
    out.main_unchanged_after_fault = out.failure_trace.initial_head == out.failure_trace.final_head;
    if (!temp.empty()) {
        out.temp_commits_after_fault =
            lake->catalog().log(temp).size() - lake->catalog().log(out.failure_trace.initial_head).size();
    }

    // run_1: clean.
    std::size_t mark = lake->catalog().reflog().size();
    half(out.success_trace, "run-1", std::nullopt);
    out.main_ref_moves_on_success = ref_moves(lake->catalog(), "main", mark);
    const TableMap& before = out.success_trace.initial_state;
    const TableMap& after = out.success_trace.final_state;
    ReadSession s = lake->open_session("main");
    TableData a = lake->read_table(s, "a", "agent1");
    TableData b = lake->read_table(s, "b", "agent1");
    TableData expect_a = int_table({"x"}, {{10}, {20}, {30}, {40}});
    TableData expect_b = int_table({"n", "total"}, {{4, 100}});
    out.success_published_both = a == expect_a && b == expect_b && before.at("a") != after.at("a") &&
                                 before.at("b") != after.at("b");

    for (const Trace* t : {&out.failure_trace, &out.success_trace}) {
        auto v = check_isolation(*t);
        out.violations.insert(out.violations.end(), v.begin(), v.end());
    }
    return out;
}

} // namespace lake
