#include "lakekernel/lakehouse.hpp"

#include "lakekernel/error.hpp"

#include <algorithm>
#include <chrono>

namespace lake {

namespace fs = std::filesystem;

namespace {

std::optional<fs::path> audit_path(const fs::path& dir, bool enabled) {
    if (!enabled) return std::nullopt;
    return dir / "audit.jsonl";
}

fs::path ensure_dir(fs::path dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + dir.string() + ": " + ec.message());
    return dir;
}

} // namespace

Lakehouse::Lakehouse(fs::path data_dir, Policy policy, LakehouseOptions options)
    : data_dir_(ensure_dir(std::move(data_dir))),
      options_(std::move(options)),
      store_(data_dir_),
      catalog_(data_dir_, store_, options_.clock),
      governance_(std::move(policy), audit_path(data_dir_, options_.audit_to_file)),
      verifiers_(data_dir_),
      runs_(data_dir_) {
    catalog_.initialize();
}

void Lakehouse::require(const std::string& principal, std::string_view api, std::span<const Action> actions) {
    Decision d = governance_.check(principal, api, actions);
    if (!d) throw Error(ErrorCode::Denied, d.reason);
}

BranchRef Lakehouse::create_branch(const std::string& name, std::string_view from, const std::string& principal) {
    require(principal, "create_branch", Action::create_branch(name));
    return catalog_.create_branch(name, from);
}

bool Lakehouse::delete_branch(const std::string& name, const std::string& principal) {
    require(principal, "delete_branch", Action::write_branch(name));
    return catalog_.delete_branch(name);
}

Commit Lakehouse::commit_data(const std::string& branch, const std::map<std::string, TableData>& tables,
                              const CommitId& expected_head, const std::string& message,
                              const std::string& principal) {
    require(principal, "commit", Action::write_branch(branch));
    TableChanges changes;
    for (const auto& [name, data] : tables) changes[name] = store_.put(data);
    return catalog_.commit_tables(branch, changes, expected_head, principal, message);
}

Commit Lakehouse::commit_tables(const std::string& branch, const TableChanges& changes,
                                const CommitId& expected_head, const std::string& message,
                                const std::string& principal) {
    require(principal, "commit", Action::write_branch(branch));
    return catalog_.commit_tables(branch, changes, expected_head, principal, message);
}

Commit Lakehouse::import_table(const std::string& branch, const std::string& table, const TableData& data,
                               const std::string& principal) {
    require(principal, "import_table", Action::write_branch(branch));
    if (!is_identifier(table)) throw Error(ErrorCode::InvalidArgument, "invalid table name '" + table + "'");
    SnapshotId sid = store_.put(data);
    for (int attempt = 0;; ++attempt) {
        try {
            return catalog_.commit_tables(branch, {{table, sid}}, catalog_.head(branch), principal,
                                          "import " + table);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::StaleHead || attempt >= 4) throw;
        }
    }
}

TableData Lakehouse::read_table(const ReadSession& session, const std::string& table, const std::string& principal) {
    require(principal, "read_table", Action::read_table(session.ref, table));
    return catalog_.read_table(session, table);
}

TableData Lakehouse::query(std::string_view sql, std::string_view ref, const std::string& principal) {
    QueryAst ast = parse_query(sql);
    ReadSession session = catalog_.open_session(ref);
    std::vector<Action> actions;
    for (const auto& t : ast.inputs()) actions.push_back(Action::read_table(session.ref, t));
    require(principal, "query", actions);
    std::map<std::string, TableData> bindings;
    for (const auto& t : ast.inputs()) bindings[t] = catalog_.read_table(session, t);
    return execute_query(ast, bindings);
}

MergeResult Lakehouse::merge(std::string_view source, const std::string& target, const std::string& principal,
                             const std::optional<CommitId>& expected_source_head) {
    require(principal, "merge", Action::merge_into(target));
    CommitId source_head = catalog_.resolve(source);
    if (expected_source_head && *expected_source_head != source_head) {
        throw Error(ErrorCode::StaleProposal, std::string(source) + " moved to " + source_head.hex.substr(0, 12) +
                                                  " after verification at " +
                                                  expected_source_head->hex.substr(0, 12));
    }
    for (const auto& v : verifiers_.verdicts_at(source_head)) {
        if (v.verdict != Verdict::Pass) {
            throw Error(ErrorCode::VerifierFailed, "verifier '" + v.verifier + "' recorded " +
                                                       std::string(to_string(v.verdict)) + " at " +
                                                       source_head.hex.substr(0, 12) + ": " + v.detail);
        }
    }
    return catalog_.merge(source_head.hex, target, principal);
}

std::vector<VerdictRecord> Lakehouse::evaluate_verifiers(const std::string& run_id, const std::string& pipeline,
                                                         const CommitId& head) {
    ReadSession session{head, head.hex};
    std::vector<VerdictRecord> out;
    for (const auto& v : verifiers_.matching(pipeline)) {
        out.push_back(evaluate_verifier(v, catalog_, session, run_id));
    }
    verifiers_.record(out);
    return out;
}

std::vector<VerdictRecord> Lakehouse::run_verifiers(const std::string& run_id, const std::string& principal) {
    RunReport report = runs_.get(run_id);
    require(principal, "run_verifiers", Action::run_pipeline(report.pipeline));
    if (std::any_of(report.node_results.begin(), report.node_results.end(),
                    [](const NodeResult& n) { return n.status != NodeStatus::Succeeded; }) ||
        report.node_results.empty()) {
        throw Error(ErrorCode::InvalidState, "run " + run_id + " did not complete every node");
    }
    return evaluate_verifiers(run_id, report.pipeline, catalog_.head(report.temp_branch));
}

void Lakehouse::register_verifier(const VerifierSpec& spec, const std::string& principal) {
    require(principal, "register_verifier", Action::register_verifier());
    VerifierSpec stored = spec;
    stored.registered_by = principal;
    verifiers_.add(stored);
}

void Lakehouse::reload_policy(Policy policy, const std::string& principal) {
    require(principal, "reload_policy", Action::manage_policy());
    governance_.replace_policy(std::move(policy));
}

void Lakehouse::cleanup_temp(const std::string& run_id, const std::string& principal) {
    RunReport report = runs_.get(run_id);
    require(principal, "cleanup_temp", Action::write_branch(report.temp_branch));
    catalog_.delete_branch(report.temp_branch);
}

RunReport Lakehouse::run(const PipelineSpec& spec, const std::string& target, const RunOptions& options) {
    RunReport report;
    report.run_id = options.run_id ? *options.run_id : options_.run_ids();
    report.pipeline = spec.name;
    report.pipeline_text = print_pipeline(spec);
    report.target_branch = target;
    report.temp_branch = "run/" + spec.name + "/" + report.run_id;
    if (report.run_id.empty() || report.run_id.find('/') != std::string::npos || !is_branch_name(report.temp_branch)) {
        throw Error(ErrorCode::InvalidArgument, "invalid run id '" + report.run_id + "'");
    }
    report.principal = options.principal;
    for (const auto& n : spec.nodes) report.node_results.push_back({n.name, NodeStatus::Skipped, {}, {}, 0});

    const std::vector<std::string> sources = spec.source_tables();
    std::vector<Action> actions{Action::run_pipeline(spec.name)};
    if (!options.dry_run) {
        actions.push_back(Action::create_branch(report.temp_branch));
        actions.push_back(Action::write_branch(report.temp_branch));
    }
    for (const auto& s : sources) actions.push_back(Action::read_table(target, s));
    if (options.merge && !options.dry_run) actions.push_back(Action::merge_into(target));
    Decision decision = governance_.check(options.principal, "run", actions);
    if (!decision) {
        report.outcome = RunOutcome::Denied;
        report.reason = decision.reason;
        return report;
    }
    std::vector<std::string> violations;
    auto policy = governance_.policy();
    for (const auto& n : spec.nodes) {
        for (auto& pkg : check_env(*policy, n.env)) {
            if (std::find(violations.begin(), violations.end(), pkg) == violations.end()) violations.push_back(pkg);
        }
    }
    if (!violations.empty()) {
        report.outcome = RunOutcome::Denied;
        report.reason = "packages not whitelisted:";
        for (const auto& v : violations) report.reason += " " + v;
        return report;
    }
    if (options.fail_after && !spec.find(*options.fail_after)) {
        throw Error(ErrorCode::InvalidArgument, "--fail-after names unknown node '" + *options.fail_after + "'");
    }

    // (1) temp branch, cut from the target head.
    report.base_commit = catalog_.head(target);
    if (options.dry_run) {
        ReadSession session{report.base_commit, target};
        std::map<std::string, Schema> schemas;
        for (const auto& s : sources) schemas[s] = catalog_.read_table(session, s).schema;
        report.plan_order = plan(spec, schemas).order;
        report.outcome = RunOutcome::Planned;
        return report;
    }
    catalog_.create_branch(report.temp_branch, report.base_commit.hex);

    // (2) sources come from a session pinned at the temp branch's first head.
    ReadSession session = catalog_.open_session(report.temp_branch);
    CommitId head = session.pinned;
    std::map<std::string, TableData> tables;

    // (3) nodes in order, one commit each; stop at the first failure.
    std::vector<std::string> order = topological_order(spec);
    for (const auto& name : order) report.plan_order.push_back(name);
    bool failed = false;
    for (std::size_t i = 0; i < order.size() && !failed; ++i) {
        const NodeSpec& node = *spec.find(order[i]);
        auto& result = *std::find_if(report.node_results.begin(), report.node_results.end(),
                                     [&](const NodeResult& r) { return r.node == node.name; });
        auto start = std::chrono::steady_clock::now();
        try {
            std::map<std::string, TableData> bindings;
            for (const auto& in : node.inputs) {
                auto it = tables.find(in);
                if (it == tables.end()) {
                    if (spec.find(in)) throw Error(ErrorCode::UnknownInput, "upstream node '" + in + "' has no output");
                    it = tables.emplace(in, catalog_.read_table(session, in)).first;
                }
                bindings.emplace(in, it->second);
            }
            TableData out = execute_query(node.query, bindings);
            SnapshotId sid = store_.put(out);
            Commit c = catalog_.commit_tables(report.temp_branch, {{node.name, sid}}, head, options.principal,
                                              "run " + report.run_id + ": materialize " + node.name);
            head = c.id;
            tables[node.name] = std::move(out);
            result.status = NodeStatus::Succeeded;
            result.commit = c.id;
            if (options.on_node_committed) options.on_node_committed(node.name);
        } catch (const std::exception& e) {
            result.status = NodeStatus::Failed;
            result.error = e.what();
            if (auto* err = dynamic_cast<const Error*>(&e)) {
                result.error = std::string(to_string(err->code())) + ": " + e.what();
            }
            report.reason = "node '" + node.name + "' failed: " + result.error;
            failed = true;
        }
        result.millis = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                            .count();
        if (!failed && options.fail_after && node.name == *options.fail_after) {
            failed = true;
            std::string fault = "injected fault after node '" + node.name + "'";
            report.reason = fault;
            if (i + 1 < order.size()) {
                auto& next = *std::find_if(report.node_results.begin(), report.node_results.end(),
                                           [&](const NodeResult& r) { return r.node == order[i + 1]; });
                next.status = NodeStatus::Failed;
                next.error = fault;
            }
        }
    }
    report.final_head = head;
    if (failed) {
        // Temp branch stays open; the target was never touched.
        report.outcome = RunOutcome::FailedOpen;
        runs_.save(report);
        return report;
    }

    // (4) verifier gate, then publish.
    report.verdicts = evaluate_verifiers(report.run_id, spec.name, head);
    for (const auto& v : report.verdicts) {
        if (v.verdict != Verdict::Pass) report.rejected_by.push_back(v.verifier);
    }
    if (!report.rejected_by.empty()) {
        report.outcome = RunOutcome::VerifierRejected;
    } else if (!options.merge) {
        report.outcome = RunOutcome::AwaitingReview;
    } else {
        report.merge = catalog_.merge(head.hex, target, options.principal);
        report.outcome = report.merge->succeeded() ? RunOutcome::Merged : RunOutcome::MergeBlocked;
        if (!report.merge->succeeded()) report.reason = "merge " + std::string(to_string(report.merge->kind));
    }
    runs_.save(report);
    return report;
}

} // namespace lake
