#include "lakekernel/error.hpp"
#include "lakekernel/harness.hpp"
#include "lakekernel/healer.hpp"
#include "lakekernel/lakehouse.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lake;

namespace {

struct Config {
    std::string data_dir = "./.lakekernel";
    std::string policy;
    std::string principal;
    bool json_out = false;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Exit status 1 once the outcome has been printed.
struct DomainFailure {
    int code = 1;
};

std::string short_id(const std::string& hex) { return hex.substr(0, 12); }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path policy_path(const Config& cfg) {
    return cfg.policy.empty() ? fs::path(cfg.data_dir) / "policy.toml" : fs::path(cfg.policy);
}

const std::string& principal(const Config& cfg) {
    if (cfg.principal.empty()) throw UsageError("this command needs a principal: pass --as or set LAKE_PRINCIPAL");
    return cfg.principal;
}

std::unique_ptr<Lakehouse> open_lake(const Config& cfg) {
    if (!fs::exists(fs::path(cfg.data_dir) / "refs.json")) {
        throw Error(ErrorCode::NotFound, "no lake at " + cfg.data_dir + " (run `lake init` first)");
    }
    fs::path pp = policy_path(cfg);
    Policy policy = fs::exists(pp) ? load_policy(pp) : Policy{};
    LakehouseOptions o;
    if (const char* start = std::getenv("LAKE_CLOCK_START")) o.clock = counting_clock(std::stoll(start));
    return std::make_unique<Lakehouse>(cfg.data_dir, std::move(policy), std::move(o));
}

json table_json(const TableData& t) {
    json cols = json::array();
    for (const auto& c : t.schema.columns) cols.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    json rows = json::array();
    for (const auto& r : t.rows) {
        json row = json::array();
        for (const auto& v : r) std::visit([&](const auto& x) { row.push_back(x); }, v);
        rows.push_back(std::move(row));
    }
    return {{"columns", cols}, {"rows", rows}};
}

json commit_json(const Commit& c) {
    json parents = json::array();
    for (const auto& p : c.parents) parents.push_back(p.hex);
    json tables = json::object();
    for (const auto& [t, id] : c.tables) tables[t] = id.hex;
    return {{"id", c.id.hex},         {"parents", parents}, {"tables", tables},
            {"author", c.author},     {"message", c.message}, {"timestamp", c.timestamp}};
}

json verifier_json(const VerifierSpec& v) {
    return {{"name", v.name}, {"pipeline", v.pipeline_glob}, {"check", print_query(v.check)},
            {"registered_by", v.registered_by}};
}

json verdict_json(const VerdictRecord& v) {
    return {{"run_id", v.run_id}, {"verifier", v.verifier}, {"verdict", to_string(v.verdict)},
            {"detail", v.detail}, {"evaluated_at", v.evaluated_at.hex}};
}

void emit(const Config& cfg, const json& j, const std::string& text) {
    if (cfg.json_out) {
        std::cout << j.dump(2) << "\n";
    } else if (!text.empty()) {
        std::cout << text << (text.back() == '\n' ? "" : "\n");
    }
}

std::string describe_run(const RunReport& r) {
    std::ostringstream out;
    out << "run " << r.run_id << " " << to_string(r.outcome) << "\n";
    out << "  pipeline " << r.pipeline << " -> " << r.target_branch << " (temp " << r.temp_branch << ")\n";
    for (const auto& n : r.node_results) {
        out << "  " << n.node << " " << to_string(n.status);
        if (!n.error.empty()) out << ": " << n.error;
        out << "\n";
    }
    for (const auto& v : r.verdicts) out << "  verifier " << v.verifier << " " << to_string(v.verdict) << "\n";
    if (!r.plan_order.empty() && r.outcome == RunOutcome::Planned) {
        out << "  plan:";
        for (const auto& n : r.plan_order) out << " " << n;
        out << "\n";
    }
    if (r.merge) out << "  merge " << to_string(r.merge->kind) << " " << short_id(r.merge->commit.hex) << "\n";
    if (!r.reason.empty()) out << "  reason: " << r.reason << "\n";
    return out.str();
}

bool run_ok(RunOutcome o) {
    return o == RunOutcome::Merged || o == RunOutcome::Planned || o == RunOutcome::AwaitingReview;
}

std::string describe_merge(const MergeResult& m) {
    std::string s = std::string(to_string(m.kind));
    if (m.succeeded()) return s + " " + short_id(m.commit.hex);
    for (const auto& c : m.conflicts) s += "\n  conflict: " + c;
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lake: a versioned, governed lakehouse kernel"};
    app.require_subcommand(1);
    app.fallthrough();
    Config cfg;
    app.add_option("--data-dir", cfg.data_dir, "Lake directory")->capture_default_str();
    app.add_option("--policy", cfg.policy, "Policy file (default <data-dir>/policy.toml)");
    app.add_option("--as", cfg.principal, "Acting principal")->envname("LAKE_PRINCIPAL");
    app.add_flag("--json", cfg.json_out, "Machine-readable output");

    std::function<void()> action;

    // init
    auto* init = app.add_subcommand("init", "Create the lake, its root commit and main");
    init->callback([&] {
        action = [&] {
            fs::create_directories(cfg.data_dir);
            fs::path dest = fs::path(cfg.data_dir) / "policy.toml";
            if (!cfg.policy.empty()) {
                std::string text = read_text(cfg.policy);
                parse_policy(text);
                if (fs::absolute(cfg.policy) != fs::absolute(dest)) {
                    std::ofstream(dest, std::ios::binary) << text;
                }
            } else if (!fs::exists(dest)) {
                std::ofstream(dest) << "# default deny: no principals, no roles\nwhitelist = []\n";
            }
            bool fresh = !fs::exists(fs::path(cfg.data_dir) / "refs.json");
            LakehouseOptions o;
            if (const char* start = std::getenv("LAKE_CLOCK_START")) o.clock = counting_clock(std::stoll(start));
            Lakehouse lake(cfg.data_dir, load_policy(dest), std::move(o));
            std::string head = lake.catalog().head("main").hex;
            emit(cfg, {{"data_dir", cfg.data_dir}, {"created", fresh}, {"main", head}},
                 (fresh ? "initialized " : "already initialized ") + cfg.data_dir + " (main at " + short_id(head) +
                     ")");
        };
    });

    // branch
    auto* branch = app.add_subcommand("branch", "Create, list or delete branches");
    branch->require_subcommand(1);
    std::string branch_name, branch_from = "main";
    auto* bcreate = branch->add_subcommand("create", "Create a branch");
    bcreate->add_option("name", branch_name)->required();
    bcreate->add_option("--from", branch_from, "Ref to branch from")->capture_default_str();
    bcreate->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            BranchRef b = lake->create_branch(branch_name, branch_from, principal(cfg));
            emit(cfg, {{"branch", b.name}, {"head", b.head.hex}}, "created " + b.name + " at " + short_id(b.head.hex));
        };
    });
    auto* blist = branch->add_subcommand("list", "List branches");
    blist->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            json j = json::object();
            std::string text;
            for (const auto& [name, head] : lake->catalog().branches()) {
                j[name] = head.hex;
                text += name + " " + short_id(head.hex) + "\n";
            }
            emit(cfg, j, text);
        };
    });
    auto* bdelete = branch->add_subcommand("delete", "Delete a branch");
    bdelete->add_option("name", branch_name)->required();
    bdelete->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            bool existed = lake->delete_branch(branch_name, principal(cfg));
            if (!existed) throw Error(ErrorCode::UnknownBranch, "no branch '" + branch_name + "'");
            emit(cfg, {{"deleted", branch_name}}, "deleted " + branch_name);
        };
    });

    // log / diff
    std::string log_ref = "main";
    auto* log = app.add_subcommand("log", "First-parent history of a ref");
    log->add_option("ref", log_ref)->capture_default_str();
    log->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            json j = json::array();
            std::string text;
            for (const auto& c : lake->catalog().log(log_ref)) {
                j.push_back(commit_json(c));
                text += short_id(c.id.hex) + " " + c.author + " " + c.message + "\n";
            }
            emit(cfg, j, text);
        };
    });
    std::string diff_a, diff_b;
    auto* diff = app.add_subcommand("diff", "Table-level differences between two refs");
    diff->add_option("a", diff_a)->required();
    diff->add_option("b", diff_b)->required();
    diff->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            json j = json::array();
            std::string text;
            for (const auto& d : lake->catalog().diff(diff_a, diff_b)) {
                j.push_back({{"table", d.table}, {"status", to_string(d.status)}});
                text += std::string(to_string(d.status)) + " " + d.table + "\n";
            }
            emit(cfg, j, text.empty() ? "no differences" : text);
        };
    });

    // table import
    auto* table = app.add_subcommand("table", "Table ingestion");
    table->require_subcommand(1);
    std::string import_name, import_csv, import_branch = "main";
    auto* import = table->add_subcommand("import", "Import a CSV file (typed header, canonical values)");
    import->add_option("name", import_name)->required();
    import->add_option("--csv", import_csv)->required();
    import->add_option("--branch", import_branch)->capture_default_str();
    import->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            std::string text = read_text(import_csv);
            if (!text.empty() && text.back() != '\n') text.push_back('\n');
            TableData data = decode_table(text);
            Commit c = lake->import_table(import_branch, import_name, data, principal(cfg));
            std::string sid = c.tables.at(import_name).hex;
            emit(cfg, {{"table", import_name}, {"branch", import_branch}, {"commit", c.id.hex}, {"snapshot", sid},
                       {"rows", data.rows.size()}},
                 "imported " + import_name + " (" + std::to_string(data.rows.size()) + " rows) into " +
                     import_branch + ": commit " + short_id(c.id.hex) + ", snapshot " + short_id(sid));
        };
    });

    // query
    std::string sql, query_ref = "main";
    auto* query = app.add_subcommand("query", "Run a query on a pinned read session");
    query->add_option("sql", sql)->required();
    query->add_option("--ref", query_ref)->capture_default_str();
    query->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            TableData t = lake->query(sql, query_ref, principal(cfg));
            emit(cfg, table_json(t), encode_table(t));
        };
    });

    // run
    std::string pipe_file, run_branch = "main", fail_after, run_id;
    bool dry_run = false, no_merge = false;
    auto* run = app.add_subcommand("run", "Run a pipeline transactionally");
    run->add_option("pipeline", pipe_file, "Pipeline file")->required();
    run->add_option("--branch", run_branch, "Target branch")->capture_default_str();
    run->add_option("--fail-after", fail_after, "Inject a fault after this node commits");
    run->add_flag("--dry-run", dry_run, "Plan only; no writes");
    run->add_flag("--no-merge", no_merge, "Stop after verification and leave the branch for review");
    run->add_option("--run-id", run_id, "Fixed run id");
    run->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            RunOptions o;
            o.principal = principal(cfg);
            if (!fail_after.empty()) o.fail_after = fail_after;
            if (!run_id.empty()) o.run_id = run_id;
            o.dry_run = dry_run;
            o.merge = !no_merge;
            RunReport r = lake->run(parse_pipeline(read_text(pipe_file)), run_branch, o);
            emit(cfg, to_json(r), describe_run(r));
            if (!run_ok(r.outcome)) throw DomainFailure{};
        };
    });

    // merge
    std::string merge_source, merge_target;
    auto* merge = app.add_subcommand("merge", "Merge a ref into a branch");
    merge->add_option("source", merge_source)->required();
    merge->add_option("--into", merge_target)->required();
    merge->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            MergeResult m = lake->merge(merge_source, merge_target, principal(cfg));
            emit(cfg, to_json(m), describe_merge(m));
            if (!m.succeeded()) throw DomainFailure{};
        };
    });

    // verifier
    auto* verifier = app.add_subcommand("verifier", "Register, list or run verifiers");
    verifier->require_subcommand(1);
    std::string v_name, v_pipeline = "*", v_check, v_run;
    auto* vreg = verifier->add_subcommand("register", "Register a verifier");
    vreg->add_option("name", v_name)->required();
    vreg->add_option("--pipeline", v_pipeline, "Pipeline name pattern")->capture_default_str();
    vreg->add_option("--check", v_check, "Query yielding one boolean row")->required();
    vreg->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            VerifierSpec spec{v_name, v_pipeline, parse_query(v_check), {}};
            lake->register_verifier(spec, principal(cfg));
            spec.registered_by = principal(cfg);
            emit(cfg, verifier_json(spec), "registered verifier " + v_name);
        };
    });
    auto* vlist = verifier->add_subcommand("list", "List verifiers");
    vlist->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            json j = json::array();
            std::string text;
            for (const auto& v : lake->verifiers().list()) {
                j.push_back(verifier_json(v));
                text += v.name + " [" + v.pipeline_glob + "] " + print_query(v.check) + "\n";
            }
            emit(cfg, j, text);
        };
    });
    auto* vrun = verifier->add_subcommand("run", "Evaluate verifiers on a run's temp branch head");
    vrun->add_option("run_id", v_run)->required();
    vrun->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            json j = json::array();
            std::string text;
            bool all_pass = true;
            for (const auto& v : lake->run_verifiers(v_run, principal(cfg))) {
                j.push_back(verdict_json(v));
                text += v.verifier + " " + std::string(to_string(v.verdict)) +
                        (v.detail.empty() ? "" : ": " + v.detail) + "\n";
                all_pass = all_pass && v.verdict == Verdict::Pass;
            }
            emit(cfg, j, text.empty() ? "no matching verifiers" : text);
            if (!all_pass) throw DomainFailure{};
        };
    });

    // simulate / check
    WorkloadSpec wl;
    std::string sim_out, sim_workdir;
    std::vector<double> mix;
    auto* simulate_cmd = app.add_subcommand("simulate", "Run a concurrent agent workload and record a trace");
    simulate_cmd->add_option("--agents", wl.n_agents)->capture_default_str();
    simulate_cmd->add_option("--ops", wl.ops_per_agent)->capture_default_str();
    simulate_cmd->add_option("--seed", wl.seed)->capture_default_str();
    simulate_cmd->add_option("--mix", mix, "Weights: scan,run,run-with-fault,branch-and-merge")->expected(4)->delimiter(',');
    simulate_cmd->add_option("--out", sim_out, "Trace file")->required();
    simulate_cmd->add_option("--workdir", sim_workdir, "Fresh directory for the simulated lake");
    simulate_cmd->callback([&] {
        action = [&] {
            if (!mix.empty()) wl.mix = {mix[0], mix[1], mix[2], mix[3]};
            fs::path dir = sim_workdir.empty() ? fs::path(cfg.data_dir) / "sim" / std::to_string(wl.seed) : fs::path(sim_workdir);
            if (fs::exists(dir) && !fs::is_empty(dir)) {
                throw Error(ErrorCode::InvalidArgument, dir.string() + " is not empty; simulations need a fresh lake");
            }
            Trace t = simulate(dir, wl);
            std::ofstream(sim_out) << to_json(t).dump(2) << "\n";
            std::size_t merges = std::count_if(t.events.begin(), t.events.end(),
                                               [](const TraceEvent& e) { return e.committed_state.has_value(); });
            emit(cfg, {{"trace", sim_out}, {"workdir", dir.string()}, {"events", t.events.size()}, {"merges", merges}},
                 "recorded " + std::to_string(t.events.size()) + " events (" + std::to_string(merges) +
                     " published) to " + sim_out);
        };
    });
    std::string trace_file;
    auto* check = app.add_subcommand("check", "Check a recorded trace for isolation and serializability");
    check->add_option("--trace", trace_file)->required();
    check->callback([&] {
        action = [&] {
            Trace t = trace_from_json(json::parse(read_text(trace_file)));
            auto iso = check_isolation(t);
            json j = {{"isolation", {{"ok", iso.empty()}, {"violations", json::array()}}}};
            std::string text = "isolation: " + std::string(iso.empty() ? "ok" : "VIOLATED") + "\n";
            for (const auto& v : iso) {
                j["isolation"]["violations"].push_back({{"seq", v.seq}, {"detail", v.detail}});
                text += "  #" + std::to_string(v.seq) + " " + v.detail + "\n";
            }
            bool ser_ok = true;
            try {
                auto s = check_serializability(t);
                ser_ok = s.ok;
                j["serializability"] = {{"ok", s.ok}, {"witness", s.witness}, {"detail", s.detail}};
                text += "serializability: " + std::string(s.ok ? "ok" : "VIOLATED " + s.detail) + "\n";
            } catch (const Error& e) {
                if (e.code() != ErrorCode::TooLarge) throw;
                j["serializability"] = {{"ok", nullptr}, {"skipped", e.what()}};
                text += std::string("serializability: skipped (") + e.what() + ")\n";
            }
            emit(cfg, j, text);
            if (!iso.empty() || !ser_ok) throw DomainFailure{};
        };
    });

    // heal / approve
    std::string heal_run, heal_patches;
    int budget = 3;
    auto* heal_cmd = app.add_subcommand("heal", "Let a repair agent fix a failed run on a branch");
    heal_cmd->add_option("--run", heal_run)->required();
    heal_cmd->add_option("--patches", heal_patches, "Directory of candidate *.pipe rewrites")->required();
    heal_cmd->add_option("--budget", budget)->capture_default_str();
    heal_cmd->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            auto agent = baseline_agent(load_patches(heal_patches));
            HealResult r = heal(*lake, heal_run, *agent, principal(cfg), budget);
            auto history_json = [](const std::vector<Attempt>& h) {
                json a = json::array();
                for (const auto& x : h) {
                    a.push_back({{"attempt", x.number}, {"run_id", x.run_id}, {"outcome", to_string(x.outcome)},
                                 {"reason", x.reason}, {"temp_branch", x.temp_branch}});
                }
                return a;
            };
            if (auto* p = std::get_if<Proposal>(&r)) {
                json diff = json::array();
                std::string text = "proposal " + p->branch + " after " + std::to_string(p->attempts) + " attempt(s)\n";
                for (const auto& d : p->diff) {
                    diff.push_back({{"table", d.table}, {"status", to_string(d.status)}});
                    text += "  " + std::string(to_string(d.status)) + " " + d.table + "\n";
                }
                emit(cfg, {{"result", "Proposal"}, {"branch", p->branch}, {"attempts", p->attempts},
                           {"diff", diff}, {"report", to_json(p->report)}, {"history", history_json(p->history)}},
                     text);
            } else {
                auto& g = std::get<GaveUp>(r);
                std::string text = "gave up: " + g.reason + "\n";
                for (const auto& x : g.history) {
                    text += "  attempt " + std::to_string(x.number) + " " + std::string(to_string(x.outcome)) +
                            (x.reason.empty() ? "" : ": " + x.reason) + "\n";
                }
                emit(cfg, {{"result", "GaveUp"}, {"reason", g.reason}, {"history", history_json(g.history)}}, text);
                throw DomainFailure{};
            }
        };
    });
    std::string proposal;
    auto* approve_cmd = app.add_subcommand("approve", "Merge a verified proposal branch");
    approve_cmd->add_option("--proposal", proposal)->required();
    approve_cmd->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            MergeResult m = approve(*lake, proposal, principal(cfg));
            emit(cfg, to_json(m), describe_merge(m));
            if (!m.succeeded()) throw DomainFailure{};
        };
    });

    // runs
    auto* runs = app.add_subcommand("runs", "Inspect run reports");
    runs->require_subcommand(1);
    std::string show_id;
    auto* rlist = runs->add_subcommand("list", "List runs");
    rlist->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            json j = json::array();
            std::string text;
            for (const auto& r : lake->list_runs()) {
                j.push_back({{"run_id", r.run_id}, {"pipeline", r.pipeline}, {"outcome", to_string(r.outcome)},
                             {"target_branch", r.target_branch}, {"temp_branch", r.temp_branch}});
                text += r.run_id + " " + r.pipeline + " " + std::string(to_string(r.outcome)) + "\n";
            }
            emit(cfg, j, text);
        };
    });
    auto* rshow = runs->add_subcommand("show", "Show one run report");
    rshow->add_option("run_id", show_id)->required();
    rshow->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            RunReport r = lake->get_run(show_id);
            emit(cfg, to_json(r), describe_run(r));
        };
    });
    auto* rclean = runs->add_subcommand("cleanup", "Delete a run's temp branch");
    rclean->add_option("run_id", show_id)->required();
    rclean->callback([&] {
        action = [&] {
            auto lake = open_lake(cfg);
            lake->cleanup_temp(show_id, principal(cfg));
            emit(cfg, {{"cleaned", show_id}}, "cleaned up run " + show_id);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    try {
        action();
        return 0;
    } catch (const DomainFailure& f) {
        return f.code;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        if (cfg.json_out) {
            std::cout << json{{"error", to_string(e.code())}, {"message", e.what()}}.dump(2) << "\n";
        } else {
            std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
