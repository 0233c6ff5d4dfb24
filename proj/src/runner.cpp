#include "lakekernel/runner.hpp"

#include "fsutil.hpp"
#include "lakekernel/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace lake {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(NodeStatus s) {
    switch (s) {
    case NodeStatus::Succeeded: return "Succeeded";
    case NodeStatus::Failed: return "Failed";
    case NodeStatus::Skipped: return "Skipped";
    }
    return "?";
}

std::string_view to_string(RunOutcome o) {
    switch (o) {
    case RunOutcome::Merged: return "Merged";
    case RunOutcome::FailedOpen: return "FailedOpen";
    case RunOutcome::VerifierRejected: return "VerifierRejected";
    case RunOutcome::Denied: return "Denied";
    case RunOutcome::MergeBlocked: return "MergeBlocked";
    case RunOutcome::AwaitingReview: return "AwaitingReview";
    case RunOutcome::Planned: return "Planned";
    }
    return "?";
}

namespace {

template <class E>
E enum_from(const std::string& s, std::initializer_list<E> values) {
    for (E v : values) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown enum value '" + s + "'");
}

MergeResult::Kind merge_kind_from(const std::string& s) {
    using K = MergeResult::Kind;
    return enum_from(s, {K::FastForward, K::MergeCommit, K::Conflict, K::RefRaced});
}

} // namespace

bool operator==(const MergeResult& a, const MergeResult& b) {
    return a.kind == b.kind && a.commit == b.commit && a.conflicts == b.conflicts && a.base == b.base &&
           a.source_head == b.source_head && a.target_head == b.target_head && a.attempts == b.attempts;
}

json to_json(const MergeResult& m) {
    return {{"kind", std::string(to_string(m.kind))}, {"commit", m.commit.hex},
            {"conflicts", m.conflicts},               {"base", m.base.hex},
            {"source_head", m.source_head.hex},       {"target_head", m.target_head.hex},
            {"attempts", m.attempts}};
}

MergeResult merge_result_from_json(const json& j) {
    MergeResult m;
    m.kind = merge_kind_from(j.at("kind"));
    m.commit = {j.at("commit")};
    m.conflicts = j.at("conflicts").get<std::vector<std::string>>();
    m.base = {j.at("base")};
    m.source_head = {j.at("source_head")};
    m.target_head = {j.at("target_head")};
    m.attempts = j.at("attempts");
    return m;
}

json to_json(const RunReport& r) {
    json nodes = json::array();
    for (const auto& n : r.node_results) {
        nodes.push_back({{"node", n.node},
                         {"status", std::string(to_string(n.status))},
                         {"commit", n.commit.hex},
                         {"error", n.error},
                         {"millis", n.millis}});
    }
    json verdicts = json::array();
    for (const auto& v : r.verdicts) {
        verdicts.push_back({{"run_id", v.run_id},
                            {"verifier", v.verifier},
                            {"verdict", std::string(to_string(v.verdict))},
                            {"detail", v.detail},
                            {"evaluated_at", v.evaluated_at.hex}});
    }
    return {{"schema_version", 1},
            {"run_id", r.run_id},
            {"pipeline", r.pipeline},
            {"pipeline_text", r.pipeline_text},
            {"target_branch", r.target_branch},
            {"temp_branch", r.temp_branch},
            {"principal", r.principal},
            {"base_commit", r.base_commit.hex},
            {"final_head", r.final_head.hex},
            {"node_results", nodes},
            {"outcome", std::string(to_string(r.outcome))},
            {"merge", r.merge ? to_json(*r.merge) : json(nullptr)},
            {"rejected_by", r.rejected_by},
            {"reason", r.reason},
            {"verdicts", verdicts},
            {"plan_order", r.plan_order}};
}

RunReport run_report_from_json(const json& j) {
    RunReport r;
    r.run_id = j.at("run_id");
    r.pipeline = j.at("pipeline");
    r.pipeline_text = j.at("pipeline_text");
    r.target_branch = j.at("target_branch");
    r.temp_branch = j.at("temp_branch");
    r.principal = j.at("principal");
    r.base_commit = {j.at("base_commit")};
    r.final_head = {j.at("final_head")};
    for (const auto& n : j.at("node_results")) {
        r.node_results.push_back(
            {n.at("node"),
             enum_from(n.at("status").get<std::string>(),
                       {NodeStatus::Succeeded, NodeStatus::Failed, NodeStatus::Skipped}),
             CommitId{n.at("commit")}, n.at("error"), n.at("millis")});
    }
    r.outcome = enum_from(j.at("outcome").get<std::string>(),
                          {RunOutcome::Merged, RunOutcome::FailedOpen, RunOutcome::VerifierRejected,
                           RunOutcome::Denied, RunOutcome::MergeBlocked, RunOutcome::AwaitingReview,
                           RunOutcome::Planned});
    if (!j.at("merge").is_null()) r.merge = merge_result_from_json(j.at("merge"));
    r.rejected_by = j.at("rejected_by").get<std::vector<std::string>>();
    r.reason = j.at("reason");
    for (const auto& v : j.at("verdicts")) {
        r.verdicts.push_back({v.at("run_id"), v.at("verifier"),
                              enum_from(v.at("verdict").get<std::string>(),
                                        {Verdict::Pass, Verdict::Fail, Verdict::Error}),
                              v.at("detail"), CommitId{v.at("evaluated_at")}});
    }
    r.plan_order = j.at("plan_order").get<std::vector<std::string>>();
    return r;
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "runs"); }

void RunStore::save(const RunReport& report) const {
    detail::atomic_write_file(root_ / "runs" / (report.run_id + ".json"), to_json(report).dump(2));
}

RunReport RunStore::get(const std::string& run_id) const {
    if (run_id.empty() || run_id.find('/') != std::string::npos) {
        throw Error(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
    }
    auto text = detail::read_file(root_ / "runs" / (run_id + ".json"));
    if (!text) throw Error(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
    return run_report_from_json(json::parse(*text));
}

std::vector<RunReport> RunStore::list() const {
    std::vector<RunReport> out;
    for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
        auto name = entry.path().filename().string();
        if (name.front() == '.' || entry.path().extension() != ".json") continue;
        out.push_back(run_report_from_json(json::parse(*detail::read_file(entry.path()))));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
    return out;
}

std::optional<RunReport> RunStore::find_by_temp_branch(std::string_view branch) const {
    // Temp branches are run/<pipeline>/<run_id>.
    auto slash = branch.rfind('/');
    if (branch.rfind("run/", 0) != 0 || slash == std::string_view::npos) return std::nullopt;
    try {
        RunReport r = get(std::string(branch.substr(slash + 1)));
        if (r.temp_branch == branch) return r;
    } catch (const Error&) {
    }
    return std::nullopt;
}

} // namespace lake
