#pragma once

#include "lakekernel/catalog.hpp"
#include "lakekernel/verify.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lake {

enum class NodeStatus { Succeeded, Failed, Skipped };
std::string_view to_string(NodeStatus s);

struct NodeResult {
    std::string node;
    NodeStatus status = NodeStatus::Skipped;
    CommitId commit; // Succeeded
    std::string error; // Failed
    std::int64_t millis = 0;

    bool operator==(const NodeResult&) const = default;
};

enum class RunOutcome {
    Merged,           // every node succeeded, verifiers passed, published to target
    FailedOpen,       // a node failed; temp branch left open, target untouched
    VerifierRejected, // nodes succeeded but a verifier did not pass
    Denied,           // governance refused before any side effect
    MergeBlocked,     // publication hit a conflict or lost the ref race
    AwaitingReview,   // run-without-merge finished and verified
    Planned,          // dry run
};
std::string_view to_string(RunOutcome o);

struct RunOptions {
    std::string principal;
    /// Fault injection: fail the run right after this node commits.
    std::optional<std::string> fail_after;
    bool dry_run = false;
    /// False leaves a verified temp branch for review instead of merging.
    bool merge = true;
    /// Fixed run id (tests, harness); otherwise a random UUIDv4.
    std::optional<std::string> run_id;
    /// Called after each node's commit lands on the temp branch. Scripted
    /// schedules use it to interleave other callers.
    std::function<void(const std::string& node)> on_node_committed;
};

struct RunReport {
    std::string run_id;
    std::string pipeline;
    std::string pipeline_text;
    std::string target_branch;
    std::string temp_branch;
    std::string principal;
    CommitId base_commit; // target head the temp branch was cut from
    CommitId final_head;  // temp head after the last node commit
    std::vector<NodeResult> node_results;
    RunOutcome outcome = RunOutcome::Denied;
    std::optional<MergeResult> merge;
    std::vector<std::string> rejected_by;
    std::string reason;
    std::vector<VerdictRecord> verdicts;
    std::vector<std::string> plan_order;

    bool operator==(const RunReport&) const = default;
};

bool operator==(const MergeResult& a, const MergeResult& b);

nlohmann::json to_json(const MergeResult& m);
MergeResult merge_result_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

/// Reports as `<root>/runs/<run_id>.json`.
class RunStore {
public:
    explicit RunStore(std::filesystem::path root);

    void save(const RunReport& report) const;
    RunReport get(const std::string& run_id) const;
    std::vector<RunReport> list() const;
    std::optional<RunReport> find_by_temp_branch(std::string_view branch) const;

private:
    std::filesystem::path root_;
};

} // namespace lake
