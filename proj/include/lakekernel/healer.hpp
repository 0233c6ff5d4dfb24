#pragma once

#include "lakekernel/lakehouse.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lake {

struct FailureContext {
    RunReport report;
    std::string failed_node;
    std::string error;
    std::string temp_branch;
    CommitId pinned_source;
};

/// InvalidState unless the run ended FailedOpen.
FailureContext failure_context(const RunReport& report);

struct Attempt {
    int number = 0;
    std::string run_id;
    RunOutcome outcome = RunOutcome::Denied;
    std::string reason;
    std::string temp_branch;
};

/// The governed API under one fixed principal. This is all a repair agent
/// gets; there is no catalog or ref access behind it.
class AgentHandle {
public:
    AgentHandle(Lakehouse& lake, std::string principal) : lake_(lake), principal_(std::move(principal)) {}

    const std::string& principal() const { return principal_; }

    ReadSession open_session(std::string_view ref) const { return lake_.open_session(ref); }
    TableData read_table(const ReadSession& s, const std::string& table) { return lake_.read_table(s, table, principal_); }
    TableData query(std::string_view sql, std::string_view ref) { return lake_.query(sql, ref, principal_); }
    std::vector<DiffEntry> diff(std::string_view a, std::string_view b) const { return lake_.catalog().diff(a, b); }

    BranchRef create_branch(const std::string& name, std::string_view from) {
        return lake_.create_branch(name, from, principal_);
    }
    Commit commit_data(const std::string& branch, const std::map<std::string, TableData>& tables,
                       const CommitId& expected_head, const std::string& message) {
        return lake_.commit_data(branch, tables, expected_head, message, principal_);
    }
    MergeResult merge(std::string_view source, const std::string& target) {
        return lake_.merge(source, target, principal_);
    }
    /// Always run-without-merge.
    RunReport run(const PipelineSpec& spec, const std::string& target);

private:
    Lakehouse& lake_;
    std::string principal_;
};

class RepairAgent {
public:
    virtual ~RepairAgent() = default;

    /// A patched pipeline to try next, or nullopt to give up.
    virtual std::optional<PipelineSpec> propose(const FailureContext& failure, const PipelineSpec& original,
                                                const std::vector<Attempt>& history, AgentHandle& api) = 0;
};

/// Tries the patches in order, one per attempt, then gives up.
std::unique_ptr<RepairAgent> baseline_agent(std::vector<PipelineSpec> patches);

/// Every `*.pipe` file in `dir`, in filename order.
std::vector<PipelineSpec> load_patches(const std::filesystem::path& dir);

struct Proposal {
    std::string branch;
    RunReport report;
    std::vector<VerdictRecord> verdicts;
    int attempts = 0;
    std::vector<DiffEntry> diff; // target head vs proposal head
    std::vector<Attempt> history;
};

struct GaveUp {
    std::vector<Attempt> history;
    std::string reason;
};

using HealResult = std::variant<Proposal, GaveUp>;

/// Feeds a FailedOpen run to `agent` for at most `budget` attempts. Each
/// attempt is a run-without-merge on a fresh temp branch; the first one that
/// finishes and passes its verifiers becomes the Proposal. The agent's
/// principal must not hold MergeInto on the target (InvalidArgument).
HealResult heal(Lakehouse& lake, const std::string& run_id, RepairAgent& agent, const std::string& agent_principal,
                int budget);

/// Review-then-merge: publishes a proposal branch if `principal` holds
/// MergeInto(target) and the branch still sits at the verified head
/// (StaleProposal otherwise).
MergeResult approve(Lakehouse& lake, const std::string& proposal_branch, const std::string& principal);

} // namespace lake
