#pragma once

#include "lakekernel/catalog.hpp"
#include "lakekernel/governance.hpp"
#include "lakekernel/pipeline.hpp"
#include "lakekernel/runner.hpp"
#include "lakekernel/store.hpp"
#include "lakekernel/verify.hpp"

#include "lakekernel/hash.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>

namespace lake {

struct LakehouseOptions {
    Clock clock = system_clock();
    /// Source of run ids when RunOptions::run_id is unset.
    std::function<std::string()> run_ids = random_uuid_v4;
    /// Mirror audit records to `<data_dir>/audit.jsonl`.
    bool audit_to_file = true;
};

/// The governed API. Every data read, every mutation, every run and every
/// verifier registration authorizes exactly once through Governance.
/// Metadata (heads, log, diff, reports) is readable without a grant.
class Lakehouse {
public:
    /// Opens `data_dir`, creating the root commit and `main` on first use.
    Lakehouse(std::filesystem::path data_dir, Policy policy, LakehouseOptions options = {});

    Lakehouse(const Lakehouse&) = delete;
    Lakehouse& operator=(const Lakehouse&) = delete;

    const std::filesystem::path& data_dir() const { return data_dir_; }
    const Catalog& catalog() const { return catalog_; }
    const SnapshotStore& store() const { return store_; }
    Governance& governance() { return governance_; }
    const RunStore& runs() const { return runs_; }
    const VerifierRegistry& verifiers() const { return verifiers_; }

    // Branches
    BranchRef create_branch(const std::string& name, std::string_view from, const std::string& principal);
    /// False when the branch was already gone.
    bool delete_branch(const std::string& name, const std::string& principal);

    // Writes
    /// Stores each table and commits them together on `branch`, CAS against
    /// `expected_head`.
    Commit commit_data(const std::string& branch, const std::map<std::string, TableData>& tables,
                       const CommitId& expected_head, const std::string& message, const std::string& principal);
    Commit commit_tables(const std::string& branch, const TableChanges& changes, const CommitId& expected_head,
                         const std::string& message, const std::string& principal);
    /// Blind replace of one table at the current head (retries lost races).
    Commit import_table(const std::string& branch, const std::string& table, const TableData& data,
                        const std::string& principal);

    // Reads
    ReadSession open_session(std::string_view ref) const { return catalog_.open_session(ref); }
    TableData read_table(const ReadSession& session, const std::string& table, const std::string& principal);
    /// Runs an ad-hoc query against a pinned session on `ref`.
    TableData query(std::string_view sql, std::string_view ref, const std::string& principal);

    /// Manual merge. Requires MergeInto(target). Refused with VerifierFailed
    /// when a recorded verdict at the source head is not Pass, and with
    /// StaleProposal when `expected_source_head` is given and differs. The
    /// commit merged is the one those checks saw.
    MergeResult merge(std::string_view source, const std::string& target, const std::string& principal,
                      const std::optional<CommitId>& expected_source_head = std::nullopt);

    /// Transactional run: temp branch, per-node commits, verifier gate, merge.
    RunReport run(const PipelineSpec& spec, const std::string& target, const RunOptions& options);
    RunReport get_run(const std::string& run_id) const { return runs_.get(run_id); }
    std::vector<RunReport> list_runs() const { return runs_.list(); }
    /// Deletes a run's temp branch; snapshots and commits stay.
    void cleanup_temp(const std::string& run_id, const std::string& principal);

    void register_verifier(const VerifierSpec& spec, const std::string& principal);
    /// Evaluates every verifier matching the run's pipeline at the current
    /// head of its temp branch and records the verdicts. Requires
    /// RunPipeline on the run's pipeline.
    std::vector<VerdictRecord> run_verifiers(const std::string& run_id, const std::string& principal);

    void reload_policy(Policy policy, const std::string& principal);

private:
    void require(const std::string& principal, std::string_view api, std::span<const Action> actions);
    void require(const std::string& principal, std::string_view api, const Action& action) {
        require(principal, api, std::span<const Action>(&action, 1));
    }
    std::vector<VerdictRecord> evaluate_verifiers(const std::string& run_id, const std::string& pipeline,
                                                  const CommitId& head);

    std::filesystem::path data_dir_;
    LakehouseOptions options_;
    SnapshotStore store_;
    Catalog catalog_;
    Governance governance_;
    VerifierRegistry verifiers_;
    RunStore runs_;
};

} // namespace lake
