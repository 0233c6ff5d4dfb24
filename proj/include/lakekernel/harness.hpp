#pragma once

#include "lakekernel/catalog.hpp"
#include "lakekernel/governance.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lake {

struct WorkloadMix {
    double read_session_scan = 1;
    double run_pipeline = 1;
    double run_pipeline_with_fault = 1;
    double branch_and_merge = 1;
};

struct WorkloadSpec {
    int n_agents = 1;
    int ops_per_agent = 1;
    WorkloadMix mix;
    std::uint64_t seed = 0;

    /// InvalidArgument on negative weights, a zero total, or non-positive counts.
    void validate() const;
};

/// A ref move on the target branch together with the three table maps it
/// was computed from.
struct MergeRecord {
    std::string kind;
    std::string commit;
    TableMap base_tables;
    TableMap source_tables;
    TableMap target_tables;
    TableMap result_tables;

    bool operator==(const MergeRecord&) const = default;
};

struct TraceEvent {
    std::uint64_t seq = 0;
    int agent = 0;
    std::string op;
    std::map<std::string, std::string> heads_seen;
    /// Commit a read session was pinned at; empty when the op read nothing.
    std::string pinned;
    /// Table -> id of the bytes actually read.
    TableMap reads;
    std::string outcome;
    std::optional<MergeRecord> merge;
    /// State this op published as a complete transaction, if any.
    std::optional<TableMap> committed_state;

    bool operator==(const TraceEvent&) const = default;
};

struct Trace {
    std::string branch = "main";
    std::string initial_head;
    TableMap initial_state;
    std::vector<TraceEvent> events; // ascending seq
    std::string final_head;
    TableMap final_state;

    bool operator==(const Trace&) const = default;
};

nlohmann::json to_json(const Trace& trace);
Trace trace_from_json(const nlohmann::json& j);

struct IsolationViolation {
    std::uint64_t seq = 0;
    std::string detail;
};

/// Every read must equal, table for table, the initial state or the state
/// committed by some complete transaction in the trace.
std::vector<IsolationViolation> check_isolation(const Trace& trace);

struct SerializabilityResult {
    bool ok = false;
    /// Seqs of the merges in a witness order when ok.
    std::vector<std::uint64_t> witness;
    std::string detail;
};

constexpr std::size_t max_serializable_merges = 6;

/// Searches permutations of the successful merges for one whose sequential
/// three-way application to the initial state yields the final state.
/// Throws TooLarge above max_serializable_merges.
SerializabilityResult check_serializability(const Trace& trace);

/// The policy simulate installs: `harness` plus `agent0..agent{n-1}`, each
/// allowed everything except policy management.
Policy harness_policy(int n_agents);

/// Runs the workload against a lake at `dir` (created and seeded if empty)
/// with one thread per agent.
Trace simulate(const std::filesystem::path& dir, const WorkloadSpec& spec);

struct Fig1Result {
    std::int64_t pinned_read = 0;
    std::int64_t latest_read = 0;
    Trace trace;
};

/// U1 pins a session, U2 updates B from 500 to 300, U1 reads B.
Fig1Result scenario_fig1(const std::filesystem::path& dir);

enum class RunnerVariant { Naive, Transactional };

struct Fig2Result {
    RunnerVariant variant;
    Trace failure_trace; // fault after the first node, reader in between
    Trace success_trace; // clean run, reader in between
    bool main_unchanged_after_fault = false;
    /// Commits the failed run left on its temp branch (naive: 0).
    std::size_t temp_commits_after_fault = 0;
    /// Moves of main during the successful run.
    std::size_t main_ref_moves_on_success = 0;
    bool success_published_both = false;
    std::vector<IsolationViolation> violations;

    /// Transactional: isolation holds and publication is atomic.
    /// Naive: the torn state was observed.
    bool as_expected() const;
};

/// Two-node pipeline A -> B, replayed with a single-threaded script.
/// The naive variant commits each node straight to main.
Fig2Result scenario_fig2(const std::filesystem::path& dir, RunnerVariant variant);

} // namespace lake
