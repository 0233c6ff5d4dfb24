#pragma once

#include "lakekernel/store.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace lake {

struct CommitTag {};
using CommitId = Digest<CommitTag>;

using TableMap = std::map<std::string, SnapshotId>;

/// Seconds since the Unix epoch. Injected so tests and the harness can pin
/// commit ids.
using Clock = std::function<std::int64_t()>;
Clock system_clock();
/// Returns start, start+1, start+2, ... (thread-safe).
Clock counting_clock(std::int64_t start);

struct Commit {
    CommitId id;
    std::vector<CommitId> parents;
    TableMap tables;
    std::string author;
    std::string message;
    std::int64_t timestamp = 0;

    bool operator==(const Commit&) const = default;

    /// Canonical JSON body (sorted keys, no whitespace, no id). The commit id
    /// is its SHA-256.
    std::string canonical_body() const;
    static Commit from_body(const std::string& body);
};

struct BranchRef {
    std::string name;
    CommitId head;
};

/// `[a-z0-9_/.-]+`
bool is_branch_name(std::string_view name);

struct MergeResult {
    enum class Kind { FastForward, MergeCommit, Conflict, RefRaced };

    Kind kind = Kind::FastForward;
    /// New target head for FastForward / MergeCommit.
    CommitId commit;
    std::vector<std::string> conflicts;
    // Inputs of the final attempt.
    CommitId base;
    CommitId source_head;
    CommitId target_head;
    int attempts = 0;

    bool succeeded() const { return kind == Kind::FastForward || kind == Kind::MergeCommit; }
};

std::string_view to_string(MergeResult::Kind kind);

/// A frozen view of one commit. Reads through a session never observe later
/// ref movement.
struct ReadSession {
    CommitId pinned;
    /// The ref the session was opened from; governance checks against it.
    std::string ref;
};

enum class DiffStatus { Added, Removed, Changed };
std::string_view to_string(DiffStatus status);

struct DiffEntry {
    std::string table;
    DiffStatus status;

    bool operator==(const DiffEntry&) const = default;
};

/// A table change in commit_tables; nullopt deletes the table.
using TableChanges = std::map<std::string, std::optional<SnapshotId>>;

/// Per-table three-way rule shared by merge and the serializability checker.
/// Returns the merged map, or the conflicting table names.
struct ThreeWayOutcome {
    TableMap merged;
    std::vector<std::string> conflicts;
};
ThreeWayOutcome three_way_merge(const TableMap& base, const TableMap& source, const TableMap& target);

/// One successful ref update, as recorded in `reflog.jsonl`.
struct RefUpdate {
    std::string branch;
    std::string old_head; // empty on creation
    std::string new_head; // empty on deletion
};

/// Git-like catalog: immutable commits under `commits/<id>`, branch heads in
/// `refs.json`. Every ref mutation is a compare-and-swap performed under an
/// exclusive file lock and published by atomic rename, so it linearizes across
/// threads and processes sharing the directory.
class Catalog {
public:
    Catalog(std::filesystem::path root, SnapshotStore& store, Clock clock = system_clock());

    Catalog(const Catalog&) = delete;
    Catalog& operator=(const Catalog&) = delete;

    /// Creates the root commit and `main` if the directory has no refs yet.
    /// Returns true if it initialized.
    bool initialize(const std::string& author = "system");
    bool initialized() const;

    CommitId head(std::string_view branch) const;
    std::optional<CommitId> try_head(std::string_view branch) const;
    /// Branch name, else full commit id.
    CommitId resolve(std::string_view ref) const;
    std::map<std::string, CommitId> branches() const;
    Commit get_commit(const CommitId& id) const;
    bool has_commit(const CommitId& id) const;

    BranchRef create_branch(const std::string& name, std::string_view from);
    /// False if the branch did not exist. `main` cannot be deleted.
    bool delete_branch(const std::string& name);

    Commit commit_tables(const std::string& branch, const TableChanges& changes,
                         const CommitId& expected_head, const std::string& author,
                         const std::string& message);

    CommitId merge_base(const CommitId& a, const CommitId& b) const;

    /// Three-way, table-granular merge. Performs no snapshot-content I/O.
    MergeResult merge(std::string_view source, const std::string& target, const std::string& author);

    ReadSession open_session(std::string_view ref) const;
    TableData read_table(const ReadSession& session, const std::string& table) const;
    TableMap tables_at(const CommitId& commit) const;

    std::vector<DiffEntry> diff(std::string_view a, std::string_view b) const;
    /// First-parent walk from `ref` back to the root, newest first.
    std::vector<Commit> log(std::string_view ref) const;

    /// Every successful ref update so far, oldest first.
    std::vector<RefUpdate> reflog() const;

    SnapshotStore& store() const { return store_; }
    const std::filesystem::path& root() const { return root_; }

private:
    using Refs = std::map<std::string, std::string>;

    Refs load_refs() const;
    void store_refs(const Refs& refs, const std::vector<RefUpdate>& updates);
    CommitId write_commit(Commit& commit);
    /// CAS one branch; false if its head is not `expected`.
    bool compare_and_swap(const std::string& branch, const CommitId& expected, const CommitId& next);

    std::filesystem::path root_;
    SnapshotStore& store_;
    Clock clock_;

    mutable std::shared_mutex cache_mu_;
    mutable std::unordered_map<std::string, Commit> cache_;
};

} // namespace lake
