#pragma once

#include "lakekernel/catalog.hpp"
#include "lakekernel/error.hpp"
#include "lakekernel/governance.hpp"
#include "lakekernel/harness.hpp"
#include "lakekernel/hash.hpp"
#include "lakekernel/lakehouse.hpp"
#include "lakekernel/query.hpp"
#include "lakekernel/table.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lake::test {

/// A fresh directory, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& sub) const { return path_ / sub; }

private:
    std::filesystem::path path_;
};

/// The code of the lake::Error `f` throws, or nullopt if it returns.
template <class F>
std::optional<ErrorCode> error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

TableData ints(std::vector<std::string> columns, std::vector<std::vector<std::int64_t>> rows);

/// Policy text parsed through the real parser.
Policy policy_from(const std::string& text);

/// admin: everything; reader: ReadTable:*:*; runner: RunPipeline:* plus
/// CreateBranch/WriteBranch on run/*; plus the packages pandas==2.0.
Policy standard_policy();

/// Deterministic options: counting clock and sequential run ids.
LakehouseOptions fixed_options(std::int64_t clock_start = 1'000);

// ---- query oracle ----

/// Nested-loop join, linear group search, direct AST evaluation. Written
/// without the binder or the hash join. Throws Error(EvalError) on runtime
/// faults; assumes the query is well typed.
TableData oracle_query(const QueryAst& q, const std::map<std::string, TableData>& tables);

struct QueryCase {
    std::map<std::string, TableData> tables;
    QueryAst query;
    Schema expected_schema;
};

/// A random well-typed query over one or two random tables of at most
/// `max_rows` rows. Every produced AST is canonical for print/parse.
QueryCase random_query_case(SplitMix64& rng, std::size_t max_rows = 8);

/// Random well-typed expression over `schema` (unqualified columns).
Expr random_expr(SplitMix64& rng, const Schema& schema, ColumnType type, int depth);

// ---- catalog oracles ----

/// Per-table three-way rule written as its truth table.
struct MergeOracle {
    TableMap merged;
    std::vector<std::string> conflicts;
};
MergeOracle oracle_three_way(const TableMap& base, const TableMap& source, const TableMap& target);

/// Lowest common ancestor via explicit transitive closure; ties broken by
/// latest timestamp, then smallest id.
std::optional<CommitId> oracle_merge_base(const Catalog& catalog, const CommitId& a, const CommitId& b);

/// Ancestors of `c`, including `c`.
std::set<std::string> oracle_ancestors(const Catalog& catalog, const CommitId& c);

// ---- serializability, second implementation ----

/// Depth-first search over subsets of merges with memoised (used set,
/// state) pairs. Independent of the permutation enumeration.
bool oracle_serializable(const Trace& trace);

/// Random small trace: merges built from random base/source maps over a
/// handful of tables; the final state is either a real serial outcome or a
/// perturbation of one.
Trace random_trace(SplitMix64& rng, std::size_t max_merges);

SnapshotId fake_snapshot(std::uint64_t n);

} // namespace lake::test
