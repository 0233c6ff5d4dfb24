#pragma once

#include "lakekernel/catalog.hpp"
#include "lakekernel/query.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lake {

/// A platform-registered acceptance check over a run's output tables.
/// Passes iff the query yields exactly one row holding `true`.
struct VerifierSpec {
    std::string name;
    std::string pipeline_glob;
    QueryAst check;
    std::string registered_by;

    bool operator==(const VerifierSpec&) const = default;
};

enum class Verdict { Pass, Fail, Error };
std::string_view to_string(Verdict v);

struct VerdictRecord {
    std::string run_id;
    std::string verifier;
    Verdict verdict = Verdict::Error;
    std::string detail;
    /// The exact commit the check ran against; the verdict says nothing
    /// about any other commit.
    CommitId evaluated_at;

    bool operator==(const VerdictRecord&) const = default;
};

/// Throws ShapeError unless the check selects exactly one column that can be
/// bool. Column refs and min/max are accepted here and typed at evaluation.
void check_verifier_shape(const QueryAst& check);

/// Runs one verifier against a pinned session. Never throws for data
/// problems: missing tables, type errors and eval errors become Error verdicts.
VerdictRecord evaluate_verifier(const VerifierSpec& spec, const Catalog& catalog, const ReadSession& session,
                                const std::string& run_id);

/// Verifiers under `<root>/verifiers/<name>.json`; verdicts under
/// `<root>/verdicts/<commit>/<run_id>.<verifier>.json` (written once, never
/// replaced).
class VerifierRegistry {
public:
    explicit VerifierRegistry(std::filesystem::path root);

    /// DuplicateName / ShapeError / InvalidArgument. Authorization is the
    /// caller's job.
    void add(const VerifierSpec& spec);
    std::vector<VerifierSpec> list() const;
    std::vector<VerifierSpec> matching(std::string_view pipeline) const;

    void record(const std::vector<VerdictRecord>& verdicts) const;
    std::vector<VerdictRecord> verdicts_at(const CommitId& commit) const;

private:
    std::filesystem::path root_;
};

} // namespace lake
