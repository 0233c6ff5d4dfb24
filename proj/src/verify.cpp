#include "lakekernel/verify.hpp"

#include "fsutil.hpp"
#include "lakekernel/error.hpp"
#include "lakekernel/governance.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <tuple>

namespace lake {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::Pass: return "Pass";
    case Verdict::Fail: return "Fail";
    case Verdict::Error: return "Error";
    }
    return "?";
}

namespace {

bool may_be_bool(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::Literal: return type_of(e.literal) == ColumnType::Bool;
    case Expr::Kind::Column: return true;
    case Expr::Kind::Unary: return e.unary == UnaryOp::Not;
    case Expr::Kind::Binary:
        return !(e.binary == BinaryOp::Add || e.binary == BinaryOp::Sub || e.binary == BinaryOp::Mul ||
                 e.binary == BinaryOp::Div);
    case Expr::Kind::Aggregate: return e.agg == AggFunc::Min || e.agg == AggFunc::Max;
    }
    return false;
}

Verdict verdict_from(const std::string& s) {
    if (s == "Pass") return Verdict::Pass;
    if (s == "Fail") return Verdict::Fail;
    return Verdict::Error;
}

json verdict_json(const VerdictRecord& v) {
    return {{"run_id", v.run_id},
            {"verifier", v.verifier},
            {"verdict", std::string(to_string(v.verdict))},
            {"detail", v.detail},
            {"evaluated_at", v.evaluated_at.hex}};
}

} // namespace

void check_verifier_shape(const QueryAst& check) {
    if (check.select.size() != 1) {
        throw Error(ErrorCode::ShapeError,
                    "verifier must select exactly one bool column, got " + std::to_string(check.select.size()));
    }
    if (!may_be_bool(check.select[0].expr)) {
        throw Error(ErrorCode::ShapeError, "verifier column '" + print_expr(check.select[0].expr) + "' is not bool");
    }
}

VerdictRecord evaluate_verifier(const VerifierSpec& spec, const Catalog& catalog, const ReadSession& session,
                                const std::string& run_id) {
    VerdictRecord rec{run_id, spec.name, Verdict::Error, "", session.pinned};
    try {
        std::map<std::string, TableData> bindings;
        for (const auto& t : spec.check.inputs()) bindings[t] = catalog.read_table(session, t);
        TableData out = execute_query(spec.check, bindings);
        if (out.schema.arity() != 1 || out.schema.columns[0].type != ColumnType::Bool) {
            rec.detail = "ShapeError: check produced " + out.schema.to_string();
        } else if (out.rows.size() != 1) {
            rec.verdict = Verdict::Fail;
            rec.detail = "expected one row, got " + std::to_string(out.rows.size());
        } else if (std::get<bool>(out.rows[0][0])) {
            rec.verdict = Verdict::Pass;
        } else {
            rec.verdict = Verdict::Fail;
            rec.detail = "check returned false";
        }
    } catch (const Error& e) {
        rec.detail = std::string(to_string(e.code())) + ": " + e.what();
    }
    return rec;
}

VerifierRegistry::VerifierRegistry(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "verifiers");
    fs::create_directories(root_ / "verdicts");
}

void VerifierRegistry::add(const VerifierSpec& spec) {
    if (!is_identifier(spec.name)) throw Error(ErrorCode::InvalidArgument, "invalid verifier name '" + spec.name + "'");
    if (spec.pipeline_glob.empty()) throw Error(ErrorCode::InvalidArgument, "empty pipeline pattern");
    check_verifier_shape(spec.check);
    json j = {{"name", spec.name},
              {"pipeline", spec.pipeline_glob},
              {"check", print_query(spec.check)},
              {"registered_by", spec.registered_by}};
    fs::path path = root_ / "verifiers" / (spec.name + ".json");
    fs::path tmp = detail::temp_sibling(path);
    detail::atomic_write_file(tmp, j.dump(2));
    // link() fails if the name is taken, so concurrent registrations of one
    // name cannot both succeed.
    std::error_code ec;
    fs::create_hard_link(tmp, path, ec);
    fs::remove(tmp);
    if (ec) {
        if (fs::exists(path)) throw Error(ErrorCode::DuplicateName, "verifier '" + spec.name + "' already exists");
        throw Error(ErrorCode::StorageFailure, "cannot write " + path.string());
    }
}

std::vector<VerifierSpec> VerifierRegistry::list() const {
    std::vector<VerifierSpec> out;
    for (const auto& entry : fs::directory_iterator(root_ / "verifiers")) {
        if (entry.path().extension() != ".json" || entry.path().filename().string().front() == '.') continue;
        json j = json::parse(*detail::read_file(entry.path()));
        out.push_back({j.at("name"), j.at("pipeline"), parse_query(j.at("check").get<std::string>()),
                       j.at("registered_by")});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

std::vector<VerifierSpec> VerifierRegistry::matching(std::string_view pipeline) const {
    std::vector<VerifierSpec> out;
    for (auto& v : list()) {
        if (glob_match(v.pipeline_glob, pipeline)) out.push_back(std::move(v));
    }
    return out;
}

void VerifierRegistry::record(const std::vector<VerdictRecord>& verdicts) const {
    for (const auto& v : verdicts) {
        fs::path dir = root_ / "verdicts" / v.evaluated_at.hex;
        fs::create_directories(dir);
        fs::path path = dir / (v.run_id + "." + v.verifier + ".json");
        if (!fs::exists(path)) detail::atomic_write_file(path, verdict_json(v).dump(2));
    }
}

std::vector<VerdictRecord> VerifierRegistry::verdicts_at(const CommitId& commit) const {
    std::vector<VerdictRecord> out;
    fs::path dir = root_ / "verdicts" / commit.hex;
    if (commit.hex.empty() || !fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().filename().string().front() == '.') continue;
        json j = json::parse(*detail::read_file(entry.path()));
        out.push_back({j.at("run_id"), j.at("verifier"), verdict_from(j.at("verdict")), j.at("detail"),
                       CommitId{j.at("evaluated_at").get<std::string>()}});
    }
    std::sort(out.begin(), out.end(), [](const VerdictRecord& a, const VerdictRecord& b) {
        return std::tie(a.run_id, a.verifier) < std::tie(b.run_id, b.verifier);
    });
    return out;
}

} // namespace lake
