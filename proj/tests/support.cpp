#include "support.hpp"

#include "lakekernel/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <memory>
#include <set>
#include <unistd.h>

namespace lake::test {

namespace fs = std::filesystem;

TempDir::TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "lakekernel-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

TableData ints(std::vector<std::string> columns, std::vector<std::vector<std::int64_t>> rows) {
    TableData t;
    for (auto& c : columns) t.schema.columns.push_back({std::move(c), ColumnType::Int64});
    for (auto& r : rows) t.rows.push_back(Row(r.begin(), r.end()));
    return t;
}

Policy policy_from(const std::string& text) { return parse_policy(text); }

Policy standard_policy() {
    return policy_from(R"(whitelist = ["pandas==2.0"]
[[principal]]
name = "admin"
roles = ["admin"]
[[principal]]
name = "analyst"
roles = ["reader"]
[[principal]]
name = "bot"
roles = ["reader", "runner"]
[[role]]
name = "admin"
permissions = ["ReadTable:*:*", "WriteBranch:*", "CreateBranch:*", "MergeInto:*", "RunPipeline:*", "RegisterVerifier", "ManagePolicy"]
[[role]]
name = "reader"
permissions = ["ReadTable:*:*"]
[[role]]
name = "runner"
permissions = ["RunPipeline:*", "CreateBranch:run/*", "WriteBranch:run/*"]
)");
}

LakehouseOptions fixed_options(std::int64_t clock_start) {
    LakehouseOptions o;
    o.clock = counting_clock(clock_start);
    auto counter = std::make_shared<std::atomic<int>>(0);
    o.run_ids = [counter] {
        char buf[32];
        std::snprintf(buf, sizeof buf, "run-%04d", ++*counter);
        return std::string(buf);
    };
    return o;
}

// ---- query oracle ----

namespace {

struct Cell {
    std::string table;
    std::string name;
    Value value;
};
using Env = std::vector<Cell>;

const Value& lookup(const Env& env, const ColumnRef& ref) {
    for (const auto& c : env) {
        if (c.name == ref.name && (ref.qualifier.empty() || ref.qualifier == c.table)) return c.value;
    }
    throw std::logic_error("oracle: unresolved column " + ref.to_string());
}

[[noreturn]] void fault(const std::string& msg) { throw Error(ErrorCode::EvalError, msg); }

bool numeric(const Value& v) { return v.index() == 0 || v.index() == 1; }

double dbl(const Value& v) { return v.index() == 0 ? static_cast<double>(std::get<0>(v)) : std::get<1>(v); }

/// -1, 0, 1; int/float mixes compare as doubles.
int cmp(const Value& a, const Value& b) {
    if (numeric(a) && numeric(b) && a.index() != b.index()) {
        double x = dbl(a), y = dbl(b);
        return (x > y) - (x < y);
    }
    if (a.index() == 0) return (std::get<0>(a) > std::get<0>(b)) - (std::get<0>(a) < std::get<0>(b));
    if (a.index() == 1) return (std::get<1>(a) > std::get<1>(b)) - (std::get<1>(a) < std::get<1>(b));
    if (a.index() == 2) return std::get<2>(a).compare(std::get<2>(b)) < 0 ? -1 : (std::get<2>(a) == std::get<2>(b) ? 0 : 1);
    return static_cast<int>(std::get<3>(a)) - static_cast<int>(std::get<3>(b));
}

double no_nan(double d) {
    if (std::isnan(d)) fault("nan");
    return d;
}

Value arith(BinaryOp op, const Value& a, const Value& b) {
    if (a.index() == 0 && b.index() == 0) {
        // Exact arithmetic in 128 bits, then range-check.
        __int128 x = std::get<0>(a), y = std::get<0>(b), r = 0;
        if (op == BinaryOp::Add) r = x + y;
        if (op == BinaryOp::Sub) r = x - y;
        if (op == BinaryOp::Mul) r = x * y;
        if (op == BinaryOp::Div) {
            if (y == 0) fault("div0");
            r = x / y;
        }
        if (r > std::numeric_limits<std::int64_t>::max() || r < std::numeric_limits<std::int64_t>::min()) fault("ovf");
        return static_cast<std::int64_t>(r);
    }
    double x = dbl(a), y = dbl(b);
    if (op == BinaryOp::Add) return no_nan(x + y);
    if (op == BinaryOp::Sub) return no_nan(x - y);
    if (op == BinaryOp::Mul) return no_nan(x * y);
    if (y == 0) fault("div0");
    return no_nan(x / y);
}

using AggValues = std::map<const Expr*, Value>;

Value eval(const Expr& e, const Env& env, const AggValues& aggs) {
    switch (e.kind) {
    case Expr::Kind::Literal: return e.literal;
    case Expr::Kind::Column: return lookup(env, e.column);
    case Expr::Kind::Aggregate: return aggs.at(&e);
    case Expr::Kind::Unary: {
        Value v = eval(e.args[0], env, aggs);
        if (e.unary == UnaryOp::Not) return !std::get<bool>(v);
        if (v.index() == 1) return -std::get<1>(v);
        if (std::get<0>(v) == std::numeric_limits<std::int64_t>::min()) fault("ovf");
        return -std::get<0>(v);
    }
    case Expr::Kind::Binary: break;
    }
    switch (e.binary) {
    case BinaryOp::And: return std::get<bool>(eval(e.args[0], env, aggs)) && std::get<bool>(eval(e.args[1], env, aggs));
    case BinaryOp::Or: return std::get<bool>(eval(e.args[0], env, aggs)) || std::get<bool>(eval(e.args[1], env, aggs));
    default: break;
    }
    Value l = eval(e.args[0], env, aggs), r = eval(e.args[1], env, aggs);
    switch (e.binary) {
    case BinaryOp::Eq: return cmp(l, r) == 0;
    case BinaryOp::Ne: return cmp(l, r) != 0;
    case BinaryOp::Lt: return cmp(l, r) < 0;
    case BinaryOp::Le: return cmp(l, r) <= 0;
    case BinaryOp::Gt: return cmp(l, r) > 0;
    case BinaryOp::Ge: return cmp(l, r) >= 0;
    default: return arith(e.binary, l, r);
    }
}

void collect_aggs(const Expr& e, std::vector<const Expr*>& out) {
    if (e.kind == Expr::Kind::Aggregate) out.push_back(&e);
    for (const auto& a : e.args) collect_aggs(a, out);
}

Value aggregate(const Expr& e, const std::vector<Env>& rows, ColumnType column_type) {
    const auto n = static_cast<std::int64_t>(rows.size());
    if (e.agg == AggFunc::Count) return n;
    std::vector<Value> vals;
    for (const auto& r : rows) vals.push_back(lookup(r, e.column));
    switch (e.agg) {
    case AggFunc::Sum: {
        if (column_type == ColumnType::Int64) {
            __int128 s = 0;
            for (const auto& v : vals) {
                s += std::get<0>(v);
                if (s > std::numeric_limits<std::int64_t>::max() || s < std::numeric_limits<std::int64_t>::min()) fault("ovf");
            }
            return static_cast<std::int64_t>(s);
        }
        double s = 0;
        for (const auto& v : vals) s = no_nan(s + std::get<1>(v));
        return s;
    }
    case AggFunc::Avg: {
        if (vals.empty()) fault("avg empty");
        double s = 0;
        for (const auto& v : vals) s = no_nan(s + dbl(v));
        return no_nan(s / static_cast<double>(vals.size()));
    }
    case AggFunc::Min:
    case AggFunc::Max: {
        if (vals.empty()) fault("minmax empty");
        Value best = vals[0];
        for (const auto& v : vals) {
            int c = cmp(v, best);
            if ((e.agg == AggFunc::Min && c < 0) || (e.agg == AggFunc::Max && c > 0)) best = v;
        }
        return best;
    }
    case AggFunc::Count: break;
    }
    return n;
}

struct TypeEnv {
    std::vector<std::pair<std::string, Column>> cols; // (table, column)

    ColumnType of(const ColumnRef& ref) const {
        for (const auto& [t, c] : cols) {
            if (c.name == ref.name && (ref.qualifier.empty() || ref.qualifier == t)) return c.type;
        }
        throw std::logic_error("oracle: unresolved column " + ref.to_string());
    }
};

ColumnType type_of_expr(const Expr& e, const TypeEnv& env) {
    switch (e.kind) {
    case Expr::Kind::Literal: return static_cast<ColumnType>(e.literal.index());
    case Expr::Kind::Column: return env.of(e.column);
    case Expr::Kind::Unary: return e.unary == UnaryOp::Not ? ColumnType::Bool : type_of_expr(e.args[0], env);
    case Expr::Kind::Aggregate:
        if (e.agg == AggFunc::Count) return ColumnType::Int64;
        if (e.agg == AggFunc::Avg) return ColumnType::Float64;
        return env.of(e.column);
    case Expr::Kind::Binary:
        switch (e.binary) {
        case BinaryOp::Add:
        case BinaryOp::Sub:
        case BinaryOp::Mul:
        case BinaryOp::Div:
            return type_of_expr(e.args[0], env) == ColumnType::Int64 && type_of_expr(e.args[1], env) == ColumnType::Int64
                       ? ColumnType::Int64
                       : ColumnType::Float64;
        default: return ColumnType::Bool;
        }
    }
    return ColumnType::Int64;
}

std::string output_name(const SelectItem& item, std::size_t i) {
    if (item.alias) return *item.alias;
    if (item.expr.kind == Expr::Kind::Column) return item.expr.column.name;
    if (item.expr.kind == Expr::Kind::Aggregate) {
        std::string fn(to_string(item.expr.agg));
        return item.expr.star ? fn : fn + "_" + item.expr.column.name;
    }
    return "col_" + std::to_string(i);
}

} // namespace

TableData oracle_query(const QueryAst& q, const std::map<std::string, TableData>& tables) {
    const TableData& left = tables.at(q.from);
    TypeEnv tenv;
    for (const auto& c : left.schema.columns) tenv.cols.push_back({q.from, c});
    auto to_env = [](const std::string& name, const TableData& t, const Row& r, Env& env) {
        for (std::size_t i = 0; i < r.size(); ++i) env.push_back({name, t.schema.columns[i].name, r[i]});
    };

    std::vector<Env> rows;
    if (q.join) {
        const TableData& right = tables.at(q.join->table);
        for (const auto& c : right.schema.columns) tenv.cols.push_back({q.join->table, c});
        for (const auto& l : left.rows) {
            for (const auto& r : right.rows) {
                Env env;
                to_env(q.from, left, l, env);
                to_env(q.join->table, right, r, env);
                if (cmp(lookup(env, q.join->left), lookup(env, q.join->right)) == 0) rows.push_back(std::move(env));
            }
        }
    } else {
        for (const auto& l : left.rows) {
            Env env;
            to_env(q.from, left, l, env);
            rows.push_back(std::move(env));
        }
    }

    if (q.where) {
        std::vector<Env> kept;
        for (auto& r : rows) {
            if (std::get<bool>(eval(*q.where, r, {}))) kept.push_back(std::move(r));
        }
        rows = std::move(kept);
    }

    TableData out;
    for (std::size_t i = 0; i < q.select.size(); ++i) {
        out.schema.columns.push_back({output_name(q.select[i], i), type_of_expr(q.select[i].expr, tenv)});
    }

    std::vector<const Expr*> agg_nodes;
    for (const auto& s : q.select) collect_aggs(s.expr, agg_nodes);
    bool grouping = !q.group_by.empty() || !agg_nodes.empty();
    if (!grouping) {
        for (const auto& r : rows) {
            Row o;
            for (const auto& s : q.select) o.push_back(eval(s.expr, r, {}));
            out.rows.push_back(std::move(o));
        }
        return out;
    }

    std::vector<std::vector<Env>> groups;
    if (q.group_by.empty()) groups.emplace_back();
    for (auto& r : rows) {
        if (q.group_by.empty()) {
            groups[0].push_back(std::move(r));
            continue;
        }
        auto same_key = [&](const std::vector<Env>& g) {
            for (const auto& c : q.group_by) {
                if (cmp(lookup(g.front(), c), lookup(r, c)) != 0) return false;
            }
            return true;
        };
        auto it = std::find_if(groups.begin(), groups.end(), same_key);
        if (it == groups.end()) {
            groups.emplace_back();
            it = groups.end() - 1;
        }
        it->push_back(std::move(r));
    }
    for (const auto& g : groups) {
        AggValues values;
        for (const Expr* a : agg_nodes) {
            values[a] = aggregate(*a, g, a->star ? ColumnType::Int64 : tenv.of(a->column));
        }
        Env key = g.empty() ? Env{} : g.front();
        Row o;
        for (const auto& s : q.select) o.push_back(eval(s.expr, key, values));
        out.rows.push_back(std::move(o));
    }
    return out;
}

// ---- random queries ----

namespace {

const char* kColumnNames[] = {"a", "b", "c", "d", "e", "f"};
const char* kRightNames[] = {"p", "q", "r", "s"};

Value random_value(SplitMix64& rng, ColumnType t) {
    switch (t) {
    case ColumnType::Int64:
        if (rng.below(20) == 0) {
            std::int64_t big = std::numeric_limits<std::int64_t>::max() - static_cast<std::int64_t>(rng.below(3));
            return rng.below(2) ? big : -big - 1;
        }
        return static_cast<std::int64_t>(rng.below(9)) - 4;
    case ColumnType::Float64: {
        static const double kFloats[] = {-1.5, -0.0, 0.0, 0.5, 2.0, 3.25, 1e300};
        return kFloats[rng.below(std::size(kFloats))];
    }
    case ColumnType::String: {
        static const char* kStrings[] = {"", "a", "b", "a,b", "x\"y", "b"};
        return std::string(kStrings[rng.below(std::size(kStrings))]);
    }
    case ColumnType::Bool: return rng.below(2) == 1;
    }
    return std::int64_t{0};
}

ColumnType random_type(SplitMix64& rng) { return static_cast<ColumnType>(rng.below(4)); }

struct Scope {
    // (qualifier to print, table, column)
    std::vector<std::pair<std::string, Column>> cols;
    bool qualify = false;
    // Grouped generation: only these columns may appear outside aggregates.
    std::vector<std::size_t> group_cols;
    bool grouped = false;

    ColumnRef ref(std::size_t i) const {
        return {qualify ? cols[i].first : std::string(), cols[i].second.name};
    }
    std::vector<std::size_t> of_type(ColumnType t, bool only_group) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i].second.type != t) continue;
            if (only_group && std::find(group_cols.begin(), group_cols.end(), i) == group_cols.end()) continue;
            out.push_back(i);
        }
        return out;
    }
};

Expr literal(SplitMix64& rng, ColumnType t) {
    Value v = random_value(rng, t);
    if (t == ColumnType::Float64 && std::isinf(std::get<double>(v))) v = 4.5;
    return Expr::lit(v);
}

std::optional<Expr> aggregate_of(SplitMix64& rng, const Scope& s, ColumnType t) {
    std::vector<Expr> options;
    if (t == ColumnType::Int64) {
        options.push_back(Expr::aggregate(AggFunc::Count, std::nullopt));
        if (!s.cols.empty()) options.push_back(Expr::aggregate(AggFunc::Count, s.ref(rng.below(s.cols.size()))));
        for (auto i : s.of_type(ColumnType::Int64, false)) options.push_back(Expr::aggregate(AggFunc::Sum, s.ref(i)));
    }
    if (t == ColumnType::Float64) {
        for (auto i : s.of_type(ColumnType::Float64, false)) {
            options.push_back(Expr::aggregate(AggFunc::Sum, s.ref(i)));
            options.push_back(Expr::aggregate(AggFunc::Avg, s.ref(i)));
        }
        for (auto i : s.of_type(ColumnType::Int64, false)) options.push_back(Expr::aggregate(AggFunc::Avg, s.ref(i)));
    }
    for (auto i : s.of_type(t, false)) {
        options.push_back(Expr::aggregate(AggFunc::Min, s.ref(i)));
        options.push_back(Expr::aggregate(AggFunc::Max, s.ref(i)));
    }
    if (options.empty()) return std::nullopt;
    return options[rng.below(options.size())];
}

Expr gen(SplitMix64& rng, const Scope& s, ColumnType t, int depth);

Expr leaf(SplitMix64& rng, const Scope& s, ColumnType t) {
    auto cols = s.of_type(t, s.grouped);
    std::uint64_t pick = rng.below(s.grouped ? 3 : 2);
    if (pick == 2) {
        if (auto a = aggregate_of(rng, s, t)) return *a;
    }
    if (pick >= 1 && !cols.empty()) {
        std::size_t i = cols[rng.below(cols.size())];
        ColumnRef r = s.ref(i);
        return Expr::col(r.name, r.qualifier);
    }
    return literal(rng, t);
}

Expr numeric_operand(SplitMix64& rng, const Scope& s, int depth) {
    return gen(rng, s, rng.below(2) ? ColumnType::Int64 : ColumnType::Float64, depth);
}

Expr gen(SplitMix64& rng, const Scope& s, ColumnType t, int depth) {
    if (depth <= 0 || rng.below(3) == 0) return leaf(rng, s, t);
    switch (t) {
    case ColumnType::Int64:
    case ColumnType::Float64: {
        if (rng.below(5) == 0) {
            Expr inner = gen(rng, s, t, depth - 1);
            if (inner.kind == Expr::Kind::Literal) return inner;
            return Expr::un(UnaryOp::Neg, std::move(inner));
        }
        static const BinaryOp kOps[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div};
        BinaryOp op = kOps[rng.below(4)];
        if (t == ColumnType::Int64) return Expr::bin(op, gen(rng, s, t, depth - 1), gen(rng, s, t, depth - 1));
        // At least one float side.
        if (rng.below(2)) return Expr::bin(op, gen(rng, s, t, depth - 1), numeric_operand(rng, s, depth - 1));
        return Expr::bin(op, numeric_operand(rng, s, depth - 1), gen(rng, s, t, depth - 1));
    }
    case ColumnType::Bool: {
        switch (rng.below(4)) {
        case 0: return Expr::un(UnaryOp::Not, gen(rng, s, t, depth - 1));
        case 1:
            return Expr::bin(rng.below(2) ? BinaryOp::And : BinaryOp::Or, gen(rng, s, t, depth - 1),
                             gen(rng, s, t, depth - 1));
        default: {
            static const BinaryOp kCmp[] = {BinaryOp::Eq, BinaryOp::Ne, BinaryOp::Lt,
                                            BinaryOp::Le, BinaryOp::Gt, BinaryOp::Ge};
            BinaryOp op = kCmp[rng.below(6)];
            ColumnType ot = random_type(rng);
            if (ot == ColumnType::Int64 || ot == ColumnType::Float64) {
                return Expr::bin(op, numeric_operand(rng, s, depth - 1), numeric_operand(rng, s, depth - 1));
            }
            return Expr::bin(op, gen(rng, s, ot, depth - 1), gen(rng, s, ot, depth - 1));
        }
        }
    }
    case ColumnType::String: return leaf(rng, s, t);
    }
    return leaf(rng, s, t);
}

TableData random_table(SplitMix64& rng, const std::vector<Column>& cols, std::size_t max_rows) {
    TableData t;
    t.schema.columns = cols;
    std::size_t n = rng.below(max_rows + 1);
    for (std::size_t i = 0; i < n; ++i) {
        Row r;
        for (const auto& c : cols) r.push_back(random_value(rng, c.type));
        t.rows.push_back(std::move(r));
    }
    return t;
}

} // namespace

Expr random_expr(SplitMix64& rng, const Schema& schema, ColumnType type, int depth) {
    Scope s;
    for (const auto& c : schema.columns) s.cols.push_back({"", c});
    return gen(rng, s, type, depth);
}

QueryCase random_query_case(SplitMix64& rng, std::size_t max_rows) {
    QueryCase qc;
    std::vector<Column> left_cols{{"k", ColumnType::Int64}};
    std::size_t n_left = 1 + rng.below(4);
    for (std::size_t i = 0; i < n_left; ++i) left_cols.push_back({kColumnNames[i], random_type(rng)});
    qc.tables["t"] = random_table(rng, left_cols, max_rows);
    qc.query.from = "t";

    Scope s;
    for (const auto& c : left_cols) s.cols.push_back({"t", c});
    if (rng.below(5) < 2) {
        std::vector<Column> right_cols{{"j", rng.below(3) ? ColumnType::Int64 : ColumnType::Float64}};
        std::size_t n_right = 1 + rng.below(3);
        for (std::size_t i = 0; i < n_right; ++i) right_cols.push_back({kRightNames[i], random_type(rng)});
        TableData right = random_table(rng, right_cols, max_rows);
        // Make keys collide more often than chance.
        for (auto& r : right.rows) {
            if (rng.below(2) && !qc.tables["t"].rows.empty()) {
                Value k = qc.tables["t"].rows[rng.below(qc.tables["t"].rows.size())][0];
                r[0] = right_cols[0].type == ColumnType::Int64 ? k : Value{static_cast<double>(std::get<std::int64_t>(k))};
            }
        }
        qc.tables["u"] = std::move(right);
        for (const auto& c : right_cols) s.cols.push_back({"u", c});
        s.qualify = rng.below(2) == 1;
        qc.query.join = JoinClause{"u", {"t", "k"}, {"u", "j"}};
        if (rng.below(2)) std::swap(qc.query.join->left, qc.query.join->right);
    }

    if (rng.below(2)) qc.query.where = gen(rng, s, ColumnType::Bool, 2);

    bool grouped = rng.below(2) == 1;
    if (grouped) {
        std::size_t n_groups = rng.below(3);
        std::vector<std::size_t> all(s.cols.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        std::shuffle(all.begin(), all.end(), rng);
        for (std::size_t i = 0; i < n_groups && i < all.size(); ++i) {
            s.group_cols.push_back(all[i]);
            qc.query.group_by.push_back(s.ref(all[i]));
        }
        s.grouped = true;
    }

    std::size_t n_items = 1 + rng.below(3);
    std::set<std::string> names;
    for (std::size_t i = 0; i < n_items; ++i) {
        SelectItem item;
        ColumnType t = random_type(rng);
        item.expr = gen(rng, s, t, 2);
        if (grouped && i == 0 && qc.query.group_by.empty()) {
            if (auto a = aggregate_of(rng, s, ColumnType::Int64)) item.expr = *a;
        }
        bool plain = item.expr.kind == Expr::Kind::Column || item.expr.kind == Expr::Kind::Aggregate;
        if (!plain || rng.below(2)) item.alias = "o" + std::to_string(i);
        qc.query.select.push_back(std::move(item));
    }
    // Rename accidental duplicates.
    for (std::size_t i = 0; i < qc.query.select.size(); ++i) {
        auto& item = qc.query.select[i];
        std::string name = item.alias ? *item.alias : output_name(item, i);
        if (!names.insert(name).second) {
            item.alias = "o" + std::to_string(i);
            names.insert(*item.alias);
        }
    }

    TypeEnv tenv;
    for (const auto& [table, c] : s.cols) tenv.cols.push_back({table, c});
    for (std::size_t i = 0; i < qc.query.select.size(); ++i) {
        qc.expected_schema.columns.push_back(
            {output_name(qc.query.select[i], i), type_of_expr(qc.query.select[i].expr, tenv)});
    }
    return qc;
}

// ---- catalog oracles ----

MergeOracle oracle_three_way(const TableMap& base, const TableMap& source, const TableMap& target) {
    std::set<std::string> names;
    for (const auto& [k, _] : base) names.insert(k);
    for (const auto& [k, _] : source) names.insert(k);
    for (const auto& [k, _] : target) names.insert(k);
    MergeOracle out;
    auto get = [](const TableMap& m, const std::string& k) {
        auto it = m.find(k);
        return it == m.end() ? std::string("<absent>") : it->second.hex;
    };
    for (const auto& name : names) {
        std::string b = get(base, name), s = get(source, name), t = get(target, name);
        bool source_changed = s != b;
        bool target_changed = t != b;
        std::string result;
        if (!source_changed && !target_changed) {
            result = b;
        } else if (source_changed && !target_changed) {
            result = s;
        } else if (!source_changed && target_changed) {
            result = t;
        } else if (s == t) {
            result = s;
        } else {
            out.conflicts.push_back(name);
            continue;
        }
        if (result != "<absent>") out.merged[name] = SnapshotId{result};
    }
    return out;
}

std::set<std::string> oracle_ancestors(const Catalog& catalog, const CommitId& c) {
    std::set<std::string> seen;
    std::vector<CommitId> stack{c};
    while (!stack.empty()) {
        CommitId x = stack.back();
        stack.pop_back();
        if (!seen.insert(x.hex).second) continue;
        for (const auto& p : catalog.get_commit(x).parents) stack.push_back(p);
    }
    return seen;
}

std::optional<CommitId> oracle_merge_base(const Catalog& catalog, const CommitId& a, const CommitId& b) {
    auto aa = oracle_ancestors(catalog, a);
    auto bb = oracle_ancestors(catalog, b);
    std::vector<std::string> common;
    std::set_intersection(aa.begin(), aa.end(), bb.begin(), bb.end(), std::back_inserter(common));
    std::vector<Commit> lowest;
    for (const auto& c : common) {
        bool dominated = false;
        for (const auto& d : common) {
            if (d != c && oracle_ancestors(catalog, CommitId{d}).count(c)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) lowest.push_back(catalog.get_commit(CommitId{c}));
    }
    if (lowest.empty()) return std::nullopt;
    std::sort(lowest.begin(), lowest.end(), [](const Commit& x, const Commit& y) {
        if (x.timestamp != y.timestamp) return x.timestamp > y.timestamp;
        return x.id.hex < y.id.hex;
    });
    return lowest.front().id;
}

// ---- serializability oracle ----

namespace {

std::string key_of(std::uint32_t used, const TableMap& state) {
    std::string k = std::to_string(used) + "|";
    for (const auto& [t, id] : state) k += t + "=" + id.hex + ";";
    return k;
}

bool search(const std::vector<const MergeRecord*>& merges, std::uint32_t used, const TableMap& state,
            const TableMap& final_state, std::set<std::string>& dead) {
    if (used == (1u << merges.size()) - 1) return state == final_state;
    std::string k = key_of(used, state);
    if (dead.count(k)) return false;
    for (std::size_t i = 0; i < merges.size(); ++i) {
        if (used & (1u << i)) continue;
        MergeOracle r = oracle_three_way(merges[i]->base_tables, merges[i]->source_tables, state);
        if (!r.conflicts.empty()) continue;
        if (search(merges, used | (1u << i), r.merged, final_state, dead)) return true;
    }
    dead.insert(k);
    return false;
}

} // namespace

bool oracle_serializable(const Trace& trace) {
    std::vector<const MergeRecord*> merges;
    for (const auto& e : trace.events) {
        if (e.merge && e.committed_state) merges.push_back(&*e.merge);
    }
    std::set<std::string> dead;
    return search(merges, 0, trace.initial_state, trace.final_state, dead);
}

SnapshotId fake_snapshot(std::uint64_t n) { return SnapshotId{sha256_hex("snapshot-" + std::to_string(n))}; }

Trace random_trace(SplitMix64& rng, std::size_t max_merges) {
    static const char* kTables[] = {"t0", "t1", "t2", "t3"};
    std::uint64_t next_version = 1;
    auto random_map = [&] {
        TableMap m;
        for (const char* t : kTables) {
            if (rng.below(10) < 7) m[t] = fake_snapshot(rng.below(3));
        }
        return m;
    };
    auto mutate = [&](TableMap m) {
        std::size_t changes = 1 + rng.below(2);
        for (std::size_t i = 0; i < changes; ++i) {
            const char* t = kTables[rng.below(std::size(kTables))];
            if (rng.below(4) == 0) {
                m.erase(t);
            } else {
                m[t] = fake_snapshot(100 + next_version++);
            }
        }
        return m;
    };

    Trace trace;
    trace.initial_state = random_map();
    trace.initial_head = "initial";
    std::vector<TableMap> history{trace.initial_state};
    TableMap state = trace.initial_state;
    std::size_t n = rng.below(max_merges + 1);
    std::uint64_t seq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        // Base: some earlier published state, so merges overlap in time.
        TableMap base = history[rng.below(history.size())];
        TableMap source = mutate(base);
        TraceEvent e;
        e.seq = ++seq;
        e.agent = static_cast<int>(i);
        e.op = "branch_and_merge";
        MergeOracle r = oracle_three_way(base, source, state);
        if (!r.conflicts.empty()) {
            e.outcome = "Conflict";
            trace.events.push_back(std::move(e));
            continue;
        }
        e.outcome = "MergeCommit";
        e.merge = MergeRecord{"MergeCommit", "m" + std::to_string(i), base, source, state, r.merged};
        e.committed_state = r.merged;
        state = r.merged;
        history.push_back(state);
        trace.events.push_back(std::move(e));
    }
    trace.final_state = state;
    if (rng.below(3) == 0) {
        const char* t = kTables[rng.below(std::size(kTables))];
        trace.final_state[t] = fake_snapshot(9'000 + rng.below(5));
    }
    trace.final_head = "final";
    return trace;
}

} // namespace lake::test
