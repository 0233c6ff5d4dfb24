#include "lakekernel/error.hpp"
#include "lakekernel/query.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace lake {

namespace {

bool is_numeric(ColumnType t) { return t == ColumnType::Int64 || t == ColumnType::Float64; }

[[noreturn]] void type_error(const std::string& msg) { throw Error(ErrorCode::TypeError, msg); }
[[noreturn]] void eval_error(const std::string& msg) { throw Error(ErrorCode::EvalError, msg); }

struct ScopeEntry {
    std::string qualifier;
    std::string name;
    ColumnType type;
};

/// Columns visible to a query: the FROM table's, then the JOIN table's.
class Scope {
public:
    void add(const std::string& table, const Schema& schema) {
        for (const auto& c : schema.columns) entries_.push_back({table, c.name, c.type});
    }

    std::size_t resolve(const ColumnRef& ref) const {
        std::size_t found = npos;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (e.name != ref.name || (!ref.qualifier.empty() && e.qualifier != ref.qualifier)) continue;
            if (found != npos) type_error("ambiguous column '" + ref.to_string() + "'");
            found = i;
        }
        if (found == npos) type_error("unknown column '" + ref.to_string() + "'");
        return found;
    }

    const ScopeEntry& at(std::size_t i) const { return entries_[i]; }
    std::size_t size() const { return entries_.size(); }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::vector<ScopeEntry> entries_;
};

/// Expression with columns resolved to row positions and types inferred.
struct Bound {
    Expr::Kind kind = Expr::Kind::Literal;
    ColumnType type = ColumnType::Int64;
    Value literal;
    std::size_t index = 0; // Column: position in the evaluation row; Aggregate: slot
    UnaryOp unary = UnaryOp::Not;
    BinaryOp binary = BinaryOp::Add;
    std::vector<Bound> args;
};

struct AggSpec {
    AggFunc fn;
    bool star;
    std::size_t column; // scope index
    ColumnType input_type;
    ColumnType output_type;
};

struct Plan {
    Scope scope;
    std::vector<std::size_t> join_cols; // scope indices of left and right key
    std::optional<Bound> where;
    bool aggregating = false;
    std::vector<std::size_t> group_cols; // scope indices
    std::vector<AggSpec> aggs;
    std::vector<Bound> outputs;
    Schema schema;
};

class Binder {
public:
    explicit Binder(Plan& plan) : plan_(plan) {}

    Bound bind_row(const Expr& e) { return bind(e, false); }
    Bound bind_grouped(const Expr& e) { return bind(e, true); }

private:
    Bound bind(const Expr& e, bool grouped) {
        Bound b;
        b.kind = e.kind;
        b.literal = e.literal;
        switch (e.kind) {
        case Expr::Kind::Literal: b.type = type_of(e.literal); break;
        case Expr::Kind::Column: {
            std::size_t idx = plan_.scope.resolve(e.column);
            b.type = plan_.scope.at(idx).type;
            b.index = idx;
            if (grouped) {
                auto it = std::find(plan_.group_cols.begin(), plan_.group_cols.end(), idx);
                if (it == plan_.group_cols.end()) {
                    type_error("column '" + e.column.to_string() + "' must appear in GROUP BY or inside an aggregate");
                }
                b.index = static_cast<std::size_t>(it - plan_.group_cols.begin());
            }
            break;
        }
        case Expr::Kind::Unary: {
            b.unary = e.unary;
            b.args.push_back(bind(e.args[0], grouped));
            ColumnType t = b.args[0].type;
            if (e.unary == UnaryOp::Not) {
                if (t != ColumnType::Bool) type_error("NOT needs a bool operand in " + print_expr(e));
                b.type = ColumnType::Bool;
            } else {
                if (!is_numeric(t)) type_error("unary minus needs a numeric operand in " + print_expr(e));
                b.type = t;
            }
            break;
        }
        case Expr::Kind::Binary: {
            b.binary = e.binary;
            b.args.push_back(bind(e.args[0], grouped));
            b.args.push_back(bind(e.args[1], grouped));
            ColumnType l = b.args[0].type, r = b.args[1].type;
            switch (e.binary) {
            case BinaryOp::Add:
            case BinaryOp::Sub:
            case BinaryOp::Mul:
            case BinaryOp::Div:
                if (!is_numeric(l) || !is_numeric(r)) type_error("arithmetic needs numeric operands in " + print_expr(e));
                b.type = (l == ColumnType::Int64 && r == ColumnType::Int64) ? ColumnType::Int64 : ColumnType::Float64;
                break;
            case BinaryOp::Eq:
            case BinaryOp::Ne:
            case BinaryOp::Lt:
            case BinaryOp::Le:
            case BinaryOp::Gt:
            case BinaryOp::Ge:
                if (!(l == r || (is_numeric(l) && is_numeric(r)))) {
                    type_error("cannot compare " + std::string(to_string(l)) + " with " +
                               std::string(to_string(r)) + " in " + print_expr(e));
                }
                b.type = ColumnType::Bool;
                break;
            case BinaryOp::And:
            case BinaryOp::Or:
                if (l != ColumnType::Bool || r != ColumnType::Bool) type_error("AND/OR need bool operands in " + print_expr(e));
                b.type = ColumnType::Bool;
                break;
            }
            break;
        }
        case Expr::Kind::Aggregate: {
            if (!grouped) type_error("aggregate not allowed here: " + print_expr(e));
            AggSpec spec{e.agg, e.star, 0, ColumnType::Int64, ColumnType::Int64};
            if (!e.star) {
                spec.column = plan_.scope.resolve(e.column);
                spec.input_type = plan_.scope.at(spec.column).type;
            }
            switch (e.agg) {
            case AggFunc::Count: spec.output_type = ColumnType::Int64; break;
            case AggFunc::Sum:
                if (!is_numeric(spec.input_type)) type_error("sum needs a numeric column in " + print_expr(e));
                spec.output_type = spec.input_type;
                break;
            case AggFunc::Avg:
                if (!is_numeric(spec.input_type)) type_error("avg needs a numeric column in " + print_expr(e));
                spec.output_type = ColumnType::Float64;
                break;
            case AggFunc::Min:
            case AggFunc::Max: spec.output_type = spec.input_type; break;
            }
            b.type = spec.output_type;
            b.index = plan_.aggs.size();
            plan_.aggs.push_back(spec);
            break;
        }
        }
        return b;
    }

    Plan& plan_;
};

std::string default_name(const Expr& e, std::size_t position) {
    if (e.kind == Expr::Kind::Column) return e.column.name;
    if (e.kind == Expr::Kind::Aggregate) {
        if (e.star) return std::string(to_string(e.agg));
        return std::string(to_string(e.agg)) + "_" + e.column.name;
    }
    return "col_" + std::to_string(position);
}

Plan make_plan(const QueryAst& ast, const std::map<std::string, Schema>& inputs) {
    Plan plan;
    auto schema_of = [&](const std::string& name) -> const Schema& {
        auto it = inputs.find(name);
        if (it == inputs.end()) throw Error(ErrorCode::UnknownInput, "unknown input table '" + name + "'");
        return it->second;
    };
    plan.scope.add(ast.from, schema_of(ast.from));
    if (ast.join) {
        if (ast.join->table == ast.from) type_error("self-join of '" + ast.from + "' is not supported");
        plan.scope.add(ast.join->table, schema_of(ast.join->table));
        std::size_t a = plan.scope.resolve(ast.join->left);
        std::size_t b = plan.scope.resolve(ast.join->right);
        std::size_t left_width = schema_of(ast.from).arity();
        if ((a < left_width) == (b < left_width)) {
            type_error("join condition must relate " + ast.from + " and " + ast.join->table);
        }
        if (a > b) std::swap(a, b);
        ColumnType ta = plan.scope.at(a).type, tb = plan.scope.at(b).type;
        if (!(ta == tb || (is_numeric(ta) && is_numeric(tb)))) type_error("join keys have incompatible types");
        plan.join_cols = {a, b};
    }
    Binder binder(plan);
    if (ast.where) {
        if (contains_aggregate(*ast.where)) type_error("aggregates are not allowed in WHERE");
        plan.where = binder.bind_row(*ast.where);
        if (plan.where->type != ColumnType::Bool) type_error("WHERE predicate must be bool");
    }
    plan.aggregating = !ast.group_by.empty();
    for (const auto& item : ast.select) plan.aggregating = plan.aggregating || contains_aggregate(item.expr);
    for (const auto& g : ast.group_by) {
        std::size_t idx = plan.scope.resolve(g);
        if (std::find(plan.group_cols.begin(), plan.group_cols.end(), idx) != plan.group_cols.end()) {
            type_error("duplicate GROUP BY column '" + g.to_string() + "'");
        }
        plan.group_cols.push_back(idx);
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < ast.select.size(); ++i) {
        const auto& item = ast.select[i];
        plan.outputs.push_back(plan.aggregating ? binder.bind_grouped(item.expr) : binder.bind_row(item.expr));
        std::string name = item.alias ? *item.alias : default_name(item.expr, i);
        if (!names.insert(name).second) type_error("duplicate output column '" + name + "'");
        plan.schema.columns.push_back({name, plan.outputs.back().type});
    }
    return plan;
}

double as_double(const Value& v) {
    return type_of(v) == ColumnType::Int64 ? static_cast<double>(std::get<std::int64_t>(v)) : std::get<double>(v);
}

/// Join keys and comparisons treat int64/float64 pairs as float64.
Value promote(const Value& v, bool to_float) { return to_float ? Value{as_double(v)} : v; }

int compare(const Value& a, const Value& b) {
    if (type_of(a) != type_of(b)) {
        double x = as_double(a), y = as_double(b);
        return x < y ? -1 : (y < x ? 1 : 0);
    }
    return a < b ? -1 : (b < a ? 1 : 0);
}

double checked_float(double v) {
    if (std::isnan(v)) eval_error("arithmetic produced NaN");
    return v;
}

Value arithmetic(BinaryOp op, const Value& a, const Value& b) {
    if (type_of(a) == ColumnType::Int64 && type_of(b) == ColumnType::Int64) {
        std::int64_t x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b), r = 0;
        bool overflow = false;
        switch (op) {
        case BinaryOp::Add: overflow = __builtin_add_overflow(x, y, &r); break;
        case BinaryOp::Sub: overflow = __builtin_sub_overflow(x, y, &r); break;
        case BinaryOp::Mul: overflow = __builtin_mul_overflow(x, y, &r); break;
        default:
            if (y == 0) eval_error("division by zero");
            if (x == std::numeric_limits<std::int64_t>::min() && y == -1) overflow = true;
            else r = x / y;
        }
        if (overflow) eval_error("integer overflow");
        return r;
    }
    double x = as_double(a), y = as_double(b);
    switch (op) {
    case BinaryOp::Add: return checked_float(x + y);
    case BinaryOp::Sub: return checked_float(x - y);
    case BinaryOp::Mul: return checked_float(x * y);
    default:
        if (y == 0.0) eval_error("division by zero");
        return checked_float(x / y);
    }
}

/// `row` is a scope row, or the group key when evaluating grouped outputs.
Value eval(const Bound& b, const Row& row, const std::vector<Value>& aggs) {
    switch (b.kind) {
    case Expr::Kind::Literal: return b.literal;
    case Expr::Kind::Column: return row[b.index];
    case Expr::Kind::Aggregate: return aggs[b.index];
    case Expr::Kind::Unary: {
        Value v = eval(b.args[0], row, aggs);
        if (b.unary == UnaryOp::Not) return !std::get<bool>(v);
        if (type_of(v) == ColumnType::Float64) return -std::get<double>(v);
        std::int64_t x = std::get<std::int64_t>(v);
        if (x == std::numeric_limits<std::int64_t>::min()) eval_error("integer overflow");
        return -x;
    }
    case Expr::Kind::Binary: break;
    }
    if (b.binary == BinaryOp::And || b.binary == BinaryOp::Or) {
        // Left to right, short-circuit.
        bool l = std::get<bool>(eval(b.args[0], row, aggs));
        if (b.binary == BinaryOp::And && !l) return false;
        if (b.binary == BinaryOp::Or && l) return true;
        return std::get<bool>(eval(b.args[1], row, aggs));
    }
    Value l = eval(b.args[0], row, aggs);
    Value r = eval(b.args[1], row, aggs);
    switch (b.binary) {
    case BinaryOp::Eq: return compare(l, r) == 0;
    case BinaryOp::Ne: return compare(l, r) != 0;
    case BinaryOp::Lt: return compare(l, r) < 0;
    case BinaryOp::Le: return compare(l, r) <= 0;
    case BinaryOp::Gt: return compare(l, r) > 0;
    case BinaryOp::Ge: return compare(l, r) >= 0;
    default: return arithmetic(b.binary, l, r);
    }
}

class Accumulator {
public:
    explicit Accumulator(const AggSpec& spec) : spec_(spec) {}

    void add(const Row& row) {
        ++count_;
        if (spec_.fn == AggFunc::Count) return;
        const Value& v = row[spec_.column];
        switch (spec_.fn) {
        case AggFunc::Sum:
            if (spec_.input_type == ColumnType::Int64) {
                if (__builtin_add_overflow(int_sum_, std::get<std::int64_t>(v), &int_sum_)) {
                    eval_error("integer overflow in sum");
                }
            } else {
                float_sum_ = checked_float(float_sum_ + std::get<double>(v));
            }
            break;
        case AggFunc::Avg: float_sum_ = checked_float(float_sum_ + as_double(v)); break;
        case AggFunc::Min:
            if (!best_ || compare(v, *best_) < 0) best_ = v;
            break;
        case AggFunc::Max:
            if (!best_ || compare(v, *best_) > 0) best_ = v;
            break;
        case AggFunc::Count: break;
        }
    }

    Value result() const {
        switch (spec_.fn) {
        case AggFunc::Count: return count_;
        case AggFunc::Sum:
            if (spec_.input_type == ColumnType::Int64) return int_sum_;
            return float_sum_;
        case AggFunc::Avg:
            if (count_ == 0) eval_error("avg of empty input");
            return checked_float(float_sum_ / static_cast<double>(count_));
        case AggFunc::Min:
        case AggFunc::Max:
            if (!best_) eval_error(std::string(to_string(spec_.fn)) + " of empty input");
            return *best_;
        }
        return count_;
    }

private:
    const AggSpec& spec_;
    std::int64_t count_ = 0;
    std::int64_t int_sum_ = 0;
    double float_sum_ = 0.0;
    std::optional<Value> best_;
};

} // namespace

Schema check_query(const QueryAst& ast, const std::map<std::string, Schema>& inputs) {
    return make_plan(ast, inputs).schema;
}

TableData execute_query(const QueryAst& ast, const std::map<std::string, TableData>& bindings) {
    std::map<std::string, Schema> schemas;
    for (const auto& [name, table] : bindings) schemas[name] = table.schema;
    Plan plan = make_plan(ast, schemas);
    const TableData& left = bindings.at(ast.from);

    std::vector<Row> rows;
    if (!ast.join) {
        rows = left.rows;
    } else {
        const TableData& right = bindings.at(ast.join->table);
        std::size_t lw = left.schema.arity();
        std::size_t lk = plan.join_cols[0], rk = plan.join_cols[1] - lw;
        bool to_float = plan.scope.at(plan.join_cols[0]).type != plan.scope.at(plan.join_cols[1]).type;
        std::map<Value, std::vector<std::size_t>> index;
        for (std::size_t j = 0; j < right.rows.size(); ++j) {
            index[promote(right.rows[j][rk], to_float)].push_back(j);
        }
        for (const auto& l : left.rows) {
            auto it = index.find(promote(l[lk], to_float));
            if (it == index.end()) continue;
            for (std::size_t j : it->second) {
                Row joined = l;
                joined.insert(joined.end(), right.rows[j].begin(), right.rows[j].end());
                rows.push_back(std::move(joined));
            }
        }
    }

    if (plan.where) {
        std::vector<Row> kept;
        for (auto& r : rows) {
            if (std::get<bool>(eval(*plan.where, r, {}))) kept.push_back(std::move(r));
        }
        rows = std::move(kept);
    }

    TableData out{plan.schema, {}};
    if (!plan.aggregating) {
        out.rows.reserve(rows.size());
        for (const auto& r : rows) {
            Row projected;
            projected.reserve(plan.outputs.size());
            for (const auto& o : plan.outputs) projected.push_back(eval(o, r, {}));
            out.rows.push_back(std::move(projected));
        }
        return out;
    }

    struct Group {
        std::vector<Value> key;
        std::vector<Accumulator> accs;
    };
    std::vector<Group> groups;
    std::map<std::vector<Value>, std::size_t> by_key;
    auto new_group = [&](std::vector<Value> key) {
        Group g{std::move(key), {}};
        for (const auto& spec : plan.aggs) g.accs.emplace_back(spec);
        groups.push_back(std::move(g));
        return groups.size() - 1;
    };
    if (plan.group_cols.empty()) new_group({});
    for (const auto& r : rows) {
        std::vector<Value> key;
        for (std::size_t c : plan.group_cols) key.push_back(r[c]);
        std::size_t gi;
        if (plan.group_cols.empty()) {
            gi = 0;
        } else if (auto it = by_key.find(key); it != by_key.end()) {
            gi = it->second;
        } else {
            gi = new_group(key);
            by_key.emplace(std::move(key), gi);
        }
        for (auto& acc : groups[gi].accs) acc.add(r);
    }
    for (const auto& g : groups) {
        std::vector<Value> agg_values;
        for (const auto& acc : g.accs) agg_values.push_back(acc.result());
        Row projected;
        for (const auto& o : plan.outputs) projected.push_back(eval(o, g.key, agg_values));
        out.rows.push_back(std::move(projected));
    }
    return out;
}

} // namespace lake
