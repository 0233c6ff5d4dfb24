#pragma once

#include "lakekernel/table.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lake {

enum class UnaryOp { Not, Neg };
enum class BinaryOp { Add, Sub, Mul, Div, Eq, Ne, Lt, Le, Gt, Ge, And, Or };
enum class AggFunc { Count, Sum, Avg, Min, Max };

std::string_view to_string(BinaryOp op);
std::string_view to_string(AggFunc fn);

struct ColumnRef {
    std::string qualifier; // empty when unqualified
    std::string name;

    bool operator==(const ColumnRef&) const = default;
    std::string to_string() const { return qualifier.empty() ? name : qualifier + "." + name; }
};

/// Expression tree. Which fields are meaningful depends on `kind`:
///   Literal   -> literal
///   Column    -> column
///   Unary     -> unary, args[0]
///   Binary    -> binary, args[0], args[1]
///   Aggregate -> agg, column (unset with star for count(*))
struct Expr {
    enum class Kind { Literal, Column, Unary, Binary, Aggregate };

    Kind kind = Kind::Literal;
    Value literal = std::int64_t{0};
    ColumnRef column;
    UnaryOp unary = UnaryOp::Not;
    BinaryOp binary = BinaryOp::Add;
    AggFunc agg = AggFunc::Count;
    bool star = false;
    std::vector<Expr> args;

    bool operator==(const Expr&) const = default;

    static Expr lit(Value v);
    static Expr col(std::string name, std::string qualifier = {});
    static Expr un(UnaryOp op, Expr e);
    static Expr bin(BinaryOp op, Expr l, Expr r);
    static Expr aggregate(AggFunc fn, std::optional<ColumnRef> arg);
};

struct SelectItem {
    Expr expr;
    std::optional<std::string> alias;

    bool operator==(const SelectItem&) const = default;
};

struct JoinClause {
    std::string table;
    ColumnRef left;
    ColumnRef right;

    bool operator==(const JoinClause&) const = default;
};

struct QueryAst {
    std::vector<SelectItem> select;
    std::string from;
    std::optional<JoinClause> join;
    std::optional<Expr> where;
    std::vector<ColumnRef> group_by;

    bool operator==(const QueryAst&) const = default;

    /// Input tables the query reads (from, then join).
    std::vector<std::string> inputs() const;
};

/// SELECT item[, item]* FROM t [JOIN u ON t.c = u.c] [WHERE pred] [GROUP BY c[, c]*]
/// Keywords are case-insensitive. A minus sign directly before a numeric
/// literal folds into the literal.
QueryAst parse_query(std::string_view text);

/// Canonical text: binary and unary expressions fully parenthesized, so
/// parse_query(print_query(q)) == q for every canonical AST.
std::string print_query(const QueryAst& ast);
std::string print_expr(const Expr& e);

/// Type-checks `ast` against input schemas and returns the output schema.
/// Throws UnknownInput or TypeError.
Schema check_query(const QueryAst& ast, const std::map<std::string, Schema>& inputs);

/// Runs a query. The bindings are the only data it can see; there is no
/// catalog, clock or I/O behind this call.
///
/// Join is an inner equi-join emitting (left, right) pairs in nested-loop
/// order; group-by output follows first occurrence of each key. Division by
/// zero and integer overflow raise EvalError.
TableData execute_query(const QueryAst& ast, const std::map<std::string, TableData>& bindings);

/// True when the expression tree contains an aggregate call.
bool contains_aggregate(const Expr& e);

} // namespace lake
