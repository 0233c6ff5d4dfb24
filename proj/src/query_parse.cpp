#include "lakekernel/error.hpp"
#include "lakekernel/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace lake {

std::string_view to_string(BinaryOp op) {
    switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Eq: return "=";
    case BinaryOp::Ne: return "<>";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::And: return "AND";
    case BinaryOp::Or: return "OR";
    }
    return "?";
}

std::string_view to_string(AggFunc fn) {
    switch (fn) {
    case AggFunc::Count: return "count";
    case AggFunc::Sum: return "sum";
    case AggFunc::Avg: return "avg";
    case AggFunc::Min: return "min";
    case AggFunc::Max: return "max";
    }
    return "?";
}

Expr Expr::lit(Value v) {
    Expr e;
    e.kind = Kind::Literal;
    e.literal = std::move(v);
    return e;
}

Expr Expr::col(std::string name, std::string qualifier) {
    Expr e;
    e.kind = Kind::Column;
    e.column = {std::move(qualifier), std::move(name)};
    return e;
}

Expr Expr::un(UnaryOp op, Expr inner) {
    Expr e;
    e.kind = Kind::Unary;
    e.unary = op;
    e.args.push_back(std::move(inner));
    return e;
}

Expr Expr::bin(BinaryOp op, Expr l, Expr r) {
    Expr e;
    e.kind = Kind::Binary;
    e.binary = op;
    e.args.push_back(std::move(l));
    e.args.push_back(std::move(r));
    return e;
}

Expr Expr::aggregate(AggFunc fn, std::optional<ColumnRef> arg) {
    Expr e;
    e.kind = Kind::Aggregate;
    e.agg = fn;
    e.star = !arg.has_value();
    if (arg) e.column = std::move(*arg);
    return e;
}

std::vector<std::string> QueryAst::inputs() const {
    std::vector<std::string> out{from};
    if (join) out.push_back(join->table);
    return out;
}

bool contains_aggregate(const Expr& e) {
    if (e.kind == Expr::Kind::Aggregate) return true;
    return std::any_of(e.args.begin(), e.args.end(), contains_aggregate);
}

namespace {

enum class Tok { Word, Int, Float, String, Symbol, End };

struct Token {
    Tok kind;
    std::string text;
    std::size_t line;
    std::size_t column;
};

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_keyword(std::string_view word) {
    static constexpr std::string_view kKeywords[] = {"SELECT", "FROM", "JOIN", "INNER", "ON",  "WHERE",
                                                     "GROUP",  "BY",   "AS",   "AND",   "OR",  "NOT",
                                                     "TRUE",   "FALSE"};
    std::string u = upper(word);
    return std::find(std::begin(kKeywords), std::end(kKeywords), u) != std::end(kKeywords);
}

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0, line = 1, col = 1;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            if (s[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        std::size_t tl = line, tc = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
            out.push_back({Tok::Word, std::string(s.substr(i, j - i)), tl, tc});
            advance(j - i);
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            bool is_float = false;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            if (j + 1 < s.size() && s[j] == '.' && std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
                is_float = true;
                ++j;
                while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            }
            if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
                if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
                    is_float = true;
                    j = k;
                    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
                }
            }
            out.push_back({is_float ? Tok::Float : Tok::Int, std::string(s.substr(i, j - i)), tl, tc});
            advance(j - i);
        } else if (c == '\'') {
            std::string value;
            advance(1);
            for (;;) {
                if (i >= s.size()) throw ParseError(tl, tc, "unterminated string literal");
                if (s[i] == '\'') {
                    if (i + 1 < s.size() && s[i + 1] == '\'') {
                        value.push_back('\'');
                        advance(2);
                        continue;
                    }
                    advance(1);
                    break;
                }
                value.push_back(s[i]);
                advance(1);
            }
            out.push_back({Tok::String, std::move(value), tl, tc});
        } else {
            static constexpr std::string_view kTwo[] = {"<=", ">=", "<>", "!="};
            std::string_view two = s.substr(i, 2);
            if (std::find(std::begin(kTwo), std::end(kTwo), two) != std::end(kTwo)) {
                out.push_back({Tok::Symbol, std::string(two), tl, tc});
                advance(2);
            } else if (std::string_view("(),.*+-/=<>").find(c) != std::string_view::npos) {
                out.push_back({Tok::Symbol, std::string(1, c), tl, tc});
                advance(1);
            } else {
                throw ParseError(tl, tc, std::string("unexpected character '") + c + "'");
            }
        }
    }
    out.push_back({Tok::End, "", line, col});
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view text) : toks_(lex(text)) {}

    QueryAst query() {
        QueryAst q;
        expect_keyword("SELECT");
        do {
            SelectItem item{expr(), std::nullopt};
            if (accept_keyword("AS")) item.alias = identifier("alias");
            q.select.push_back(std::move(item));
        } while (accept_symbol(","));
        expect_keyword("FROM");
        q.from = identifier("table name");
        bool inner = accept_keyword("INNER");
        if (accept_keyword("JOIN")) {
            JoinClause j;
            j.table = identifier("table name");
            expect_keyword("ON");
            j.left = qualified_column();
            expect_symbol("=");
            j.right = qualified_column();
            q.join = std::move(j);
        } else if (inner) {
            fail(peek(), "expected JOIN after INNER");
        }
        if (accept_keyword("WHERE")) q.where = expr();
        if (accept_keyword("GROUP")) {
            expect_keyword("BY");
            do {
                q.group_by.push_back(column_ref());
            } while (accept_symbol(","));
        }
        if (peek().kind != Tok::End) fail(peek(), "unexpected '" + peek().text + "'");
        return q;
    }

private:
    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }

    [[noreturn]] void fail(const Token& t, const std::string& msg) const {
        throw ParseError(t.line, t.column, msg);
    }

    bool at_keyword(std::string_view kw) const {
        return peek().kind == Tok::Word && upper(peek().text) == kw;
    }

    bool accept_keyword(std::string_view kw) {
        if (!at_keyword(kw)) return false;
        ++pos_;
        return true;
    }

    void expect_keyword(std::string_view kw) {
        if (!accept_keyword(kw)) fail(peek(), "expected " + std::string(kw));
    }

    bool at_symbol(std::string_view sym) const { return peek().kind == Tok::Symbol && peek().text == sym; }

    bool accept_symbol(std::string_view sym) {
        if (!at_symbol(sym)) return false;
        ++pos_;
        return true;
    }

    void expect_symbol(std::string_view sym) {
        if (!accept_symbol(sym)) fail(peek(), "expected '" + std::string(sym) + "'");
    }

    std::string identifier(std::string_view what) {
        const Token& t = peek();
        if (t.kind != Tok::Word || is_keyword(t.text)) fail(t, "expected " + std::string(what));
        if (!is_identifier(t.text)) fail(t, "identifier '" + t.text + "' must match [a-z_][a-z0-9_]*");
        ++pos_;
        return t.text;
    }

    ColumnRef column_ref() {
        std::string first = identifier("column name");
        if (accept_symbol(".")) return {first, identifier("column name")};
        return {"", first};
    }

    ColumnRef qualified_column() {
        const Token& t = peek();
        ColumnRef c = column_ref();
        if (c.qualifier.empty()) fail(t, "join condition needs qualified columns (table.column)");
        return c;
    }

    Expr expr() { return disjunction(); }

    Expr disjunction() {
        Expr e = conjunction();
        while (accept_keyword("OR")) e = Expr::bin(BinaryOp::Or, std::move(e), conjunction());
        return e;
    }

    Expr conjunction() {
        Expr e = negation();
        while (accept_keyword("AND")) e = Expr::bin(BinaryOp::And, std::move(e), negation());
        return e;
    }

    Expr negation() {
        if (accept_keyword("NOT")) return Expr::un(UnaryOp::Not, negation());
        return comparison();
    }

    Expr comparison() {
        Expr e = additive();
        static const std::pair<std::string_view, BinaryOp> kOps[] = {
            {"=", BinaryOp::Eq}, {"<>", BinaryOp::Ne}, {"!=", BinaryOp::Ne}, {"<=", BinaryOp::Le},
            {">=", BinaryOp::Ge}, {"<", BinaryOp::Lt}, {">", BinaryOp::Gt}};
        for (const auto& [sym, op] : kOps) {
            if (accept_symbol(sym)) return Expr::bin(op, std::move(e), additive());
        }
        return e;
    }

    Expr additive() {
        Expr e = multiplicative();
        for (;;) {
            if (accept_symbol("+")) {
                e = Expr::bin(BinaryOp::Add, std::move(e), multiplicative());
            } else if (accept_symbol("-")) {
                e = Expr::bin(BinaryOp::Sub, std::move(e), multiplicative());
            } else {
                return e;
            }
        }
    }

    Expr multiplicative() {
        Expr e = unary();
        for (;;) {
            if (accept_symbol("*")) {
                e = Expr::bin(BinaryOp::Mul, std::move(e), unary());
            } else if (accept_symbol("/")) {
                e = Expr::bin(BinaryOp::Div, std::move(e), unary());
            } else {
                return e;
            }
        }
    }

    Expr unary() {
        if (at_symbol("-")) {
            ++pos_;
            if (peek().kind == Tok::Int || peek().kind == Tok::Float) return number(true);
            return Expr::un(UnaryOp::Neg, unary());
        }
        return primary();
    }

    Expr number(bool negative) {
        const Token& t = peek();
        std::string text = (negative ? "-" : "") + t.text;
        const char* first = text.data();
        const char* last = text.data() + text.size();
        if (t.kind == Tok::Int) {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || p != last) fail(t, "integer literal out of range");
            ++pos_;
            return Expr::lit(v);
        }
        double v = 0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || p != last) fail(t, "bad float literal");
        ++pos_;
        return Expr::lit(v);
    }

    Expr primary() {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::Int:
        case Tok::Float: return number(false);
        case Tok::String: ++pos_; return Expr::lit(t.text);
        case Tok::Symbol:
            if (accept_symbol("(")) {
                Expr e = expr();
                expect_symbol(")");
                return e;
            }
            fail(t, "unexpected '" + t.text + "'");
        case Tok::End: fail(t, "unexpected end of query");
        case Tok::Word: break;
        }
        if (accept_keyword("TRUE")) return Expr::lit(true);
        if (accept_keyword("FALSE")) return Expr::lit(false);
        if (peek(1).kind == Tok::Symbol && peek(1).text == "(") {
            static const std::pair<std::string_view, AggFunc> kAggs[] = {{"count", AggFunc::Count},
                                                                          {"sum", AggFunc::Sum},
                                                                          {"avg", AggFunc::Avg},
                                                                          {"min", AggFunc::Min},
                                                                          {"max", AggFunc::Max}};
            std::string name = lower(t.text);
            for (const auto& [fname, fn] : kAggs) {
                if (name != fname) continue;
                pos_ += 2;
                std::optional<ColumnRef> arg;
                if (accept_symbol("*")) {
                    if (fn != AggFunc::Count) fail(t, std::string(fname) + "(*) is not allowed");
                } else {
                    arg = column_ref();
                }
                expect_symbol(")");
                return Expr::aggregate(fn, std::move(arg));
            }
            fail(t, "unknown function '" + t.text + "'");
        }
        ColumnRef c = column_ref();
        return Expr::col(std::move(c.name), std::move(c.qualifier));
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

std::string print_literal(const Value& v) {
    switch (type_of(v)) {
    case ColumnType::Int64: return std::to_string(std::get<std::int64_t>(v));
    case ColumnType::Bool: return std::get<bool>(v) ? "TRUE" : "FALSE";
    case ColumnType::Float64: {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, std::get<double>(v));
        std::string s(buf, res.ptr);
        if (s.find_first_of(".en") == std::string::npos) s += ".0";
        return s;
    }
    case ColumnType::String: {
        std::string out = "'";
        for (char c : std::get<std::string>(v)) {
            if (c == '\'') out.push_back('\'');
            out.push_back(c);
        }
        out.push_back('\'');
        return out;
    }
    }
    return "";
}

} // namespace

QueryAst parse_query(std::string_view text) { return Parser(text).query(); }

std::string print_expr(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::Literal: return print_literal(e.literal);
    case Expr::Kind::Column: return e.column.to_string();
    case Expr::Kind::Unary:
        return e.unary == UnaryOp::Not ? "(NOT " + print_expr(e.args[0]) + ")"
                                       : "(-" + print_expr(e.args[0]) + ")";
    case Expr::Kind::Binary:
        return "(" + print_expr(e.args[0]) + " " + std::string(to_string(e.binary)) + " " +
               print_expr(e.args[1]) + ")";
    case Expr::Kind::Aggregate:
        return std::string(to_string(e.agg)) + "(" + (e.star ? "*" : e.column.to_string()) + ")";
    }
    return "";
}

std::string print_query(const QueryAst& q) {
    std::string out = "SELECT ";
    for (std::size_t i = 0; i < q.select.size(); ++i) {
        if (i) out += ", ";
        out += print_expr(q.select[i].expr);
        if (q.select[i].alias) out += " AS " + *q.select[i].alias;
    }
    out += " FROM " + q.from;
    if (q.join) {
        out += " JOIN " + q.join->table + " ON " + q.join->left.to_string() + " = " + q.join->right.to_string();
    }
    if (q.where) out += " WHERE " + print_expr(*q.where);
    if (!q.group_by.empty()) {
        out += " GROUP BY ";
        for (std::size_t i = 0; i < q.group_by.size(); ++i) {
            if (i) out += ", ";
            out += q.group_by[i].to_string();
        }
    }
    return out;
}

} // namespace lake
