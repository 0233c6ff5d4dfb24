#include "lakekernel/table.hpp"

#include "lakekernel/error.hpp"

#include <charconv>
#include <cmath>
#include <set>

namespace lake {

std::string_view to_string(ColumnType type) {
    switch (type) {
    case ColumnType::Int64: return "int64";
    case ColumnType::Float64: return "float64";
    case ColumnType::String: return "string";
    case ColumnType::Bool: return "bool";
    }
    return "?";
}

ColumnType column_type_from_string(std::string_view name) {
    if (name == "int64") return ColumnType::Int64;
    if (name == "float64") return ColumnType::Float64;
    if (name == "string") return ColumnType::String;
    if (name == "bool") return ColumnType::Bool;
    throw Error(ErrorCode::InvalidTable, "unknown column type '" + std::string(name) + "'");
}

ColumnType type_of(const Value& v) {
    return static_cast<ColumnType>(v.index());
}

namespace {

std::string render_double(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, res.ptr);
}

bool needs_quotes(std::string_view s) {
    return s.find_first_of(",\"\n") != std::string_view::npos;
}

void append_field(std::string& out, const Value& v) {
    switch (type_of(v)) {
    case ColumnType::Int64: out += std::to_string(std::get<std::int64_t>(v)); break;
    case ColumnType::Float64: out += render_double(std::get<double>(v)); break;
    case ColumnType::Bool: out += std::get<bool>(v) ? "true" : "false"; break;
    case ColumnType::String: {
        const auto& s = std::get<std::string>(v);
        if (!needs_quotes(s)) {
            out += s;
            break;
        }
        out.push_back('"');
        for (char c : s) {
            if (c == '"') out.push_back('"');
            out.push_back(c);
        }
        out.push_back('"');
        break;
    }
    }
}

} // namespace

std::string render_value(const Value& v) {
    if (type_of(v) == ColumnType::String) return std::get<std::string>(v);
    std::string out;
    append_field(out, v);
    return out;
}

std::size_t Schema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return i;
    }
    return std::string_view::npos;
}

std::string Schema::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out.push_back(',');
        out += columns[i].name;
        out.push_back(':');
        out += lake::to_string(columns[i].type);
    }
    return out;
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    auto head = [](char c) { return (c >= 'a' && c <= 'z') || c == '_'; };
    if (!head(s[0])) return false;
    for (char c : s) {
        if (!head(c) && !(c >= '0' && c <= '9')) return false;
    }
    return true;
}

void validate_table(const TableData& table) {
    const auto& cols = table.schema.columns;
    if (cols.empty()) throw Error(ErrorCode::InvalidTable, "schema has no columns");
    std::set<std::string_view> seen;
    for (const auto& c : cols) {
        if (!is_identifier(c.name)) {
            throw Error(ErrorCode::InvalidTable, "invalid column name '" + c.name + "'");
        }
        if (!seen.insert(c.name).second) {
            throw Error(ErrorCode::InvalidTable, "duplicate column name '" + c.name + "'");
        }
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != cols.size()) {
            throw Error(ErrorCode::InvalidTable, "row " + std::to_string(r) + " has " +
                                                     std::to_string(row.size()) + " values, expected " +
                                                     std::to_string(cols.size()));
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (type_of(row[c]) != cols[c].type) {
                throw Error(ErrorCode::InvalidTable, "row " + std::to_string(r) + " column '" +
                                                         cols[c].name + "' is not " +
                                                         std::string(to_string(cols[c].type)));
            }
            if (cols[c].type == ColumnType::Float64 && std::isnan(std::get<double>(row[c]))) {
                throw Error(ErrorCode::InvalidTable, "NaN in column '" + cols[c].name + "'");
            }
        }
    }
}

std::string encode_table(const TableData& table) {
    validate_table(table);
    std::string out = table.schema.to_string();
    out.push_back('\n');
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out.push_back(',');
            append_field(out, row[c]);
        }
        out.push_back('\n');
    }
    return out;
}

namespace {

class Decoder {
public:
    explicit Decoder(std::string_view bytes) : s_(bytes) {}

    TableData run() {
        TableData t;
        for (;;) {
            std::string_view field = raw_field();
            auto colon = field.find(':');
            if (colon == std::string_view::npos) fail("header field without ':'");
            t.schema.columns.push_back(
                {std::string(field.substr(0, colon)), column_type_from_string(field.substr(colon + 1))});
            if (take('\n')) break;
            if (!take(',')) fail("expected ',' or newline in header");
        }
        const auto& cols = t.schema.columns;
        while (pos_ < s_.size()) {
            Row row;
            row.reserve(cols.size());
            for (std::size_t c = 0; c < cols.size(); ++c) {
                row.push_back(value(cols[c].type));
                char sep = c + 1 == cols.size() ? '\n' : ',';
                if (!take(sep)) fail(sep == '\n' ? "expected end of row" : "expected ','");
            }
            t.rows.push_back(std::move(row));
        }
        validate_table(t);
        return t;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::InvalidTable, "decode at byte " + std::to_string(pos_) + ": " + what);
    }

    bool take(char c) {
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string_view raw_field() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != '\n') ++pos_;
        return s_.substr(start, pos_ - start);
    }

    std::string quoted() {
        std::string out;
        ++pos_; // opening quote
        for (;;) {
            if (pos_ >= s_.size()) fail("unterminated quoted string");
            char c = s_[pos_++];
            if (c != '"') {
                out.push_back(c);
            } else if (pos_ < s_.size() && s_[pos_] == '"') {
                out.push_back('"');
                ++pos_;
            } else {
                return out;
            }
        }
    }

    Value value(ColumnType type) {
        if (type == ColumnType::String) {
            if (pos_ < s_.size() && s_[pos_] == '"') return quoted();
            return std::string(raw_field());
        }
        std::string_view f = raw_field();
        const char* first = f.data();
        const char* last = f.data() + f.size();
        switch (type) {
        case ColumnType::Int64: {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || p != last || f.empty()) fail("bad int64 '" + std::string(f) + "'");
            return v;
        }
        case ColumnType::Float64: {
            double v = 0;
            auto [p, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || p != last || f.empty()) fail("bad float64 '" + std::string(f) + "'");
            return v;
        }
        case ColumnType::Bool:
            if (f == "true") return true;
            if (f == "false") return false;
            fail("bad bool '" + std::string(f) + "'");
        case ColumnType::String: break;
        }
        fail("unreachable");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace

TableData decode_table(std::string_view bytes) {
    TableData t = Decoder(bytes).run();
    // Only canonical encodings are accepted.
    if (encode_table(t) != bytes) {
        throw Error(ErrorCode::InvalidTable, "decode: input is not in canonical form");
    }
    return t;
}

} // namespace lake
