#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lake {

enum class ColumnType { Int64, Float64, String, Bool };

std::string_view to_string(ColumnType type);
ColumnType column_type_from_string(std::string_view name);

/// A scalar cell. There is no null; absence is the writer's problem.
using Value = std::variant<std::int64_t, double, std::string, bool>;

ColumnType type_of(const Value& v);
std::string render_value(const Value& v);

struct Column {
    std::string name;
    ColumnType type;

    bool operator==(const Column&) const = default;
};

struct Schema {
    std::vector<Column> columns;

    bool operator==(const Schema&) const = default;

    std::size_t arity() const { return columns.size(); }
    /// Index of the column called `name`, or npos.
    std::size_t index_of(std::string_view name) const;
    std::string to_string() const;
};

using Row = std::vector<Value>;

struct TableData {
    Schema schema;
    std::vector<Row> rows;

    bool operator==(const TableData&) const = default;
};

/// `[a-z_][a-z0-9_]*`
bool is_identifier(std::string_view s);

/// Throws InvalidTable when the schema or any row violates the table rules.
void validate_table(const TableData& table);

/// Canonical text encoding. Bit-exact: the snapshot id is the SHA-256 of
/// these bytes.
///
///   line 1   `name:type` pairs joined by `,`
///   rows     values joined by `,`, one row per line
///   strings  RFC 4180 quoted iff they contain `,`, `"` or a newline
///   floats   shortest round-trip decimal
///   bools    `true` / `false`
///
/// Every line, including the last, ends with `\n`.
std::string encode_table(const TableData& table);

/// Inverse of encode_table. Rejects anything encode_table would not produce.
TableData decode_table(std::string_view bytes);

} // namespace lake
