#pragma once

#include "lakekernel/query.hpp"

#include <map>
#include <string>
#include <vector>

namespace lake {

/// Declared execution environment. It does not change query semantics; it is
/// what governance checks against the package whitelist.
struct EnvSpec {
    std::string runtime;
    std::vector<std::string> packages; // "name==version"

    bool operator==(const EnvSpec&) const = default;
};

enum class Materialization { Replace };

struct NodeSpec {
    std::string name;
    std::vector<std::string> inputs;
    EnvSpec env;
    Materialization materialization = Materialization::Replace;
    QueryAst query;

    bool operator==(const NodeSpec&) const = default;
};

struct PipelineSpec {
    std::string name;
    std::vector<NodeSpec> nodes;

    bool operator==(const PipelineSpec&) const = default;

    const NodeSpec* find(std::string_view node) const;
    /// Inputs that are not produced by any node, in first-use order.
    std::vector<std::string> source_tables() const;
};

/// Parses the pipeline file format:
///
///   pipeline <ident>
///   node <ident>:
///     inputs: <ident>[, <ident>]*
///     env: runtime=<tag> packages=[<name>==<ver>[, ...]]
///     materialize: REPLACE
///     query: <sql, may continue on further-indented lines>
///
/// Blank lines and `#` comments are ignored. Throws ParseError (with
/// line/column), or Error(CycleOrForwardRef) when a node reads itself or a
/// node declared after it.
PipelineSpec parse_pipeline(std::string_view text);

/// Canonical pipeline text; parse_pipeline(print_pipeline(p)) == p.
std::string print_pipeline(const PipelineSpec& spec);

/// Node names in dependency order, declaration order among ready nodes.
std::vector<std::string> topological_order(const PipelineSpec& spec);

struct PipelinePlan {
    std::vector<std::string> order;
    std::map<std::string, Schema> output_schemas;
};

/// Topological order (declaration order among ready nodes) and each node's
/// output schema. Throws UnknownInput or TypeError naming the node.
PipelinePlan plan(const PipelineSpec& spec, const std::map<std::string, Schema>& source_schemas);

} // namespace lake
