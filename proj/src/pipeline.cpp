#include "lakekernel/pipeline.hpp"

#include "lakekernel/error.hpp"

#include <algorithm>
#include <set>

namespace lake {

const NodeSpec* PipelineSpec::find(std::string_view node) const {
    for (const auto& n : nodes) {
        if (n.name == node) return &n;
    }
    return nullptr;
}

std::vector<std::string> PipelineSpec::source_tables() const {
    std::vector<std::string> out;
    for (const auto& n : nodes) {
        for (const auto& in : n.inputs) {
            if (!find(in) && std::find(out.begin(), out.end(), in) == out.end()) out.push_back(in);
        }
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::size_t indent_of(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    return i;
}

struct Line {
    std::size_t number;
    std::string_view text;
};

bool is_package_pin(std::string_view p) {
    auto eq = p.find("==");
    if (eq == std::string_view::npos || eq == 0 || eq + 2 >= p.size()) return false;
    return std::none_of(p.begin(), p.end(), [](char c) { return c == ' ' || c == ',' || c == '[' || c == ']'; });
}

class PipelineParser {
public:
    explicit PipelineParser(std::string_view text) {
        std::size_t start = 0, number = 1;
        while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            lines_.push_back({number++, text.substr(start, end - start)});
            start = end + 1;
        }
    }

    PipelineSpec parse() {
        PipelineSpec spec;
        skip_blank();
        if (at_end()) throw ParseError(1, 1, "empty pipeline file");
        {
            const Line& l = lines_[pos_++];
            std::string_view t = trim(l.text);
            if (t.rfind("pipeline ", 0) != 0) throw ParseError(l.number, 1, "expected 'pipeline <name>'");
            spec.name = std::string(trim(t.substr(9)));
            if (!is_identifier(spec.name)) throw ParseError(l.number, 10, "invalid pipeline name '" + spec.name + "'");
        }
        for (skip_blank(); !at_end(); skip_blank()) spec.nodes.push_back(node());
        if (spec.nodes.empty()) throw ParseError(lines_.back().number, 1, "pipeline has no nodes");
        check_graph(spec);
        return spec;
    }

private:
    bool at_end() const { return pos_ >= lines_.size(); }

    static bool blank(std::string_view t) {
        t = trim(t);
        return t.empty() || t.front() == '#';
    }

    void skip_blank() {
        while (!at_end() && blank(lines_[pos_].text)) ++pos_;
    }

    NodeSpec node() {
        const Line& header = lines_[pos_++];
        std::string_view t = trim(header.text);
        if (indent_of(header.text) != 0 || t.rfind("node ", 0) != 0 || t.back() != ':') {
            throw ParseError(header.number, 1, "expected 'node <name>:'");
        }
        NodeSpec node;
        node.name = std::string(trim(t.substr(5, t.size() - 6)));
        if (!is_identifier(node.name)) throw ParseError(header.number, 6, "invalid node name '" + node.name + "'");

        std::set<std::string> seen;
        std::string query_text;
        std::size_t query_line = 0;
        for (skip_blank(); !at_end() && indent_of(lines_[pos_].text) > 0; skip_blank()) {
            const Line& l = lines_[pos_++];
            std::size_t ind = indent_of(l.text);
            std::string_view body = trim(l.text);
            auto colon = body.find(':');
            if (colon == std::string_view::npos) throw ParseError(l.number, ind + 1, "expected '<field>: <value>'");
            std::string key(trim(body.substr(0, colon)));
            std::string_view value = trim(body.substr(colon + 1));
            std::size_t value_col = ind + colon + 2;
            if (!seen.insert(key).second) throw ParseError(l.number, ind + 1, "duplicate field '" + key + "'");
            if (key == "inputs") {
                node.inputs = identifiers(value, l.number, value_col);
            } else if (key == "env") {
                node.env = env(value, l.number, value_col);
            } else if (key == "materialize") {
                if (value != "REPLACE") {
                    throw ParseError(l.number, value_col, "unknown materialization '" + std::string(value) + "'");
                }
            } else if (key == "query") {
                query_text = std::string(value);
                query_line = l.number;
                // Continuation: following lines indented deeper than this field.
                while (!at_end() && !trim(lines_[pos_].text).empty() && indent_of(lines_[pos_].text) > ind) {
                    query_text += ' ';
                    query_text += trim(lines_[pos_++].text);
                }
            } else {
                throw ParseError(l.number, ind + 1, "unknown field '" + key + "'");
            }
        }
        for (const char* required : {"inputs", "env", "materialize", "query"}) {
            if (!seen.count(required)) {
                throw ParseError(header.number, 1, "node '" + node.name + "' is missing '" + required + "'");
            }
        }
        try {
            node.query = parse_query(query_text);
        } catch (const ParseError& e) {
            throw ParseError(query_line + e.line() - 1, e.column(), "node '" + node.name + "' query: " + e.what());
        }
        return node;
    }

    static std::vector<std::string> identifiers(std::string_view value, std::size_t line, std::size_t col) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (start <= value.size()) {
            std::size_t end = value.find(',', start);
            if (end == std::string_view::npos) end = value.size();
            std::string item(trim(value.substr(start, end - start)));
            if (!is_identifier(item)) throw ParseError(line, col + start, "invalid input name '" + item + "'");
            if (std::find(out.begin(), out.end(), item) != out.end()) {
                throw ParseError(line, col + start, "duplicate input '" + item + "'");
            }
            out.push_back(std::move(item));
            start = end + 1;
        }
        return out;
    }

    static EnvSpec env(std::string_view value, std::size_t line, std::size_t col) {
        EnvSpec env;
        if (value.rfind("runtime=", 0) != 0) throw ParseError(line, col, "env must start with runtime=<tag>");
        std::size_t space = value.find(' ');
        env.runtime = std::string(value.substr(8, space == std::string_view::npos ? value.npos : space - 8));
        if (env.runtime.empty()) throw ParseError(line, col + 8, "empty runtime tag");
        if (space == std::string_view::npos) throw ParseError(line, col, "env is missing packages=[...]");
        std::string_view rest = trim(value.substr(space));
        std::size_t rest_col = col + (value.size() - rest.size());
        if (rest.rfind("packages=[", 0) != 0 || rest.back() != ']') {
            throw ParseError(line, rest_col, "expected packages=[<name>==<version>, ...]");
        }
        std::string_view list = trim(rest.substr(10, rest.size() - 11));
        if (list.empty()) return env;
        std::size_t start = 0;
        while (start <= list.size()) {
            std::size_t end = list.find(',', start);
            if (end == std::string_view::npos) end = list.size();
            std::string pkg(trim(list.substr(start, end - start)));
            if (!is_package_pin(pkg)) throw ParseError(line, rest_col + 10 + start, "malformed package '" + pkg + "'");
            env.packages.push_back(std::move(pkg));
            start = end + 1;
        }
        return env;
    }

    static void check_graph(const PipelineSpec& spec) {
        std::set<std::string> declared;
        for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
            const auto& n = spec.nodes[i];
            if (declared.count(n.name)) throw Error(ErrorCode::ParseError, "duplicate node '" + n.name + "'");
            for (const auto& in : n.inputs) {
                for (std::size_t j = i; j < spec.nodes.size(); ++j) {
                    if (spec.nodes[j].name == in) {
                        throw Error(ErrorCode::CycleOrForwardRef,
                                    "node '" + n.name + "' reads '" + in + "', which is not declared before it");
                    }
                }
            }
            for (const auto& used : n.query.inputs()) {
                if (std::find(n.inputs.begin(), n.inputs.end(), used) == n.inputs.end()) {
                    throw Error(ErrorCode::UnknownInput,
                                "node '" + n.name + "' queries '" + used + "', which is not among its inputs");
                }
            }
            declared.insert(n.name);
        }
    }

    std::vector<Line> lines_;
    std::size_t pos_ = 0;
};

} // namespace

PipelineSpec parse_pipeline(std::string_view text) { return PipelineParser(text).parse(); }

std::string print_pipeline(const PipelineSpec& spec) {
    std::string out = "pipeline " + spec.name + "\n";
    for (const auto& n : spec.nodes) {
        out += "node " + n.name + ":\n  inputs: ";
        for (std::size_t i = 0; i < n.inputs.size(); ++i) out += (i ? ", " : "") + n.inputs[i];
        out += "\n  env: runtime=" + n.env.runtime + " packages=[";
        for (std::size_t i = 0; i < n.env.packages.size(); ++i) out += (i ? ", " : "") + n.env.packages[i];
        out += "]\n  materialize: REPLACE\n  query: " + print_query(n.query) + "\n";
    }
    return out;
}

std::vector<std::string> topological_order(const PipelineSpec& spec) {
    std::vector<std::string> order;
    std::vector<bool> done(spec.nodes.size(), false);
    auto produced = [&](const std::string& in) {
        return !spec.find(in) || std::find(order.begin(), order.end(), in) != order.end();
    };
    for (std::size_t step = 0; step < spec.nodes.size(); ++step) {
        std::size_t pick = spec.nodes.size();
        for (std::size_t i = 0; i < spec.nodes.size() && pick == spec.nodes.size(); ++i) {
            const auto& n = spec.nodes[i];
            if (!done[i] && std::all_of(n.inputs.begin(), n.inputs.end(), produced)) pick = i;
        }
        if (pick == spec.nodes.size()) throw Error(ErrorCode::CycleOrForwardRef, "pipeline graph has a cycle");
        done[pick] = true;
        order.push_back(spec.nodes[pick].name);
    }
    return order;
}

PipelinePlan plan(const PipelineSpec& spec, const std::map<std::string, Schema>& source_schemas) {
    PipelinePlan out;
    std::map<std::string, Schema> known = source_schemas;
    for (const auto& name : topological_order(spec)) {
        const NodeSpec& n = *spec.find(name);
        std::map<std::string, Schema> inputs;
        for (const auto& in : n.inputs) {
            auto it = known.find(in);
            if (it == known.end()) {
                throw Error(ErrorCode::UnknownInput, "node '" + n.name + "': unknown input table '" + in + "'");
            }
            inputs[in] = it->second;
        }
        try {
            out.output_schemas[n.name] = check_query(n.query, inputs);
        } catch (const Error& e) {
            throw Error(e.code(), "node '" + n.name + "': " + e.what());
        }
        known[n.name] = out.output_schemas[n.name];
        out.order.push_back(n.name);
    }
    return out;
}

} // namespace lake
