#include "lakekernel/governance.hpp"

#include "fsutil.hpp"
#include "lakekernel/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace lake {

std::string_view to_string(PermissionKind kind) {
    switch (kind) {
    case PermissionKind::ReadTable: return "ReadTable";
    case PermissionKind::WriteBranch: return "WriteBranch";
    case PermissionKind::CreateBranch: return "CreateBranch";
    case PermissionKind::MergeInto: return "MergeInto";
    case PermissionKind::RunPipeline: return "RunPipeline";
    case PermissionKind::RegisterVerifier: return "RegisterVerifier";
    case PermissionKind::ManagePolicy: return "ManagePolicy";
    }
    return "?";
}

namespace {

int glob_arity(PermissionKind kind) {
    switch (kind) {
    case PermissionKind::ReadTable: return 2;
    case PermissionKind::RegisterVerifier:
    case PermissionKind::ManagePolicy: return 0;
    default: return 1;
    }
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t end = s.find(sep, start);
        out.emplace_back(s.substr(start, end == std::string_view::npos ? s.npos : end - start));
        if (end == std::string_view::npos) return out;
        start = end + 1;
    }
}

} // namespace

Permission Permission::parse(std::string_view text) {
    auto parts = split(text, ':');
    static constexpr PermissionKind kKinds[] = {
        PermissionKind::ReadTable,   PermissionKind::WriteBranch,      PermissionKind::CreateBranch,
        PermissionKind::MergeInto,   PermissionKind::RunPipeline,      PermissionKind::RegisterVerifier,
        PermissionKind::ManagePolicy};
    for (PermissionKind kind : kKinds) {
        if (parts[0] != lake::to_string(kind)) continue;
        int arity = glob_arity(kind);
        if (static_cast<int>(parts.size()) != arity + 1) {
            throw Error(ErrorCode::InvalidPolicy, "permission '" + std::string(text) + "' expects " +
                                                      std::to_string(arity) + " pattern(s)");
        }
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (parts[i].empty()) throw Error(ErrorCode::InvalidPolicy, "empty pattern in '" + std::string(text) + "'");
        }
        return {kind, arity > 0 ? parts[1] : "", arity > 1 ? parts[2] : ""};
    }
    throw Error(ErrorCode::InvalidPolicy, "unknown permission kind in '" + std::string(text) + "'");
}

std::string Permission::to_string() const {
    std::string out(lake::to_string(kind));
    int arity = glob_arity(kind);
    if (arity > 0) out += ":" + first_glob;
    if (arity > 1) out += ":" + second_glob;
    return out;
}

Action Action::read_table(std::string branch, std::string table) {
    return {PermissionKind::ReadTable, std::move(branch), std::move(table)};
}
Action Action::write_branch(std::string branch) { return {PermissionKind::WriteBranch, std::move(branch), {}}; }
Action Action::create_branch(std::string branch) { return {PermissionKind::CreateBranch, std::move(branch), {}}; }
Action Action::merge_into(std::string branch) { return {PermissionKind::MergeInto, std::move(branch), {}}; }
Action Action::run_pipeline(std::string pipeline) { return {PermissionKind::RunPipeline, std::move(pipeline), {}}; }
Action Action::register_verifier() { return {PermissionKind::RegisterVerifier, {}, {}}; }
Action Action::manage_policy() { return {PermissionKind::ManagePolicy, {}, {}}; }

std::string Action::to_string() const {
    return Permission{kind, target, table}.to_string();
}

bool glob_match(std::string_view pattern, std::string_view text) {
    // Iterative matcher with single-star backtracking.
    std::size_t p = 0, t = 0;
    std::size_t star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

void Policy::validate() const {
    std::set<std::string> role_names;
    for (const auto& r : roles) {
        if (r.name.empty()) throw Error(ErrorCode::InvalidPolicy, "role without a name");
        if (!role_names.insert(r.name).second) throw Error(ErrorCode::InvalidPolicy, "duplicate role '" + r.name + "'");
    }
    std::set<std::string> principal_names;
    for (const auto& p : principals) {
        if (p.name.empty()) throw Error(ErrorCode::InvalidPolicy, "principal without a name");
        if (!principal_names.insert(p.name).second) {
            throw Error(ErrorCode::InvalidPolicy, "duplicate principal '" + p.name + "'");
        }
        for (const auto& r : p.roles) {
            if (!role_names.count(r)) {
                throw Error(ErrorCode::InvalidPolicy, "principal '" + p.name + "' references undefined role '" + r + "'");
            }
        }
    }
    for (const auto& w : whitelist) {
        auto eq = w.find("==");
        if (eq == std::string::npos || eq == 0 || eq + 2 >= w.size()) {
            throw Error(ErrorCode::InvalidPolicy, "whitelist entry '" + w + "' is not name==version");
        }
    }
}

Decision authorize(const Policy& policy, std::string_view principal, const Action& action) {
    auto who = std::find_if(policy.principals.begin(), policy.principals.end(),
                            [&](const Principal& p) { return p.name == principal; });
    if (who == policy.principals.end()) {
        return {false, "unknown principal '" + std::string(principal) + "'"};
    }
    for (const auto& role_name : who->roles) {
        auto role = std::find_if(policy.roles.begin(), policy.roles.end(),
                                 [&](const Role& r) { return r.name == role_name; });
        if (role == policy.roles.end()) continue;
        for (const auto& perm : role->permissions) {
            if (perm.kind != action.kind) continue;
            int arity = glob_arity(perm.kind);
            if (arity >= 1 && !glob_match(perm.first_glob, action.target)) continue;
            if (arity >= 2 && !glob_match(perm.second_glob, action.table)) continue;
            return {true, "granted by role '" + role->name + "' (" + perm.to_string() + ")"};
        }
    }
    return {false, "principal '" + std::string(principal) + "' lacks " + action.to_string()};
}

std::vector<std::string> check_env(const Policy& policy, const EnvSpec& env) {
    std::vector<std::string> missing;
    for (const auto& pkg : env.packages) {
        if (std::find(policy.whitelist.begin(), policy.whitelist.end(), pkg) == policy.whitelist.end()) {
            missing.push_back(pkg);
        }
    }
    return missing;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void policy_parse_error(std::size_t line, const std::string& msg) {
    throw ParseError(line, 1, "policy: " + msg);
}

std::string parse_string(std::string_view v, std::size_t line) {
    if (v.size() < 2 || v.front() != '"' || v.back() != '"') policy_parse_error(line, "expected a quoted string");
    std::string_view inner = v.substr(1, v.size() - 2);
    if (inner.find('"') != std::string_view::npos) policy_parse_error(line, "unexpected '\"' inside string");
    return std::string(inner);
}

std::vector<std::string> parse_string_array(std::string_view v, std::size_t line) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') policy_parse_error(line, "expected [\"...\", ...]");
    std::string_view inner = trim(v.substr(1, v.size() - 2));
    std::vector<std::string> out;
    if (inner.empty()) return out;
    for (const auto& item : split(inner, ',')) out.push_back(parse_string(trim(item), line));
    return out;
}

} // namespace

Policy parse_policy(std::string_view text) {
    Policy policy;
    enum class Section { Top, Principal, Role } section = Section::Top;
    std::set<std::string> keys;
    auto lines = split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::size_t number = i + 1;
        std::string_view l = trim(lines[i]);
        if (l.empty() || l.front() == '#') continue;
        if (l == "[[principal]]") {
            policy.principals.emplace_back();
            section = Section::Principal;
            keys.clear();
            continue;
        }
        if (l == "[[role]]") {
            policy.roles.emplace_back();
            section = Section::Role;
            keys.clear();
            continue;
        }
        auto eq = l.find('=');
        if (eq == std::string_view::npos) policy_parse_error(number, "expected key = value");
        std::string key(trim(l.substr(0, eq)));
        std::string_view value = trim(l.substr(eq + 1));
        if (!keys.insert(key).second) policy_parse_error(number, "duplicate key '" + key + "'");
        switch (section) {
        case Section::Top:
            if (key != "whitelist") policy_parse_error(number, "unknown top-level key '" + key + "'");
            policy.whitelist = parse_string_array(value, number);
            break;
        case Section::Principal:
            if (key == "name") {
                policy.principals.back().name = parse_string(value, number);
            } else if (key == "roles") {
                policy.principals.back().roles = parse_string_array(value, number);
            } else {
                policy_parse_error(number, "unknown principal key '" + key + "'");
            }
            break;
        case Section::Role:
            if (key == "name") {
                policy.roles.back().name = parse_string(value, number);
            } else if (key == "permissions") {
                for (const auto& p : parse_string_array(value, number)) {
                    policy.roles.back().permissions.push_back(Permission::parse(p));
                }
            } else {
                policy_parse_error(number, "unknown role key '" + key + "'");
            }
            break;
        }
    }
    policy.validate();
    return policy;
}

Policy load_policy(const std::filesystem::path& path) {
    auto text = detail::read_file(path);
    if (!text) throw Error(ErrorCode::NotFound, "policy file " + path.string() + " not found");
    return parse_policy(*text);
}

Governance::Governance(Policy policy, std::optional<std::filesystem::path> audit_file)
    : policy_(std::make_shared<const Policy>(std::move(policy))), audit_file_(std::move(audit_file)) {}

std::shared_ptr<const Policy> Governance::policy() const {
    std::lock_guard lock(mu_);
    return policy_;
}

void Governance::replace_policy(Policy policy) {
    policy.validate();
    auto next = std::make_shared<const Policy>(std::move(policy));
    std::lock_guard lock(mu_);
    policy_ = std::move(next);
}

Decision Governance::check(std::string_view principal, std::string_view api, std::span<const Action> actions) {
    auto snapshot = policy();
    Decision decision{true, "no permission required"};
    AuditRecord record;
    record.principal = principal;
    record.api = api;
    for (const auto& a : actions) {
        record.actions.push_back(a.to_string());
        if (!decision) continue;
        decision = authorize(*snapshot, principal, a);
    }
    record.allowed = decision.allowed;
    record.reason = decision.reason;
    std::lock_guard lock(mu_);
    record.seq = audit_.size() + 1;
    if (audit_file_) {
        nlohmann::json line = {{"seq", record.seq},         {"principal", record.principal},
                               {"api", record.api},         {"actions", record.actions},
                               {"allowed", record.allowed}, {"reason", record.reason}};
        detail::append_line(*audit_file_, line.dump());
    }
    audit_.push_back(std::move(record));
    return decision;
}

std::vector<AuditRecord> Governance::audit_log() const {
    std::lock_guard lock(mu_);
    return audit_;
}

} // namespace lake
