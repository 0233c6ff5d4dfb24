#pragma once

#include "lakekernel/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lake {

enum class PermissionKind {
    ReadTable,   // (branch glob, table glob)
    WriteBranch, // (branch glob)
    CreateBranch,
    MergeInto,
    RunPipeline, // (pipeline name glob)
    RegisterVerifier,
    ManagePolicy,
};

std::string_view to_string(PermissionKind kind);

/// A grant held by a role. Unused globs are empty.
struct Permission {
    PermissionKind kind;
    std::string first_glob;
    std::string second_glob;

    bool operator==(const Permission&) const = default;

    /// `ReadTable:main:*`, `MergeInto:main`, `RegisterVerifier`, ...
    static Permission parse(std::string_view text);
    std::string to_string() const;
};

/// A concrete request checked against grants.
struct Action {
    PermissionKind kind;
    std::string target; // branch or pipeline name
    std::string table;  // ReadTable only

    bool operator==(const Action&) const = default;

    static Action read_table(std::string branch, std::string table);
    static Action write_branch(std::string branch);
    static Action create_branch(std::string branch);
    static Action merge_into(std::string branch);
    static Action run_pipeline(std::string pipeline);
    static Action register_verifier();
    static Action manage_policy();

    std::string to_string() const;
};

struct Role {
    std::string name;
    std::vector<Permission> permissions;
};

struct Principal {
    std::string name;
    std::vector<std::string> roles;
};

struct Policy {
    std::vector<Principal> principals;
    std::vector<Role> roles;
    std::vector<std::string> whitelist;

    /// Throws InvalidPolicy on dangling role references or duplicates.
    void validate() const;
};

/// `*` matches any run of characters (including none), `?` exactly one.
bool glob_match(std::string_view pattern, std::string_view text);

struct Decision {
    bool allowed = false;
    std::string reason;

    explicit operator bool() const { return allowed; }
};

/// Allow iff some role of the principal grants a matching permission.
Decision authorize(const Policy& policy, std::string_view principal, const Action& action);

/// Declared packages missing (verbatim) from the whitelist.
std::vector<std::string> check_env(const Policy& policy, const EnvSpec& env);

/// Parses the flat policy format:
///
///   whitelist = ["pandas==2.0", ...]
///   [[principal]]
///   name = "alice"
///   roles = ["admin"]
///   [[role]]
///   name = "admin"
///   permissions = ["ManagePolicy", "ReadTable:main:*"]
///
/// The result is validated as a whole; nothing is returned on error.
Policy parse_policy(std::string_view text);
Policy load_policy(const std::filesystem::path& path);

struct AuditRecord {
    std::uint64_t seq = 0;
    std::string principal;
    std::string api;
    std::vector<std::string> actions;
    bool allowed = false;
    std::string reason;
};

/// Holds the active policy and the audit trail. Each governed API call goes
/// through `check` exactly once and leaves exactly one AuditRecord.
class Governance {
public:
    explicit Governance(Policy policy = {}, std::optional<std::filesystem::path> audit_file = std::nullopt);

    /// Authorizes every action for one API call; denies on the first refusal.
    Decision check(std::string_view principal, std::string_view api, std::span<const Action> actions);
    Decision check(std::string_view principal, std::string_view api, const Action& action) {
        return check(principal, api, std::span<const Action>(&action, 1));
    }

    std::shared_ptr<const Policy> policy() const;
    /// Swaps the whole policy at once; concurrent checks see old or new.
    void replace_policy(Policy policy);

    std::vector<AuditRecord> audit_log() const;

private:
    mutable std::mutex mu_;
    std::shared_ptr<const Policy> policy_;
    std::vector<AuditRecord> audit_;
    std::optional<std::filesystem::path> audit_file_;
};

} // namespace lake
