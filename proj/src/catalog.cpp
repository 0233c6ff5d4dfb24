#include "lakekernel/catalog.hpp"

#include "fsutil.hpp"
#include "lakekernel/error.hpp"
#include "lakekernel/hash.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <set>
#include <unordered_set>

namespace lake {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMergeAttempts = 5;

std::string short_id(const CommitId& id) { return id.hex.substr(0, 12); }

} // namespace

Clock system_clock() {
    return [] {
        return static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                             std::chrono::system_clock::now().time_since_epoch())
                                             .count());
    };
}

Clock counting_clock(std::int64_t start) {
    auto next = std::make_shared<std::atomic<std::int64_t>>(start);
    return [next] { return next->fetch_add(1); };
}

std::string Commit::canonical_body() const {
    json parents_json = json::array();
    for (const auto& p : parents) parents_json.push_back(p.hex);
    json tables_json = json::object();
    for (const auto& [name, sid] : tables) tables_json[name] = sid.hex;
    json body = {{"author", author},
                 {"message", message},
                 {"parents", parents_json},
                 {"tables", tables_json},
                 {"timestamp", timestamp}};
    return body.dump();
}

Commit Commit::from_body(const std::string& body) {
    json j = json::parse(body);
    Commit c;
    for (const auto& p : j.at("parents")) c.parents.push_back({p.get<std::string>()});
    for (const auto& [name, sid] : j.at("tables").items()) c.tables[name] = {sid.get<std::string>()};
    c.author = j.at("author").get<std::string>();
    c.message = j.at("message").get<std::string>();
    c.timestamp = j.at("timestamp").get<std::int64_t>();
    c.id = {sha256_hex(body)};
    return c;
}

bool is_branch_name(std::string_view name) {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '/' || c == '.' ||
               c == '-';
    });
}

std::string_view to_string(MergeResult::Kind kind) {
    switch (kind) {
    case MergeResult::Kind::FastForward: return "FastForward";
    case MergeResult::Kind::MergeCommit: return "MergeCommit";
    case MergeResult::Kind::Conflict: return "Conflict";
    case MergeResult::Kind::RefRaced: return "RefRaced";
    }
    return "?";
}

std::string_view to_string(DiffStatus status) {
    switch (status) {
    case DiffStatus::Added: return "Added";
    case DiffStatus::Removed: return "Removed";
    case DiffStatus::Changed: return "Changed";
    }
    return "?";
}

ThreeWayOutcome three_way_merge(const TableMap& base, const TableMap& source, const TableMap& target) {
    std::set<std::string> names;
    for (const auto* m : {&base, &source, &target}) {
        for (const auto& [name, _] : *m) names.insert(name);
    }
    auto lookup = [](const TableMap& m, const std::string& k) -> std::optional<SnapshotId> {
        auto it = m.find(k);
        if (it == m.end()) return std::nullopt;
        return it->second;
    };
    ThreeWayOutcome out;
    for (const auto& name : names) {
        auto b = lookup(base, name);
        auto s = lookup(source, name);
        auto t = lookup(target, name);
        std::optional<SnapshotId> pick;
        if (s == b) {
            pick = t;
        } else if (t == b) {
            pick = s;
        } else if (s == t) {
            pick = s;
        } else {
            out.conflicts.push_back(name);
            continue;
        }
        if (pick) out.merged[name] = *pick;
    }
    return out;
}

Catalog::Catalog(fs::path root, SnapshotStore& store, Clock clock)
    : root_(std::move(root)), store_(store), clock_(std::move(clock)) {
    std::error_code ec;
    fs::create_directories(root_ / "commits", ec);
    if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + (root_ / "commits").string());
}

bool Catalog::initialized() const { return fs::exists(root_ / "refs.json"); }

bool Catalog::initialize(const std::string& author) {
    detail::FileLock lock(root_ / "refs.lock");
    if (initialized()) return false;
    Commit root;
    root.author = author;
    root.message = "init";
    root.timestamp = clock_();
    write_commit(root);
    store_refs({{"main", root.id.hex}}, {{"main", "", root.id.hex}});
    return true;
}

Catalog::Refs Catalog::load_refs() const {
    auto text = detail::read_file(root_ / "refs.json");
    if (!text) throw Error(ErrorCode::NotFound, "catalog at " + root_.string() + " is not initialized");
    Refs refs;
    json j = json::parse(*text);
    for (const auto& [name, id] : j.items()) refs[name] = id.get<std::string>();
    return refs;
}

void Catalog::store_refs(const Refs& refs, const std::vector<RefUpdate>& updates) {
    // Caller holds refs.lock. The reflog line goes first: a crash between the
    // two leaves an extra reflog entry, never a ref move without one.
    for (const auto& u : updates) {
        json line = {{"branch", u.branch}, {"old", u.old_head}, {"new", u.new_head}};
        detail::append_line(root_ / "reflog.jsonl", line.dump());
    }
    detail::atomic_write_file(root_ / "refs.json", json(refs).dump());
}

std::vector<RefUpdate> Catalog::reflog() const {
    std::vector<RefUpdate> out;
    auto text = detail::read_file(root_ / "reflog.jsonl");
    if (!text) return out;
    std::size_t start = 0;
    while (start < text->size()) {
        std::size_t end = text->find('\n', start);
        if (end == std::string::npos) end = text->size();
        if (end > start) {
            json j = json::parse(text->substr(start, end - start));
            out.push_back({j.at("branch"), j.at("old"), j.at("new")});
        }
        start = end + 1;
    }
    return out;
}

CommitId Catalog::write_commit(Commit& commit) {
    std::string body = commit.canonical_body();
    commit.id = {sha256_hex(body)};
    fs::path path = root_ / "commits" / commit.id.hex;
    if (!fs::exists(path)) detail::atomic_write_file(path, body);
    std::unique_lock lock(cache_mu_);
    cache_.emplace(commit.id.hex, commit);
    return commit.id;
}

Commit Catalog::get_commit(const CommitId& id) const {
    {
        std::shared_lock lock(cache_mu_);
        auto it = cache_.find(id.hex);
        if (it != cache_.end()) return it->second;
    }
    if (!is_hex_digest(id.hex)) throw Error(ErrorCode::UnknownRef, "unknown commit '" + id.hex + "'");
    auto body = detail::read_file(root_ / "commits" / id.hex);
    if (!body) throw Error(ErrorCode::UnknownRef, "unknown commit '" + id.hex + "'");
    Commit c = Commit::from_body(*body);
    if (c.id != id) throw Error(ErrorCode::StorageFailure, "commit " + id.hex + " hash mismatch");
    std::unique_lock lock(cache_mu_);
    cache_.emplace(id.hex, c);
    return c;
}

bool Catalog::has_commit(const CommitId& id) const {
    if (!is_hex_digest(id.hex)) return false;
    {
        std::shared_lock lock(cache_mu_);
        if (cache_.count(id.hex)) return true;
    }
    return fs::exists(root_ / "commits" / id.hex);
}

std::optional<CommitId> Catalog::try_head(std::string_view branch) const {
    Refs refs = load_refs();
    auto it = refs.find(std::string(branch));
    if (it == refs.end()) return std::nullopt;
    return CommitId{it->second};
}

CommitId Catalog::head(std::string_view branch) const {
    auto h = try_head(branch);
    if (!h) throw Error(ErrorCode::UnknownBranch, "unknown branch '" + std::string(branch) + "'");
    return *h;
}

CommitId Catalog::resolve(std::string_view ref) const {
    if (auto h = try_head(ref)) return *h;
    CommitId id{std::string(ref)};
    if (has_commit(id)) return id;
    throw Error(ErrorCode::UnknownRef, "unknown ref '" + std::string(ref) + "'");
}

std::map<std::string, CommitId> Catalog::branches() const {
    std::map<std::string, CommitId> out;
    for (const auto& [name, id] : load_refs()) out[name] = {id};
    return out;
}

BranchRef Catalog::create_branch(const std::string& name, std::string_view from) {
    if (!is_branch_name(name)) throw Error(ErrorCode::InvalidArgument, "invalid branch name '" + name + "'");
    detail::FileLock lock(root_ / "refs.lock");
    Refs refs = load_refs();
    if (refs.count(name)) throw Error(ErrorCode::BranchExists, "branch '" + name + "' already exists");
    CommitId target = resolve(from);
    refs[name] = target.hex;
    store_refs(refs, {{name, "", target.hex}});
    return {name, target};
}

bool Catalog::delete_branch(const std::string& name) {
    if (name == "main") throw Error(ErrorCode::InvalidArgument, "branch 'main' cannot be deleted");
    detail::FileLock lock(root_ / "refs.lock");
    Refs refs = load_refs();
    auto it = refs.find(name);
    if (it == refs.end()) return false;
    std::string old = it->second;
    refs.erase(it);
    store_refs(refs, {{name, old, ""}});
    return true;
}

bool Catalog::compare_and_swap(const std::string& branch, const CommitId& expected, const CommitId& next) {
    detail::FileLock lock(root_ / "refs.lock");
    Refs refs = load_refs();
    auto it = refs.find(branch);
    if (it == refs.end()) throw Error(ErrorCode::UnknownBranch, "unknown branch '" + branch + "'");
    if (it->second != expected.hex) return false;
    it->second = next.hex;
    store_refs(refs, {{branch, expected.hex, next.hex}});
    return true;
}

Commit Catalog::commit_tables(const std::string& branch, const TableChanges& changes,
                              const CommitId& expected_head, const std::string& author,
                              const std::string& message) {
    CommitId current = head(branch);
    Commit parent = get_commit(expected_head);
    Commit next;
    next.parents = {expected_head};
    next.tables = parent.tables;
    for (const auto& [name, change] : changes) {
        if (!is_identifier(name)) throw Error(ErrorCode::InvalidArgument, "invalid table name '" + name + "'");
        if (!change) {
            if (!next.tables.erase(name)) {
                throw Error(ErrorCode::UnknownTable, "cannot delete absent table '" + name + "'");
            }
            continue;
        }
        if (!store_.contains(*change)) {
            throw Error(ErrorCode::UnknownSnapshot, "unknown snapshot " + change->hex);
        }
        next.tables[name] = *change;
    }
    if (current != expected_head) {
        throw Error(ErrorCode::StaleHead, "branch '" + branch + "' moved to " + short_id(current) +
                                              ", expected " + short_id(expected_head));
    }
    next.author = author;
    next.message = message;
    next.timestamp = clock_();
    write_commit(next);
    if (!compare_and_swap(branch, expected_head, next.id)) {
        throw Error(ErrorCode::StaleHead, "branch '" + branch + "' moved during commit");
    }
    return next;
}

CommitId Catalog::merge_base(const CommitId& a, const CommitId& b) const {
    auto ancestors = [this](const CommitId& start) {
        std::unordered_set<std::string> seen{start.hex};
        std::deque<CommitId> queue{start};
        while (!queue.empty()) {
            Commit c = get_commit(queue.front());
            queue.pop_front();
            for (const auto& p : c.parents) {
                if (seen.insert(p.hex).second) queue.push_back(p);
            }
        }
        return seen;
    };
    auto of_a = ancestors(a);
    auto of_b = ancestors(b);
    std::vector<CommitId> common;
    for (const auto& h : of_b) {
        if (of_a.count(h)) common.push_back({h});
    }
    if (common.empty()) {
        throw Error(ErrorCode::NoCommonAncestor,
                    "commits " + short_id(a) + " and " + short_id(b) + " share no ancestor");
    }
    // Everything reachable from a common ancestor's parents is not lowest.
    std::unordered_set<std::string> covered;
    std::deque<CommitId> queue;
    for (const auto& c : common) {
        for (const auto& p : get_commit(c).parents) {
            if (covered.insert(p.hex).second) queue.push_back(p);
        }
    }
    while (!queue.empty()) {
        Commit c = get_commit(queue.front());
        queue.pop_front();
        for (const auto& p : c.parents) {
            if (covered.insert(p.hex).second) queue.push_back(p);
        }
    }
    std::optional<Commit> best;
    for (const auto& c : common) {
        if (covered.count(c.hex)) continue;
        Commit candidate = get_commit(c);
        if (!best || candidate.timestamp > best->timestamp ||
            (candidate.timestamp == best->timestamp && candidate.id < best->id)) {
            best = std::move(candidate);
        }
    }
    return best->id;
}

MergeResult Catalog::merge(std::string_view source, const std::string& target, const std::string& author) {
    MergeResult result;
    for (int attempt = 1; attempt <= kMergeAttempts; ++attempt) {
        result = MergeResult{};
        result.attempts = attempt;
        result.source_head = resolve(source);
        result.target_head = head(target);
        result.base = merge_base(result.source_head, result.target_head);

        if (result.source_head == result.target_head || result.base == result.source_head) {
            // Already contained in the target: nothing to publish.
            result.kind = MergeResult::Kind::FastForward;
            result.commit = result.target_head;
            return result;
        }
        if (result.base == result.target_head) {
            if (compare_and_swap(target, result.target_head, result.source_head)) {
                result.kind = MergeResult::Kind::FastForward;
                result.commit = result.source_head;
                return result;
            }
            continue;
        }
        auto outcome = three_way_merge(tables_at(result.base), tables_at(result.source_head),
                                       tables_at(result.target_head));
        if (!outcome.conflicts.empty()) {
            result.kind = MergeResult::Kind::Conflict;
            result.conflicts = std::move(outcome.conflicts);
            return result;
        }
        Commit merged;
        merged.parents = {result.target_head, result.source_head};
        merged.tables = std::move(outcome.merged);
        merged.author = author;
        merged.message = "merge " + std::string(source) + " into " + target;
        merged.timestamp = clock_();
        write_commit(merged);
        if (compare_and_swap(target, result.target_head, merged.id)) {
            result.kind = MergeResult::Kind::MergeCommit;
            result.commit = merged.id;
            return result;
        }
    }
    result.kind = MergeResult::Kind::RefRaced;
    result.commit = {};
    return result;
}

ReadSession Catalog::open_session(std::string_view ref) const {
    return {resolve(ref), std::string(ref)};
}

TableMap Catalog::tables_at(const CommitId& commit) const { return get_commit(commit).tables; }

TableData Catalog::read_table(const ReadSession& session, const std::string& table) const {
    Commit c = get_commit(session.pinned);
    auto it = c.tables.find(table);
    if (it == c.tables.end()) {
        throw Error(ErrorCode::UnknownTable,
                    "table '" + table + "' does not exist at " + short_id(session.pinned));
    }
    return store_.get(it->second);
}

std::vector<DiffEntry> Catalog::diff(std::string_view a, std::string_view b) const {
    TableMap left = tables_at(resolve(a));
    TableMap right = tables_at(resolve(b));
    std::vector<DiffEntry> out;
    for (const auto& [name, sid] : left) {
        auto it = right.find(name);
        if (it == right.end()) {
            out.push_back({name, DiffStatus::Removed});
        } else if (it->second != sid) {
            out.push_back({name, DiffStatus::Changed});
        }
    }
    for (const auto& [name, _] : right) {
        if (!left.count(name)) out.push_back({name, DiffStatus::Added});
    }
    std::sort(out.begin(), out.end(), [](const DiffEntry& x, const DiffEntry& y) { return x.table < y.table; });
    return out;
}

std::vector<Commit> Catalog::log(std::string_view ref) const {
    std::vector<Commit> out;
    Commit c = get_commit(resolve(ref));
    for (;;) {
        out.push_back(c);
        if (c.parents.empty()) break;
        c = get_commit(c.parents.front());
    }
    return out;
}

} // namespace lake
