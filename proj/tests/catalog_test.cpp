#include "support.hpp"

#include <doctest.h>

#include <atomic>
#include <thread>

using namespace lake;
using namespace lake::test;

namespace {

struct Fixture {
    TempDir dir;
    SnapshotStore store{dir / "store"};
    Catalog catalog{dir / "catalog", store, counting_clock(100)};

    Fixture() { catalog.initialize(); }

    SnapshotId snap(std::int64_t v) { return store.put(ints({"v"}, {{v}})); }

    Commit put(const std::string& branch, const std::string& table, std::int64_t v) {
        return catalog.commit_tables(branch, {{table, snap(v)}}, catalog.head(branch), "t", "set " + table);
    }
};

} // namespace

TEST_CASE("initialize creates main once") {
    Fixture f;
    CHECK_FALSE(f.catalog.initialize());
    auto branches = f.catalog.branches();
    REQUIRE(branches.size() == 1);
    CHECK(branches.count("main"));
    Commit root = f.catalog.get_commit(f.catalog.head("main"));
    CHECK(root.parents.empty());
    CHECK(root.tables.empty());
}

TEST_CASE("commit ids are the hash of the canonical body") {
    Fixture f;
    Commit c = f.put("main", "t", 1);
    CHECK(c.id.hex == sha256_hex(c.canonical_body()));
    CHECK(Commit::from_body(c.canonical_body()).canonical_body() == c.canonical_body());
    CHECK(f.catalog.get_commit(c.id) == c);
}

TEST_CASE("branch names") {
    CHECK(is_branch_name("main"));
    CHECK(is_branch_name("run/p/0001"));
    CHECK(is_branch_name("a.b-c_d"));
    CHECK_FALSE(is_branch_name(""));
    CHECK_FALSE(is_branch_name("Main"));
    CHECK_FALSE(is_branch_name("a b"));
    Fixture f;
    CHECK(error_of([&] { f.catalog.create_branch("Bad", "main"); }) == ErrorCode::InvalidArgument);
    f.catalog.create_branch("dev", "main");
    CHECK(error_of([&] { f.catalog.create_branch("dev", "main"); }) == ErrorCode::BranchExists);
    CHECK(error_of([&] { f.catalog.delete_branch("main"); }) == ErrorCode::InvalidArgument);
    CHECK(f.catalog.delete_branch("dev"));
    CHECK_FALSE(f.catalog.delete_branch("dev"));
    CHECK(error_of([&] { f.catalog.head("dev"); }) == ErrorCode::UnknownBranch);
    CHECK(error_of([&] { f.catalog.resolve("nope"); }) == ErrorCode::UnknownRef);
}

TEST_CASE("commit_tables rejects stale heads and unknown snapshots") {
    Fixture f;
    CommitId h0 = f.catalog.head("main");
    f.put("main", "t", 1);
    CHECK(error_of([&] { f.catalog.commit_tables("main", {{"t", f.snap(2)}}, h0, "x", "m"); }) ==
          ErrorCode::StaleHead);
    CHECK(error_of([&] {
              f.catalog.commit_tables("main", {{"t", fake_snapshot(1)}}, f.catalog.head("main"), "x", "m");
          }) == ErrorCode::UnknownSnapshot);
    CHECK(error_of([&] {
              f.catalog.commit_tables("main", {{"zz", std::nullopt}}, f.catalog.head("main"), "x", "m");
          }) == ErrorCode::UnknownTable);
    Commit del = f.catalog.commit_tables("main", {{"t", std::nullopt}}, f.catalog.head("main"), "x", "drop");
    CHECK(del.tables.empty());
}

TEST_CASE("concurrent compare-and-swap: exactly one winner per head") {
    for (int round = 0; round < 100; ++round) {
        Fixture f;
        CommitId h = f.catalog.head("main");
        std::vector<SnapshotId> snaps;
        for (int i = 0; i < 4; ++i) snaps.push_back(f.snap(round * 10 + i));
        std::atomic<int> wins{0}, stale{0};
        std::vector<std::thread> threads;
        for (int i = 0; i < 4; ++i) {
            threads.emplace_back([&, i] {
                auto e = error_of([&] { f.catalog.commit_tables("main", {{"t", snaps[i]}}, h, "w", "w"); });
                if (!e) ++wins;
                else if (*e == ErrorCode::StaleHead) ++stale;
            });
        }
        for (auto& t : threads) t.join();
        REQUIRE(wins == 1);
        REQUIRE(stale == 3);
        CHECK(f.catalog.get_commit(f.catalog.head("main")).parents == std::vector<CommitId>{h});
    }
}

TEST_CASE("reflog records every ref update") {
    Fixture f;
    CommitId root = f.catalog.head("main");
    f.catalog.create_branch("dev", "main");
    Commit c = f.put("dev", "t", 1);
    f.catalog.merge("dev", "main", "t");
    f.catalog.delete_branch("dev");
    auto log = f.catalog.reflog();
    REQUIRE(log.size() == 5);
    CHECK(log[0].branch == "main");
    CHECK(log[0].old_head.empty());
    CHECK(log[1].branch == "dev");
    CHECK(log[1].new_head == root.hex);
    CHECK(log[2].new_head == c.id.hex);
    CHECK(log[3].branch == "main");
    CHECK(log[3].old_head == root.hex);
    CHECK(log[3].new_head == c.id.hex);
    CHECK(log[4].new_head.empty());
}

TEST_CASE("three_way_merge matches its truth table") {
    SplitMix64 rng(5);
    const std::vector<std::string> names = {"a", "b", "c", "d"};
    auto random_map = [&] {
        TableMap m;
        for (const auto& n : names) {
            if (rng.below(4) != 0) m[n] = fake_snapshot(rng.below(3));
        }
        return m;
    };
    for (int i = 0; i < 5000; ++i) {
        TableMap b = random_map(), s = random_map(), t = random_map();
        auto got = three_way_merge(b, s, t);
        auto want = oracle_three_way(b, s, t);
        CHECK(got.conflicts == want.conflicts);
        if (want.conflicts.empty()) CHECK(got.merged == want.merged);
    }
}

TEST_CASE("fast-forward, merge commit and conflict") {
    Fixture f;
    f.put("main", "shared", 0);
    f.catalog.create_branch("dev", "main");

    SUBCASE("fast-forward moves target to the exact source head") {
        Commit c = f.put("dev", "x", 1);
        MergeResult r = f.catalog.merge("dev", "main", "m");
        CHECK(r.kind == MergeResult::Kind::FastForward);
        CHECK(r.commit == c.id);
        CHECK(f.catalog.head("main") == c.id);
        MergeResult again = f.catalog.merge("dev", "main", "m");
        CHECK(again.kind == MergeResult::Kind::FastForward);
        CHECK(again.commit == c.id);
    }
    SUBCASE("disjoint tables merge") {
        Commit s = f.put("dev", "x", 1);
        Commit t = f.put("main", "y", 2);
        MergeResult r = f.catalog.merge("dev", "main", "m");
        REQUIRE(r.kind == MergeResult::Kind::MergeCommit);
        Commit m = f.catalog.get_commit(r.commit);
        CHECK(m.parents == std::vector<CommitId>{t.id, s.id});
        CHECK(m.tables.at("x") == s.tables.at("x"));
        CHECK(m.tables.at("y") == t.tables.at("y"));
        CHECK(m.tables.at("shared") == t.tables.at("shared"));
    }
    SUBCASE("same table changed on both sides conflicts") {
        f.put("dev", "shared", 1);
        CommitId before = f.put("main", "shared", 2).id;
        MergeResult r = f.catalog.merge("dev", "main", "m");
        CHECK(r.kind == MergeResult::Kind::Conflict);
        CHECK(r.conflicts == std::vector<std::string>{"shared"});
        CHECK(f.catalog.head("main") == before);
    }
    SUBCASE("identical change on both sides is not a conflict") {
        f.put("dev", "shared", 7);
        f.put("main", "shared", 7);
        MergeResult r = f.catalog.merge("dev", "main", "m");
        CHECK(r.kind == MergeResult::Kind::MergeCommit);
    }
}

TEST_CASE("merge performs no snapshot I/O") {
    Fixture f;
    f.catalog.create_branch("dev", "main");
    f.put("dev", "x", 1);
    f.put("main", "y", 2);
    IoCounters before = f.store.io_counters();
    f.catalog.create_branch("dev2", "dev");
    MergeResult r = f.catalog.merge("dev", "main", "m");
    CHECK(r.kind == MergeResult::Kind::MergeCommit);
    CHECK(f.store.io_counters() == before);
}

TEST_CASE("diff is the symmetric difference by table") {
    Fixture f;
    f.put("main", "keep", 1);
    f.put("main", "change", 1);
    f.put("main", "drop", 1);
    f.catalog.create_branch("dev", "main");
    f.put("dev", "change", 2);
    f.put("dev", "add", 1);
    f.catalog.commit_tables("dev", {{"drop", std::nullopt}}, f.catalog.head("dev"), "t", "drop");
    auto d = f.catalog.diff("main", "dev");
    std::vector<DiffEntry> want = {{"add", DiffStatus::Added}, {"change", DiffStatus::Changed},
                                   {"drop", DiffStatus::Removed}};
    CHECK(d == want);
    CHECK(f.catalog.diff("dev", "dev").empty());
    auto back = f.catalog.diff("dev", "main");
    std::vector<DiffEntry> rev = {{"add", DiffStatus::Removed}, {"change", DiffStatus::Changed},
                                  {"drop", DiffStatus::Added}};
    CHECK(back == rev);
}

TEST_CASE("sessions stay pinned while refs move") {
    Fixture f;
    f.put("main", "t", 1);
    ReadSession s = f.catalog.open_session("main");
    f.put("main", "t", 2);
    CHECK(f.catalog.read_table(s, "t") == ints({"v"}, {{1}}));
    CHECK(f.catalog.read_table(f.catalog.open_session("main"), "t") == ints({"v"}, {{2}}));
    CHECK(error_of([&] { f.catalog.read_table(s, "nope"); }) == ErrorCode::UnknownTable);
}

TEST_CASE("log follows first parents") {
    Fixture f;
    f.catalog.create_branch("dev", "main");
    Commit a = f.put("main", "a", 1);
    f.put("dev", "b", 1);
    MergeResult m = f.catalog.merge("dev", "main", "m");
    auto log = f.catalog.log("main");
    REQUIRE(log.size() == 3);
    CHECK(log[0].id == m.commit);
    CHECK(log[1].id == a.id);
    CHECK(log[2].parents.empty());
}

TEST_CASE("merge_base and merge agree with the oracles over random histories") {
    SplitMix64 rng(99);
    for (int h = 0; h < 60; ++h) {
        Fixture f;
        std::vector<std::string> branches = {"main"};
        for (int step = 0; step < 25; ++step) {
            std::uint64_t op = rng.below(10);
            const std::string& b = branches[rng.below(branches.size())];
            if (op < 2 && branches.size() < 5) {
                std::string name = "b" + std::to_string(step);
                f.catalog.create_branch(name, b);
                branches.push_back(name);
            } else if (op < 6) {
                f.put(b, "t" + std::to_string(rng.below(4)), static_cast<std::int64_t>(rng.below(3)));
            } else {
                const std::string& src = branches[rng.below(branches.size())];
                if (src == b) continue;
                CommitId sh = f.catalog.head(src), th = f.catalog.head(b);
                auto base = oracle_merge_base(f.catalog, sh, th);
                REQUIRE(base.has_value());
                CHECK(f.catalog.merge_base(sh, th) == *base);
                CHECK(f.catalog.merge_base(th, sh) == *base);
                auto want = oracle_three_way(f.catalog.tables_at(*base), f.catalog.tables_at(sh),
                                             f.catalog.tables_at(th));
                MergeResult r = f.catalog.merge(src, b, "m");
                if (!want.conflicts.empty()) {
                    CHECK(r.kind == MergeResult::Kind::Conflict);
                    CHECK(r.conflicts == want.conflicts);
                    CHECK(f.catalog.head(b) == th);
                } else {
                    REQUIRE(r.succeeded());
                    CHECK(f.catalog.tables_at(f.catalog.head(b)) == want.merged);
                    CHECK(oracle_ancestors(f.catalog, f.catalog.head(b)).count(sh.hex));
                }
            }
        }
    }
}

TEST_CASE("identical histories produce identical ids") {
    auto build = [] {
        Fixture f;
        f.catalog.create_branch("dev", "main");
        f.put("dev", "x", 1);
        f.put("main", "y", 2);
        return f.catalog.merge("dev", "main", "m").commit.hex;
    };
    CHECK(build() == build());
}
