#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <fstream>
#include <thread>

using namespace lake;
using namespace lake::test;

namespace {

bool naive_glob(std::string_view p, std::string_view t) {
    if (p.empty()) return t.empty();
    if (p[0] == '*') {
        for (std::size_t i = 0; i <= t.size(); ++i) {
            if (naive_glob(p.substr(1), t.substr(i))) return true;
        }
        return false;
    }
    if (t.empty()) return false;
    if (p[0] == '?' || p[0] == t[0]) return naive_glob(p.substr(1), t.substr(1));
    return false;
}

std::string random_word(SplitMix64& rng, const char* alphabet, std::size_t max_len) {
    std::string s;
    std::size_t n = rng.below(max_len + 1);
    std::size_t k = std::char_traits<char>::length(alphabet);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(k)];
    return s;
}

} // namespace

TEST_CASE("glob matching agrees with a recursive definition") {
    SplitMix64 rng(17);
    for (int i = 0; i < 20000; ++i) {
        std::string p = random_word(rng, "ab*?/", 6);
        std::string t = random_word(rng, "ab/", 7);
        CAPTURE(p);
        CAPTURE(t);
        CHECK(glob_match(p, t) == naive_glob(p, t));
    }
}

TEST_CASE("permission text round trips") {
    for (const char* text : {"ReadTable:main:*", "WriteBranch:run/*", "CreateBranch:*", "MergeInto:main",
                             "RunPipeline:taxi", "RegisterVerifier", "ManagePolicy"}) {
        CHECK(Permission::parse(text).to_string() == text);
    }
    CHECK(error_of([] { Permission::parse("Fly:main"); }) == ErrorCode::InvalidPolicy);
    CHECK(error_of([] { Permission::parse("ReadTable:main"); }) == ErrorCode::InvalidPolicy);
}

TEST_CASE("policy validation") {
    CHECK(error_of([] { policy_from("[[principal]]\nname = \"a\"\nroles = [\"ghost\"]\n"); }) ==
          ErrorCode::InvalidPolicy);
    CHECK(error_of([] {
              policy_from("[[role]]\nname = \"r\"\npermissions = []\n[[role]]\nname = \"r\"\npermissions = []\n");
          }) == ErrorCode::InvalidPolicy);
    CHECK(error_of([] { policy_from("whitelist = [\n"); }).has_value());
    CHECK_NOTHROW(load_policy(std::filesystem::path(LAKE_SAMPLES_DIR) / "policy.toml"));
}

TEST_CASE("default deny") {
    Policy empty;
    for (const Action& a : {Action::read_table("main", "t"), Action::write_branch("main"),
                            Action::create_branch("x"), Action::merge_into("main"), Action::run_pipeline("p"),
                            Action::register_verifier(), Action::manage_policy()}) {
        CHECK_FALSE(authorize(empty, "anyone", a));
    }
    Policy p = standard_policy();
    CHECK_FALSE(authorize(p, "stranger", Action::read_table("main", "t")));
    CHECK(authorize(p, "analyst", Action::read_table("main", "t")));
    CHECK_FALSE(authorize(p, "analyst", Action::write_branch("main")));
    CHECK(authorize(p, "bot", Action::write_branch("run/p/1")));
    CHECK_FALSE(authorize(p, "bot", Action::write_branch("main")));
    CHECK_FALSE(authorize(p, "bot", Action::merge_into("main")));
    CHECK(authorize(p, "admin", Action::manage_policy()));
}

TEST_CASE("whitelist is matched verbatim") {
    Policy p = standard_policy();
    CHECK(check_env(p, {"py", {"pandas==2.0"}}).empty());
    CHECK(check_env(p, {"py", {"pandas==2.1", "pandas==2.0", "leftpad==1"}}) ==
          std::vector<std::string>{"pandas==2.1", "leftpad==1"});
}

TEST_CASE("one audit record per call") {
    Governance g(standard_policy());
    std::vector<Action> two = {Action::read_table("main", "a"), Action::read_table("main", "b")};
    CHECK(g.check("analyst", "query", two));
    CHECK_FALSE(g.check("analyst", "merge", Action::merge_into("main")));
    std::vector<Action> mixed = {Action::read_table("main", "a"), Action::write_branch("main")};
    CHECK_FALSE(g.check("analyst", "commit", mixed));
    auto log = g.audit_log();
    REQUIRE(log.size() == 3);
    CHECK(log[0].allowed);
    CHECK(log[0].actions.size() == 2);
    CHECK(log[1].api == "merge");
    CHECK_FALSE(log[1].allowed);
    CHECK_FALSE(log[2].allowed);
    CHECK(log[2].seq == log[1].seq + 1);
}

TEST_CASE("audit file gets one JSON line per call") {
    TempDir dir;
    {
        Governance g(standard_policy(), dir / "audit.jsonl");
        g.check("analyst", "read", Action::read_table("main", "t"));
        g.check("nobody", "read", Action::read_table("main", "t"));
    }
    std::ifstream in(dir / "audit.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("principal"));
        CHECK(j.contains("allowed"));
        ++n;
    }
    CHECK(n == 2);
}

TEST_CASE("concurrent policy reload is atomic") {
    Policy open = standard_policy();
    Policy closed;
    Governance g(open);
    std::atomic<bool> stop{false};
    std::thread flipper([&] {
        for (int i = 0; i < 2000; ++i) g.replace_policy(i % 2 ? open : closed);
        stop = true;
    });
    int checks = 0;
    while (!stop) {
        auto p = g.policy();
        // A snapshot is always one of the two whole policies.
        CHECK((p->principals.empty() || p->principals.size() == open.principals.size()));
        g.check("admin", "probe", Action::manage_policy());
        ++checks;
    }
    flipper.join();
    CHECK(g.audit_log().size() == static_cast<std::size_t>(checks));
}
