#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "properties.hpp"
#include "thyme/query.hpp"

using namespace thyme::query;

namespace {

DnfQuery dnf(const std::string& text, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    return to_dnf(parse(text), rng);
}

std::vector<std::vector<std::string>> clause_tags(const DnfQuery& q) {
    std::vector<std::vector<std::string>> out;
    for (const auto& c : q.clauses) {
        std::vector<std::string> v;
        for (const auto& l : c.literals) v.push_back((l.negated ? "!" : "") + l.tag);
        out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("parse builds the expected trees") {
    CHECK(parse("A & (B | C)") ==
          Query::conj({Query::literal("A"), Query::disj({Query::literal("B"), Query::literal("C")})}));
    CHECK(parse("A") == Query::literal("A"));
    CHECK(parse("a | b & c") == Query::disj({Query::literal("a"), Query::conj({Query::literal("b"), Query::literal("c")})}));
    CHECK(parse("!!x") == Query::negate(Query::negate(Query::literal("x"))));
    CHECK(parse("  euro2016 &\tfinal ") == Query::conj({Query::literal("euro2016"), Query::literal("final")}));
}

TEST_CASE("syntax errors carry a position") {
    CHECK_THROWS_AS(parse("A & & B"), SyntaxError);
    CHECK_THROWS_AS(parse(""), SyntaxError);
    CHECK_THROWS_AS(parse("(a | b"), SyntaxError);
    CHECK_THROWS_AS(parse("a b"), SyntaxError);
    CHECK_THROWS_AS(parse("a |"), SyntaxError);
    try {
        parse("A & & B");
    } catch (const SyntaxError& e) {
        CHECK(e.position() == 4);
    }
}

TEST_CASE("to_string round-trips") {
    for (const char* s : {"A & (B | C)", "!a | b & !(c | d)", "x"}) CHECK(parse(to_string(parse(s))) == parse(s));
}

TEST_CASE("dnf examples") {
    CHECK(clause_tags(dnf("A & (B | C)")) == std::vector<std::vector<std::string>>{{"A", "B"}, {"A", "C"}});
    const auto one = dnf("A");
    REQUIRE(one.clauses.size() == 1);
    CHECK(one.clauses[0].key == "A");
    try {
        dnf("!A");
        FAIL("expected unkeyable");
    } catch (const DnfError& e) {
        CHECK(e.code() == DnfError::Code::UnkeyableConjunction);
    }
}

TEST_CASE("dnf drops duplicates and contradictions") {
    CHECK(clause_tags(dnf("(a | a) & b")) == std::vector<std::vector<std::string>>{{"a", "b"}});
    CHECK(clause_tags(dnf("(a & !a) | b")) == std::vector<std::vector<std::string>>{{"b"}});
}

TEST_CASE("dnf guard") {
    // (a1|b1) & ... & (a7|b7) expands to 128 conjunctions.
    std::string q;
    for (int i = 1; i <= 7; ++i) q += (i > 1 ? " & " : "") + std::string("(a") + std::to_string(i) + " | b" + std::to_string(i) + ")";
    std::mt19937_64 rng(1);
    try {
        to_dnf(parse(q), rng);
        FAIL("expected overflow");
    } catch (const DnfError& e) {
        CHECK(e.code() == DnfError::Code::ExpansionOverflow);
    }
    CHECK(to_dnf(parse(q), rng, 128).clauses.size() == 128);
}

TEST_CASE("keys are uniform over positive literals") {
    std::map<std::string, int> hits;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 3000; ++i) ++hits[to_dnf(parse("a & b & c & !d"), rng).clauses[0].key];
    CHECK(hits.size() == 3);
    // Chi-square with 2 degrees of freedom; 13.8 is the 0.999 quantile.
    double chi = 0;
    for (const auto& [k, n] : hits) chi += (n - 1000.0) * (n - 1000.0) / 1000.0;
    CHECK(chi < 13.8);
}

TEST_CASE("matches examples") {
    const auto ab = dnf("A & B").clauses[0];
    CHECK(matches(ab, {"A", "B", "Z"}));
    CHECK_FALSE(matches(dnf("A & !B").clauses[0], {"A", "B"}));
    CHECK_FALSE(matches(ab, {}));
    CHECK(matches(dnf("A & (B | C)"), {"A", "C"}));
    CHECK_FALSE(matches(dnf("A & (B | C)"), {"B", "C"}));
    CHECK_FALSE(matches(dnf("Beach"), {"beach"}));
}

TEST_CASE("dnf equivalence against direct evaluation") {
    const auto o = props::query_equivalence(10000, 42);
    INFO(o.detail);
    CHECK(o.cases == 10000);
    CHECK(o.failures == 0);
}
