#pragma once

// Propositional queries over tags.
//
// Grammar (whitespace between tokens is ignored):
//
//   query  := term ( '|' term )*
//   term   := factor ( '&' factor )*
//   factor := '!' factor | '(' query ')' | TAG
//   TAG    := one or more characters outside " \t\r\n&|!()"
//
// '&' binds tighter than '|'. Tags are compared case-sensitively.

#include <cstddef>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace thyme::query {

struct Query {
    enum class Kind { Literal, And, Or, Not };

    Kind kind = Kind::Literal;
    std::string tag;               // Literal only
    std::vector<Query> children;   // And/Or: two or more, Not: exactly one

    static Query literal(std::string t) { return Query{Kind::Literal, std::move(t), {}}; }
    static Query conj(std::vector<Query> c) { return Query{Kind::And, {}, std::move(c)}; }
    static Query disj(std::vector<Query> c) { return Query{Kind::Or, {}, std::move(c)}; }
    static Query negate(Query q) { return Query{Kind::Not, {}, {std::move(q)}}; }

    bool operator==(const Query&) const = default;
};

struct Literal {
    std::string tag;
    bool negated = false;

    friend auto operator<=>(const Literal&, const Literal&) = default;
};

struct Conjunction {
    std::vector<Literal> literals;  // sorted, unique
    std::string key;                // one of the non-negated literals

    bool operator==(const Conjunction&) const = default;
};

struct DnfQuery {
    std::vector<Conjunction> clauses;

    bool operator==(const DnfQuery&) const = default;
};

class SyntaxError : public std::runtime_error {
public:
    SyntaxError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class DnfError : public std::runtime_error {
public:
    enum class Code { ExpansionOverflow, UnkeyableConjunction };
    DnfError(Code c, const std::string& what) : std::runtime_error(what), code_(c) {}
    Code code() const { return code_; }

private:
    Code code_;
};

inline constexpr std::size_t kDefaultMaxClauses = 64;

Query parse(const std::string& text);
std::string to_string(const Query& q);

/// Converts to DNF. Duplicate and self-contradictory conjunctions are
/// removed; each surviving conjunction gets a uniformly random key among its
/// non-negated literals.
DnfQuery to_dnf(const Query& q, std::mt19937_64& rng, std::size_t max_clauses = kDefaultMaxClauses);

bool matches(const Conjunction& c, const std::set<std::string>& tags);
bool matches(const DnfQuery& q, const std::set<std::string>& tags);

/// Tags appearing non-negated in the conjunction.
std::vector<std::string> positive_tags(const Conjunction& c);

std::size_t wire_size(const Conjunction& c);

}  // namespace thyme::query
