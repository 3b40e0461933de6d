#include "thyme/query.hpp"

#include <algorithm>
#include <cctype>

namespace thyme::query {
namespace {

bool is_tag_char(char c) {
    switch (c) {
        case ' ': case '\t': case '\r': case '\n':
        case '&': case '|': case '!': case '(': case ')':
            return false;
        default:
            return true;
    }
}

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    Query run() {
        skip_ws();
        if (pos_ == text_.size()) throw SyntaxError("empty query", pos_);
        Query q = parse_or();
        skip_ws();
        if (pos_ != text_.size()) throw SyntaxError(std::string("unexpected '") + text_[pos_] + "'", pos_);
        return q;
    }

private:
    Query parse_or() {
        std::vector<Query> parts{parse_and()};
        while (accept('|')) parts.push_back(parse_and());
        return parts.size() == 1 ? std::move(parts.front()) : Query::disj(std::move(parts));
    }

    Query parse_and() {
        std::vector<Query> parts{parse_factor()};
        while (accept('&')) parts.push_back(parse_factor());
        return parts.size() == 1 ? std::move(parts.front()) : Query::conj(std::move(parts));
    }

    Query parse_factor() {
        skip_ws();
        if (pos_ == text_.size()) throw SyntaxError("unexpected end of query", pos_);
        if (accept('!')) return Query::negate(parse_factor());
        if (accept('(')) {
            Query inner = parse_or();
            if (!accept(')')) throw SyntaxError("expected ')'", pos_);
            return inner;
        }
        const std::size_t start = pos_;
        while (pos_ < text_.size() && is_tag_char(text_[pos_])) ++pos_;
        if (pos_ == start) throw SyntaxError(std::string("expected tag, found '") + text_[pos_] + "'", pos_);
        return Query::literal(text_.substr(start, pos_ - start));
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    const std::string& text_;
    std::size_t pos_ = 0;
};

using Clause = std::vector<Literal>;  // sorted unique
using ClauseSet = std::set<Clause>;

// Normalizes a literal list; returns false for contradictory clauses.
bool normalize(Clause& c) {
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    for (std::size_t i = 1; i < c.size(); ++i)
        if (c[i].tag == c[i - 1].tag) return false;  // p & !p
    return true;
}

void insert_bounded(ClauseSet& out, Clause c, std::size_t max_clauses) {
    if (!normalize(c)) return;
    out.insert(std::move(c));
    if (out.size() > max_clauses)
        throw DnfError(DnfError::Code::ExpansionOverflow,
                       "DNF expansion exceeds " + std::to_string(max_clauses) + " clauses");
}

ClauseSet expand(const Query& q, bool negated, std::size_t max_clauses) {
    using K = Query::Kind;
    switch (q.kind) {
        case K::Literal: {
            ClauseSet s;
            s.insert(Clause{Literal{q.tag, negated}});
            return s;
        }
        case K::Not:
            return expand(q.children.front(), !negated, max_clauses);
        case K::And:
        case K::Or: {
            // De Morgan: a negated AND behaves as an OR of negations and vice versa.
            const bool is_or = (q.kind == K::Or) != negated;
            if (is_or) {
                ClauseSet out;
                for (const auto& child : q.children)
                    for (const auto& c : expand(child, negated, max_clauses)) insert_bounded(out, c, max_clauses);
                return out;
            }
            ClauseSet acc;
            acc.insert(Clause{});
            for (const auto& child : q.children) {
                const ClauseSet rhs = expand(child, negated, max_clauses);
                ClauseSet next;
                for (const auto& a : acc)
                    for (const auto& b : rhs) {
                        Clause c = a;
                        c.insert(c.end(), b.begin(), b.end());
                        insert_bounded(next, std::move(c), max_clauses);
                    }
                acc = std::move(next);
            }
            return acc;
        }
    }
    return {};
}

}  // namespace

Query parse(const std::string& text) { return Parser(text).run(); }

std::string to_string(const Query& q) {
    using K = Query::Kind;
    switch (q.kind) {
        case K::Literal: return q.tag;
        case K::Not: return "!" + to_string(q.children.front());
        case K::And:
        case K::Or: {
            std::string out = "(";
            for (std::size_t i = 0; i < q.children.size(); ++i) {
                if (i) out += (q.kind == K::And) ? " & " : " | ";
                out += to_string(q.children[i]);
            }
            return out + ")";
        }
    }
    return {};
}

DnfQuery to_dnf(const Query& q, std::mt19937_64& rng, std::size_t max_clauses) {
    const ClauseSet clauses = expand(q, false, max_clauses);
    DnfQuery out;
    for (const auto& c : clauses) {
        Conjunction conj{c, {}};
        const auto positives = positive_tags(conj);
        if (positives.empty())
            throw DnfError(DnfError::Code::UnkeyableConjunction,
                           "conjunction has no non-negated literal to use as key");
        std::uniform_int_distribution<std::size_t> pick(0, positives.size() - 1);
        conj.key = positives[pick(rng)];
        out.clauses.push_back(std::move(conj));
    }
    return out;
}

bool matches(const Conjunction& c, const std::set<std::string>& tags) {
    bool has_positive = false;
    for (const auto& lit : c.literals) {
        const bool present = tags.count(lit.tag) != 0;
        if (lit.negated == present) return false;
        has_positive |= !lit.negated;
    }
    return has_positive;
}

bool matches(const DnfQuery& q, const std::set<std::string>& tags) {
    return std::any_of(q.clauses.begin(), q.clauses.end(), [&](const Conjunction& c) { return matches(c, tags); });
}

std::vector<std::string> positive_tags(const Conjunction& c) {
    std::vector<std::string> out;
    for (const auto& lit : c.literals)
        if (!lit.negated) out.push_back(lit.tag);
    return out;
}

std::size_t wire_size(const Conjunction& c) {
    std::size_t n = 1 + 2 + c.key.size();
    for (const auto& lit : c.literals) n += 1 + 2 + lit.tag.size();
    return n;
}

}  // namespace thyme::query
