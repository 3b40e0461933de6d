#include "thyme/store.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace thyme {
namespace {

bool expired(const Subscription& s, Timestamp now) {
    return !s.ts_end.is_bottom() && s.ts_end.ms() < now.ms();
}

bool past_order(const ObjectMetadata& a, const ObjectMetadata& b) {
    if (a.ts_pub.ms() != b.ts_pub.ms()) return a.ts_pub.ms() < b.ts_pub.ms();
    return a.key < b.key;
}

template <class T>
void erase_value(std::vector<T>& v, const T& x) {
    v.erase(std::remove(v.begin(), v.end(), x), v.end());
}

}  // namespace

bool TimeAwareStore::clause_hit(const SubscriptionRecord& rec, const ObjectMetadata& md) const {
    return std::any_of(rec.clauses.begin(), rec.clauses.end(),
                       [&](const query::Conjunction& c) { return query::matches(c, md.tags); });
}

void TimeAwareStore::index_sub_tags(const SubscriptionRecord& rec) {
    const SubKey k{rec.subscription.owner, rec.subscription.id_sub};
    std::set<std::string> keys;
    for (const auto& c : rec.clauses) keys.insert(c.key);
    for (const auto& t : keys) subs_by_key_[t].push_back(k);
}

void TimeAwareStore::unindex_sub_tags(const SubscriptionRecord& rec) {
    const SubKey k{rec.subscription.owner, rec.subscription.id_sub};
    for (const auto& c : rec.clauses) {
        auto it = subs_by_key_.find(c.key);
        if (it != subs_by_key_.end()) erase_value(it->second, k);
    }
}

std::vector<Match> TimeAwareStore::index_publication(PublicationRecord rec, Timestamp now) {
    const ObjectKey key = rec.metadata.key;
    auto existing = pubs_.find(key);
    if (existing != pubs_.end()) {
        if (!existing->second.unpublished)
            throw StoreError(StoreErrc::DuplicateKey, "object key already published: " + key.id_obj);
        for (const auto& tag : existing->second.metadata.tags) erase_value(pubs_by_tag_[tag], key);
        pubs_.erase(existing);
    }
    expire(now);

    std::vector<Match> out;
    std::set<SubKey> seen;
    for (const auto& tag : rec.metadata.tags) {
        auto it = subs_by_key_.find(tag);
        if (it == subs_by_key_.end()) continue;
        for (const auto& sk : it->second) {
            if (!seen.insert(sk).second) continue;
            const auto& srec = subs_.at(sk);
            if (!time_frame_contains(srec.subscription, rec.metadata.ts_pub)) continue;
            if (!clause_hit(srec, rec.metadata)) continue;
            out.push_back(Match{srec.subscription, rec.metadata});
        }
    }
    std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) {
        return std::pair(a.subscription.owner, a.subscription.id_sub) <
               std::pair(b.subscription.owner, b.subscription.id_sub);
    });

    rec.unpublished = false;
    for (const auto& tag : rec.metadata.tags) pubs_by_tag_[tag].push_back(key);
    pubs_.emplace(key, std::move(rec));
    return out;
}

Notification TimeAwareStore::next_batch(SubscriptionRecord& rec, std::size_t batch_n) const {
    Notification n;
    n.id_sub = rec.subscription.id_sub;
    std::size_t live_total = 0;
    std::size_t live_before_cursor = 0;
    for (std::size_t i = 0; i < rec.past_matches.size(); ++i) {
        const auto* p = find_publication(rec.past_matches[i]);
        if (p == nullptr || p->unpublished) continue;
        ++live_total;
        if (i < rec.past_cursor) {
            ++live_before_cursor;
        } else if (n.matches.size() < batch_n) {
            n.matches.push_back(p->metadata);
            rec.past_cursor = i + 1;
        }
    }
    n.total_available = live_total;
    n.has_more = live_before_cursor + n.matches.size() < live_total;
    if (n.matches.empty() && !n.has_more) rec.past_cursor = rec.past_matches.size();
    return n;
}

Notification TimeAwareStore::index_subscription(SubscriptionRecord rec, Timestamp now, std::size_t batch_n) {
    const SubKey k{rec.subscription.owner, rec.subscription.id_sub};
    if (subs_.count(k))
        throw StoreError(StoreErrc::DuplicateSubscription, "subscription already stored");
    expire(now);

    std::vector<const PublicationRecord*> hits;
    std::set<ObjectKey> seen;
    for (const auto& c : rec.clauses) {
        auto it = pubs_by_tag_.find(c.key);
        if (it == pubs_by_tag_.end()) continue;
        for (const auto& key : it->second) {
            if (seen.count(key)) continue;
            const auto& p = pubs_.at(key);
            if (p.unpublished || !time_frame_contains(rec.subscription, p.metadata.ts_pub)) continue;
            if (!clause_hit(rec, p.metadata)) continue;
            seen.insert(key);
            hits.push_back(&p);
        }
    }
    std::sort(hits.begin(), hits.end(),
              [](const PublicationRecord* a, const PublicationRecord* b) { return past_order(a->metadata, b->metadata); });

    rec.past_matches.clear();
    for (const auto* p : hits) rec.past_matches.push_back(p->metadata.key);
    rec.past_cursor = 0;

    auto& stored = subs_.emplace(k, std::move(rec)).first->second;
    index_sub_tags(stored);
    return next_batch(stored, batch_n);
}

Notification TimeAwareStore::fetch_more(NodeId owner, std::uint32_t id_sub, std::size_t batch_n) {
    auto it = subs_.find({owner, id_sub});
    if (it == subs_.end()) throw StoreError(StoreErrc::UnknownSubscription, "unknown subscription");
    auto& rec = it->second;
    bool any_left = false;
    for (std::size_t i = rec.past_cursor; i < rec.past_matches.size() && !any_left; ++i)
        any_left = has_live_publication(rec.past_matches[i]);
    if (!any_left) throw StoreError(StoreErrc::Exhausted, "no more past matches");
    return next_batch(rec, batch_n);
}

bool TimeAwareStore::unpublish(const ObjectKey& key) {
    auto it = pubs_.find(key);
    if (it == pubs_.end() || it->second.unpublished) return false;
    it->second.unpublished = true;
    it->second.data.clear();
    return true;
}

bool TimeAwareStore::unsubscribe(NodeId owner, std::uint32_t id_sub) {
    auto it = subs_.find({owner, id_sub});
    if (it == subs_.end()) return false;
    unindex_sub_tags(it->second);
    subs_.erase(it);
    return true;
}

std::size_t TimeAwareStore::expire(Timestamp now) {
    std::size_t removed = 0;
    for (auto it = subs_.begin(); it != subs_.end();) {
        if (expired(it->second.subscription, now)) {
            unindex_sub_tags(it->second);
            it = subs_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

bool TimeAwareStore::merge_publication(const PublicationRecord& rec) {
    auto it = pubs_.find(rec.metadata.key);
    if (it == pubs_.end()) {
        for (const auto& tag : rec.metadata.tags) pubs_by_tag_[tag].push_back(rec.metadata.key);
        pubs_.emplace(rec.metadata.key, rec);
        return true;
    }
    auto& mine = it->second;
    bool changed = false;
    if (rec.unpublished && !mine.unpublished) {
        mine.unpublished = true;
        mine.data.clear();
        changed = true;
    }
    for (const auto& r : rec.metadata.replicas) {
        auto& reps = mine.metadata.replicas;
        if (std::none_of(reps.begin(), reps.end(), [&](const ReplicaLocation& x) { return x.node == r.node; }))
            reps.push_back(r);
    }
    return changed;
}

bool TimeAwareStore::merge_subscription(const SubscriptionRecord& rec) {
    const SubKey k{rec.subscription.owner, rec.subscription.id_sub};
    if (subs_.count(k)) return false;
    auto& stored = subs_.emplace(k, rec).first->second;
    index_sub_tags(stored);
    return true;
}

bool TimeAwareStore::has_live_publication(const ObjectKey& key) const {
    const auto* p = find_publication(key);
    return p != nullptr && !p->unpublished;
}

const PublicationRecord* TimeAwareStore::find_publication(const ObjectKey& key) const {
    auto it = pubs_.find(key);
    return it == pubs_.end() ? nullptr : &it->second;
}

PublicationRecord* TimeAwareStore::find_publication(const ObjectKey& key) {
    auto it = pubs_.find(key);
    return it == pubs_.end() ? nullptr : &it->second;
}

SubscriptionRecord* TimeAwareStore::find_subscription(NodeId owner, std::uint32_t id_sub) {
    auto it = subs_.find({owner, id_sub});
    return it == subs_.end() ? nullptr : &it->second;
}

std::size_t TimeAwareStore::live_publication_count() const {
    return static_cast<std::size_t>(
        std::count_if(pubs_.begin(), pubs_.end(), [](const auto& kv) { return !kv.second.unpublished; }));
}

void TimeAwareStore::clear() {
    pubs_.clear();
    subs_.clear();
    pubs_by_tag_.clear();
    subs_by_key_.clear();
}

// ---------------------------------------------------------------------------
// Snapshot: one record per line, tab-separated. Strings are hex encoded so
// arbitrary tag and query text survives.

namespace {

std::string hex(const std::string& s) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(s.size() * 2);
    for (unsigned char c : s) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out.empty() ? "-" : out;
}

std::string unhex(const std::string& s) {
    if (s == "-") return {};
    if (s.size() % 2) throw std::runtime_error("snapshot: odd hex length");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw std::runtime_error("snapshot: bad hex digit");
    };
    std::string out;
    for (std::size_t i = 0; i < s.size(); i += 2)
        out.push_back(static_cast<char>(nibble(s[i]) * 16 + nibble(s[i + 1])));
    return out;
}

std::string ts_str(Timestamp t) { return t.is_bottom() ? "_" : std::to_string(t.ms()); }
Timestamp ts_parse(const std::string& s) { return s == "_" ? Timestamp::bottom() : Timestamp::at(std::stoll(s)); }

template <class Range, class F>
std::string join(const Range& r, char sep, F f) {
    std::string out;
    for (const auto& x : r) {
        if (!out.empty()) out.push_back(sep);
        out += f(x);
    }
    return out.empty() ? "-" : out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s == "-") return out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

std::string key_str(const ObjectKey& k) { return std::to_string(k.owner.value) + ":" + hex(k.id_obj); }
ObjectKey key_parse(const std::string& s) {
    const auto colon = s.find(':');
    return ObjectKey{unhex(s.substr(colon + 1)), NodeId(static_cast<std::uint32_t>(std::stoul(s.substr(0, colon))))};
}

}  // namespace

void TimeAwareStore::write_snapshot(std::ostream& out) const {
    for (const auto& [key, p] : pubs_) {
        const auto& md = p.metadata;
        out << "P\t" << key_str(key) << '\t' << ts_str(md.ts_pub) << '\t'
            << join(md.tags, ',', [](const std::string& t) { return hex(t); }) << '\t' << hex(md.summary) << '\t'
            << (p.unpublished ? 1 : 0) << '\t'
            << join(md.replicas, ',',
                    [](const ReplicaLocation& r) {
                        return std::to_string(r.node.value) + ":" + std::to_string(r.cell.col) + ":" +
                               std::to_string(r.cell.row);
                    })
            << '\t' << hex(p.data) << '\n';
    }
    for (const auto& [k, s] : subs_) {
        const auto& sub = s.subscription;
        out << "S\t" << sub.owner.value << '\t' << sub.id_sub << '\t' << ts_str(sub.ts_start) << '\t'
            << ts_str(sub.ts_end) << '\t'
            << (sub.cell_owner ? std::to_string(sub.cell_owner->col) + ":" + std::to_string(sub.cell_owner->row)
                               : std::string("_"))
            << '\t' << hex(sub.query) << '\t'
            << join(s.clauses, ';',
                    [](const query::Conjunction& c) {
                        return hex(c.key) + "=" + join(c.literals, ',', [](const query::Literal& l) {
                                   return std::string(l.negated ? "!" : "+") + hex(l.tag);
                               });
                    })
            << '\t' << s.past_cursor << '\t' << join(s.past_matches, ',', key_str) << '\n';
    }
}

TimeAwareStore TimeAwareStore::read_snapshot(std::istream& in) {
    TimeAwareStore store;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, '\t');
        if (f[0] == "P" && f.size() == 8) {
            PublicationRecord p;
            p.metadata.key = key_parse(f[1]);
            p.metadata.ts_pub = ts_parse(f[2]);
            for (const auto& t : split(f[3], ',')) p.metadata.tags.insert(unhex(t));
            p.metadata.summary = unhex(f[4]);
            p.unpublished = f[5] == "1";
            for (const auto& r : split(f[6], ',')) {
                const auto parts = split(r, ':');
                p.metadata.replicas.push_back(ReplicaLocation{NodeId(static_cast<std::uint32_t>(std::stoul(parts.at(0)))),
                                                              CellId{std::stoi(parts.at(1)), std::stoi(parts.at(2))}});
            }
            p.data = unhex(f[7]);
            store.merge_publication(p);
        } else if (f[0] == "S" && f.size() == 10) {
            SubscriptionRecord s;
            s.subscription.owner = NodeId(static_cast<std::uint32_t>(std::stoul(f[1])));
            s.subscription.id_sub = static_cast<std::uint32_t>(std::stoul(f[2]));
            s.subscription.ts_start = ts_parse(f[3]);
            s.subscription.ts_end = ts_parse(f[4]);
            if (f[5] != "_") {
                const auto parts = split(f[5], ':');
                s.subscription.cell_owner = CellId{std::stoi(parts.at(0)), std::stoi(parts.at(1))};
            }
            s.subscription.query = unhex(f[6]);
            for (const auto& c : split(f[7], ';')) {
                const auto eq = c.find('=');
                query::Conjunction conj;
                conj.key = unhex(c.substr(0, eq));
                for (const auto& l : split(c.substr(eq + 1), ','))
                    conj.literals.push_back(query::Literal{unhex(l.substr(1)), l[0] == '!'});
                s.clauses.push_back(std::move(conj));
            }
            s.past_cursor = std::stoul(f[8]);
            for (const auto& k : split(f[9], ',')) s.past_matches.push_back(key_parse(k));
            store.merge_subscription(s);
        } else {
            throw std::runtime_error("snapshot: malformed line: " + line);
        }
    }
    return store;
}

}  // namespace thyme
