#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "thyme/core.hpp"
#include "thyme/query.hpp"

namespace thyme {

struct PublicationRecord {
    ObjectMetadata metadata;
    std::string data;  // object bytes; empty when only metadata is held
    bool unpublished = false;
};

struct SubscriptionRecord {
    Subscription subscription;
    std::vector<query::Conjunction> clauses;  // full DNF (PL/SG) or the clauses brokered here (DCS)
    std::size_t past_cursor = 0;
    std::vector<ObjectKey> past_matches;  // frozen at index time, ts_pub/key order
};

struct Match {
    Subscription subscription;
    ObjectMetadata metadata;
};

enum class StoreErrc { DuplicateKey, DuplicateSubscription, UnknownSubscription, Exhausted };

class StoreError : public std::runtime_error {
public:
    StoreError(StoreErrc c, const std::string& what) : std::runtime_error(what), code_(c) {}
    StoreErrc code() const { return code_; }

private:
    StoreErrc code_;
};

/// Time-aware store shared by both materializations. Matching runs in both
/// directions: new publications against stored subscriptions and new
/// subscriptions against stored publications. Unpublished records stay as
/// tombstones so that replicated state merges cannot resurrect them.
class TimeAwareStore {
public:
    using SubKey = std::pair<NodeId, std::uint32_t>;

    std::vector<Match> index_publication(PublicationRecord rec, Timestamp now);
    Notification index_subscription(SubscriptionRecord rec, Timestamp now, std::size_t batch_n);
    Notification fetch_more(NodeId owner, std::uint32_t id_sub, std::size_t batch_n);

    bool unpublish(const ObjectKey& key);
    bool unsubscribe(NodeId owner, std::uint32_t id_sub);
    /// Removes subscriptions whose concrete end lies before now.
    std::size_t expire(Timestamp now);

    /// State-transfer merge: inserts without matching. Returns true when the
    /// record was new (or turned a live record into a tombstone).
    bool merge_publication(const PublicationRecord& rec);
    bool merge_subscription(const SubscriptionRecord& rec);

    bool has_publication(const ObjectKey& key) const { return pubs_.count(key) != 0; }
    bool has_live_publication(const ObjectKey& key) const;
    bool has_subscription(NodeId owner, std::uint32_t id_sub) const { return subs_.count({owner, id_sub}) != 0; }
    const PublicationRecord* find_publication(const ObjectKey& key) const;
    PublicationRecord* find_publication(const ObjectKey& key);
    SubscriptionRecord* find_subscription(NodeId owner, std::uint32_t id_sub);

    const std::map<ObjectKey, PublicationRecord>& publications() const { return pubs_; }
    const std::map<SubKey, SubscriptionRecord>& subscriptions() const { return subs_; }

    std::size_t live_publication_count() const;
    void clear();

    /// Line-oriented snapshot, see docs/formats.md.
    void write_snapshot(std::ostream& out) const;
    static TimeAwareStore read_snapshot(std::istream& in);

private:
    bool clause_hit(const SubscriptionRecord& rec, const ObjectMetadata& md) const;
    Notification next_batch(SubscriptionRecord& rec, std::size_t batch_n) const;
    void index_sub_tags(const SubscriptionRecord& rec);
    void unindex_sub_tags(const SubscriptionRecord& rec);

    std::map<ObjectKey, PublicationRecord> pubs_;
    std::map<SubKey, SubscriptionRecord> subs_;
    std::unordered_map<std::string, std::vector<ObjectKey>> pubs_by_tag_;
    std::unordered_map<std::string, std::vector<SubKey>> subs_by_key_;
};

}  // namespace thyme
