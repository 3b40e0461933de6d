#include <random>
#include <sstream>

#include "doctest.h"
#include "properties.hpp"
#include "thyme/store.hpp"

using namespace thyme;

namespace {

PublicationRecord pub(const std::string& id, std::set<std::string> tags, std::int64_t ts, std::uint32_t owner = 1) {
    PublicationRecord r;
    r.metadata.key = {id, NodeId{owner}};
    r.metadata.tags = std::move(tags);
    r.metadata.ts_pub = Timestamp::at(ts);
    r.data = "bytes-" + id;
    return r;
}

SubscriptionRecord sub(std::uint32_t id, const std::string& q, Timestamp s, Timestamp e, std::uint32_t owner = 9) {
    SubscriptionRecord r;
    r.subscription.id_sub = id;
    r.subscription.query = q;
    r.subscription.ts_start = s;
    r.subscription.ts_end = e;
    r.subscription.owner = NodeId{owner};
    std::mt19937_64 rng(1);
    r.clauses = query::to_dnf(query::parse(q), rng).clauses;
    return r;
}

const Timestamp bot = Timestamp::bottom();

}  // namespace

TEST_CASE("publication matches stored subscriptions") {
    TimeAwareStore st;
    st.index_subscription(sub(1, "beach", bot, bot), Timestamp::at(0), 10);
    const auto m = st.index_publication(pub("p", {"beach", "summer"}, 10), Timestamp::at(10));
    REQUIRE(m.size() == 1);
    CHECK(m[0].subscription.id_sub == 1);
    CHECK(m[0].metadata.key.id_obj == "p");
}

TEST_CASE("expired frame does not match") {
    TimeAwareStore st;
    st.index_subscription(sub(1, "beach", bot, Timestamp::at(5)), Timestamp::at(0), 10);
    CHECK(st.index_publication(pub("p", {"beach"}, 10), Timestamp::at(10)).empty());
    CHECK_FALSE(st.has_subscription(NodeId{9}, 1));
}

TEST_CASE("duplicate keys") {
    TimeAwareStore st;
    st.index_publication(pub("p", {"x"}, 1), Timestamp::at(1));
    try {
        st.index_publication(pub("p", {"y"}, 2), Timestamp::at(2));
        FAIL("expected duplicate-key");
    } catch (const StoreError& e) {
        CHECK(e.code() == StoreErrc::DuplicateKey);
    }
    CHECK_NOTHROW(st.index_publication(pub("p", {"y"}, 2, 2), Timestamp::at(2)));  // other owner
    st.index_subscription(sub(1, "x", bot, bot), Timestamp::at(3), 10);
    try {
        st.index_subscription(sub(1, "x", bot, bot), Timestamp::at(3), 10);
        FAIL("expected duplicate-subscription");
    } catch (const StoreError& e) {
        CHECK(e.code() == StoreErrc::DuplicateSubscription);
    }
}

TEST_CASE("past batching, 4 of 10") {
    TimeAwareStore st;
    for (int i = 0; i < 10; ++i) st.index_publication(pub("o" + std::to_string(i), {"t"}, 100 - i), Timestamp::at(100));
    const auto now = Timestamp::at(200);
    auto n = st.index_subscription(sub(1, "t", bot, now), now, 4);
    CHECK(n.matches.size() == 4);
    CHECK(n.has_more);
    CHECK(n.total_available == 10);
    // Oldest first: o9 has ts 91.
    CHECK(n.matches[0].key.id_obj == "o9");
    CHECK(n.matches[3].key.id_obj == "o6");
    n = st.fetch_more(NodeId{9}, 1, 4);
    REQUIRE(n.matches.size() == 4);
    CHECK(n.matches[0].key.id_obj == "o5");
    CHECK(n.matches[3].key.id_obj == "o2");
    CHECK(n.has_more);
    n = st.fetch_more(NodeId{9}, 1, 4);
    CHECK(n.matches.size() == 2);
    CHECK_FALSE(n.has_more);
    try {
        st.fetch_more(NodeId{9}, 1, 4);
        FAIL("expected exhausted");
    } catch (const StoreError& e) {
        CHECK(e.code() == StoreErrc::Exhausted);
    }
    try {
        st.fetch_more(NodeId{9}, 77, 4);
        FAIL("expected unknown");
    } catch (const StoreError& e) {
        CHECK(e.code() == StoreErrc::UnknownSubscription);
    }
}

TEST_CASE("future-only frame has no past") {
    TimeAwareStore st;
    st.index_publication(pub("p", {"t"}, 10), Timestamp::at(10));
    const auto n = st.index_subscription(sub(1, "t", Timestamp::at(20), bot), Timestamp::at(20), 10);
    CHECK(n.matches.empty());
    CHECK_FALSE(n.has_more);
}

TEST_CASE("unpublished objects stay invisible") {
    TimeAwareStore st;
    st.index_publication(pub("p", {"t"}, 10), Timestamp::at(10));
    CHECK(st.unpublish({"p", NodeId{1}}));
    CHECK_FALSE(st.unpublish({"p", NodeId{1}}));
    const auto n = st.index_subscription(sub(1, "t", bot, bot), Timestamp::at(20), 10);
    CHECK(n.matches.empty());
    CHECK(n.total_available == 0);
    CHECK(st.has_publication({"p", NodeId{1}}));  // tombstone
    CHECK_FALSE(st.has_live_publication({"p", NodeId{1}}));
    // a merge cannot resurrect it
    CHECK_FALSE(st.merge_publication(pub("p", {"t"}, 10)));
    CHECK_FALSE(st.has_live_publication({"p", NodeId{1}}));
}

TEST_CASE("unpublish between batches") {
    TimeAwareStore st;
    for (int i = 0; i < 6; ++i) st.index_publication(pub("o" + std::to_string(i), {"t"}, i), Timestamp::at(i));
    auto n = st.index_subscription(sub(1, "t", bot, bot), Timestamp::at(10), 2);
    CHECK(n.total_available == 6);
    st.unpublish({"o2", NodeId{1}});
    n = st.fetch_more(NodeId{9}, 1, 2);
    REQUIRE(n.matches.size() == 2);
    CHECK(n.matches[0].key.id_obj == "o3");
    CHECK(n.total_available == 5);
}

TEST_CASE("expire and unsubscribe are idempotent") {
    TimeAwareStore st;
    st.index_subscription(sub(1, "t", bot, Timestamp::at(99)), Timestamp::at(0), 10);
    st.index_subscription(sub(2, "t", bot, bot), Timestamp::at(0), 10);
    CHECK(st.expire(Timestamp::at(100)) == 1);
    CHECK(st.expire(Timestamp::at(100)) == 0);
    CHECK(st.unsubscribe(NodeId{9}, 2));
    CHECK_FALSE(st.unsubscribe(NodeId{9}, 2));
    CHECK(st.index_publication(pub("p", {"t"}, 101), Timestamp::at(101)).empty());
}

TEST_CASE("snapshot round-trip") {
    TimeAwareStore st;
    auto p = pub("p", {"a", "b"}, 10);
    p.metadata.replicas = {{NodeId{1}, CellId{2, 3}}, {NodeId{4}, CellId{0, 0}}};
    p.metadata.summary = "thumb";
    st.index_publication(p, Timestamp::at(10));
    st.index_publication(pub("q", {"b"}, 11), Timestamp::at(11));
    st.unpublish({"q", NodeId{1}});
    auto s = sub(3, "a & !c | b", Timestamp::at(5), bot);
    s.subscription.cell_owner = CellId{1, 1};
    st.index_subscription(s, Timestamp::at(12), 1);
    std::stringstream ss;
    st.write_snapshot(ss);
    const auto back = TimeAwareStore::read_snapshot(ss);
    std::stringstream again;
    back.write_snapshot(again);
    CHECK(again.str() == ss.str());
    CHECK(back.publications().size() == 2);
    CHECK(back.find_publication({"p", NodeId{1}})->metadata == st.find_publication({"p", NodeId{1}})->metadata);
    CHECK_FALSE(back.has_live_publication({"q", NodeId{1}}));
    REQUIRE(back.subscriptions().size() == 1);
    const auto& rec = back.subscriptions().begin()->second;
    CHECK(rec.subscription == s.subscription);
    CHECK(rec.clauses == s.clauses);
    CHECK(rec.past_cursor == 1);
}

TEST_CASE("batching against a brute-force scan") {
    const auto o = props::store_batching(1000, 17);
    INFO(o.detail);
    CHECK(o.cases >= 1000);
    CHECK(o.failures == 0);
}
