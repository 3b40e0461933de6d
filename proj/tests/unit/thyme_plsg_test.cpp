#include "doctest.h"
#include "fleet.hpp"
#include "thyme/thyme_plsg.hpp"

using namespace thyme;
using fleet::Fleet;

namespace {

ThymeParams params() {
    ThymeParams p;
    p.p_reply = 1;
    return p;
}

Fleet<PlsgNode> line(int n, sim::SimConfig cfg = fleet::lossless()) {
    std::vector<sim::Vec2> pos;
    for (int i = 0; i < n; ++i) pos.push_back({i * 100.0, 50});
    return Fleet<PlsgNode>(cfg, pos, [](sim::Simulator& s, NodeId id, EventLog& log) {
        return std::make_unique<PlsgNode>(s, id, params(), log);
    });
}

const Timestamp kBottom = Timestamp::bottom();

ObjectKey key(const std::string& id, std::uint32_t owner) { return ObjectKey{id, NodeId(owner)}; }

}  // namespace

TEST_CASE("a subscription reaches past publications across the network") {
    auto f = line(3);
    f.start_apps(30);
    f.at(40, [&] { CHECK(f[2].publish("o1", {"a"}, "s", "bytes")); });
    f.at(41, [&] { CHECK(f[2].publish("o2", {"b"}, "s", "bytes")); });
    f.at(60, [&] { CHECK(f[0].subscribe(7, "a", Timestamp::at(0), kBottom)); });
    f.run_until(70);
    CHECK(f.notified(0, 7) == std::set<ObjectKey>{key("o1", 2)});
    CHECK(f[1].store().has_subscription(NodeId(0), 7));
    CHECK(f[2].store().has_subscription(NodeId(0), 7));
    CHECK(f.ops_ok(OpType::Publish) == 2);
    CHECK(f.ops_ok(OpType::Subscribe) == 1);
}

TEST_CASE("future publications notify matching subscribers only") {
    auto f = line(4);
    f.start_apps(30);
    f.at(60, [&] { f[0].subscribe(1, "a & b", Timestamp::at(0), kBottom); });
    f.at(60, [&] { f[1].subscribe(2, "c", Timestamp::at(0), kBottom); });
    f.at(80, [&] { f[3].publish("x", {"a", "b", "z"}, "", "d"); });
    f.at(81, [&] { f[3].publish("y", {"a"}, "", "d"); });
    f.run_until(90);
    CHECK(f.notified(0, 1) == std::set<ObjectKey>{key("x", 3)});
    CHECK(f.notified(1, 2).empty());
}

TEST_CASE("a publication nobody matches sends nothing") {
    auto f = line(4);
    f.start_apps(30);
    f.at(60, [&] { f[0].subscribe(1, "a", Timestamp::at(0), kBottom); });
    std::uint64_t before = 0;
    f.at(80, [&] {
        before = f.data_bytes();
        f[3].publish("x", {"b"}, "", "d");
    });
    f.run_until(100);
    CHECK(f.data_bytes() == before);
    CHECK(f.log.notifications_sent == 0);
}

TEST_CASE("the time frame bounds matching") {
    auto f = line(2);
    f.start_apps(30);
    f.at(40, [&] { f[1].publish("early", {"a"}, "", "d"); });
    // Frame [50 s, 70 s]: "early" predates it, "late" comes after it.
    f.at(45, [&] { f[0].subscribe(1, "a", Timestamp::at(50'000), Timestamp::at(70'000)); });
    f.at(60, [&] { f[1].publish("inside", {"a"}, "", "d"); });
    f.at(75, [&] { f[1].publish("late", {"a"}, "", "d"); });
    f.run_until(90);
    CHECK(f.notified(0, 1) == std::set<ObjectKey>{key("inside", 1)});
}

TEST_CASE("unpublish and unsubscribe stop notifications") {
    auto f = line(3);
    f.start_apps(30);
    f.at(40, [&] { f[2].publish("gone", {"a"}, "", "d"); });
    f.at(45, [&] { CHECK(f[2].unpublish("gone")); });
    f.at(46, [&] { CHECK_FALSE(f[2].unpublish("never")); });
    f.at(50, [&] { f[0].subscribe(1, "a", Timestamp::at(0), kBottom); });
    f.at(60, [&] { CHECK(f[0].unsubscribe(1)); });
    f.at(61, [&] { CHECK_FALSE(f[0].unsubscribe(1)); });
    f.at(70, [&] { f[2].publish("after", {"a"}, "", "d"); });
    f.run_until(80);
    CHECK(f.notified(0, 1).empty());
    CHECK_FALSE(f[2].store().has_subscription(NodeId(0), 1));
}

TEST_CASE("invalid operations are rejected synchronously") {
    auto f = line(1);
    f.start_apps(1);
    f.at(5, [&] {
        CHECK_FALSE(f[0].subscribe(1, "a &", Timestamp::at(0), kBottom));
        CHECK_FALSE(f[0].subscribe(2, "!a", Timestamp::at(0), kBottom));
        CHECK_FALSE(f[0].subscribe(3, "a", Timestamp::at(10), Timestamp::at(5)));
        CHECK(f[0].subscribe(4, "a", Timestamp::at(0), kBottom));
        CHECK_FALSE(f[0].subscribe(4, "b", Timestamp::at(0), kBottom));
        CHECK(f[0].publish("o", {"a"}, "", "d"));
        CHECK_FALSE(f[0].publish("o", {"a"}, "", "d"));
    });
    f.run_until(10);
    CHECK(f.ops(OpType::Subscribe) == 5);
    CHECK(f.ops_ok(OpType::Subscribe) == 1);
    CHECK(f.notified(0, 4) == std::set<ObjectKey>{key("o", 0)});
}

TEST_CASE("past matches arrive in batches until exhausted") {
    auto f = line(3);
    f.start_apps(30);
    for (int i = 0; i < 25; ++i)
        f.at(40 + 0.1 * i, [&f, i] { f[2].publish("o" + std::to_string(i), {"a"}, "", "d"); });
    f.at(60, [&] { f[0].set_download_policy(DownloadPolicy{DownloadMode::Discard, 0}); });
    f.at(60, [&] { f[0].subscribe(1, "a", Timestamp::at(0), kBottom); });
    f.run_until(90);
    CHECK(f.notified(0, 1).size() == 25);
    CHECK(f.ops_ok(OpType::FetchMore) == 2);
}

TEST_CASE("notified objects are downloaded from their owner") {
    auto f = line(3);
    f.start_apps(30);
    f.at(40, [&] { f[2].publish("o", {"a"}, "", std::string(500, 'x')); });
    f.at(59, [&] { f[0].set_download_policy(DownloadPolicy{DownloadMode::Immediate, 1.0}); });
    f.at(60, [&] { f[0].subscribe(1, "a", Timestamp::at(0), kBottom); });
    f.run_until(80);
    REQUIRE(f.ops(OpType::Download) == 1);
    CHECK(f.ops_ok(OpType::Download) == 1);
    for (const auto& o : f.log.ops())
        if (o.type == OpType::Download) {
            CHECK(o.hops == 2);
            CHECK(o.meters == doctest::Approx(200));
        }
}

TEST_CASE("a rebooted node learns subscriptions from a neighbor") {
    auto f = line(3);
    f.start_apps(30);
    f.at(50, [&] { f.sim->set_alive(NodeId(2), false); });
    f.at(60, [&] { f[0].subscribe(1, "a", Timestamp::at(0), kBottom); });
    f.at(80, [&] { f.sim->set_alive(NodeId(2), true); });
    f.at(120, [&] { f[2].publish("o", {"a"}, "", "d"); });
    f.run_until(140);
    CHECK(f[2].joined());
    CHECK(f[2].store().has_subscription(NodeId(0), 1));
    CHECK(f.notified(0, 1) == std::set<ObjectKey>{key("o", 2)});
}

TEST_CASE("a lone node completes its join and serves itself") {
    auto f = line(1);
    f.start_apps(1);
    f.at(20, [&] { f[0].publish("o", {"a"}, "", "d"); });
    f.at(21, [&] { f[0].subscribe(1, "a", Timestamp::at(0), kBottom); });
    f.run_until(30);
    CHECK(f[0].joined());
    CHECK(f.ops(OpType::Join) == 1);
    CHECK(f.ops_ok(OpType::Join) == 0);
    CHECK(f.notified(0, 1).size() == 1);
}
