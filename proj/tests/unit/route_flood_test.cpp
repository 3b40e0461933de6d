#include <deque>
#include <memory>
#include <random>
#include <vector>

#include "doctest.h"
#include "thyme/route_flood.hpp"

using namespace thyme;
using namespace thyme::sim;
using namespace thyme::route;

namespace {

struct Blob : Payload {
    std::size_t n;
    explicit Blob(std::size_t n) : n(n) {}
    std::size_t wire_size() const override { return n; }
};

struct Stack : Agent {
    FloodRouter flood;
    DsdvRouter dsdv;
    std::vector<NodeId> flood_got;
    std::vector<DvPacket> dv_got;
    Stack(Simulator& sim, NodeId self, DsdvParams p) : flood(sim, self), dsdv(sim, self, p) {
        flood.set_deliver([this](NodeId origin, const PayloadPtr&) { flood_got.push_back(origin); });
        dsdv.set_deliver([this](const DvPacket& pkt) { dv_got.push_back(pkt); });
    }
    void on_frame(NodeId from, const PayloadPtr& frame) override {
        if (!flood.handle(from, frame)) dsdv.handle(from, frame);
    }
};

struct Net {
    Simulator sim;
    std::vector<std::unique_ptr<Stack>> nodes;
    Net(SimConfig cfg, const std::vector<Vec2>& pos, DsdvParams p = {}) : sim(cfg, pos) {
        for (std::uint32_t i = 0; i < pos.size(); ++i) {
            nodes.push_back(std::make_unique<Stack>(sim, NodeId(i), p));
            sim.attach(NodeId(i), nodes.back().get());
        }
    }
    void start_dsdv() {
        for (auto& n : nodes) n->dsdv.start();
    }
};

SimConfig lossless() {
    SimConfig c;
    c.p_loss = 0;
    return c;
}

std::vector<Vec2> line(int n, double spacing = 100) {
    std::vector<Vec2> p;
    for (int i = 0; i < n; ++i) p.push_back({i * spacing, 0});
    return p;
}

// Hop distances by breadth-first search over the unit-disc graph.
std::vector<int> bfs(const std::vector<Vec2>& pos, std::size_t src, double range) {
    std::vector<int> d(pos.size(), -1);
    std::deque<std::size_t> q{src};
    d[src] = 0;
    while (!q.empty()) {
        const auto u = q.front();
        q.pop_front();
        for (std::size_t v = 0; v < pos.size(); ++v)
            if (d[v] < 0 && distance(pos[u], pos[v]) <= range) {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
    }
    return d;
}

}  // namespace

TEST_CASE("flood reaches every connected node exactly once") {
    Net net(lossless(), line(5));
    net.nodes[2]->flood.flood(std::make_shared<Blob>(50));
    net.sim.run_until(5 * kSecond);
    for (auto& n : net.nodes) {
        REQUIRE(n->flood_got.size() == 1);
        CHECK(n->flood_got[0] == NodeId(2));
    }
    std::uint64_t rebroadcasts = 0;
    for (auto& n : net.nodes) rebroadcasts += n->flood.rebroadcasts();
    CHECK(rebroadcasts == 4);
}

TEST_CASE("flood stays inside its partition") {
    auto pos = line(3);
    pos.push_back({600, 0});
    pos.push_back({700, 0});
    Net net(lossless(), pos);
    net.nodes[0]->flood.flood(std::make_shared<Blob>(50));
    net.sim.run_until(5 * kSecond);
    CHECK(net.nodes[2]->flood_got.size() == 1);
    CHECK(net.nodes[3]->flood_got.empty());
    CHECK(net.nodes[4]->flood_got.empty());
}

TEST_CASE("flood rebroadcasts at most once per node on random topologies") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(0, 400), uy(0, 200);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec2> pos(30);
        for (auto& p : pos) p = {ux(rng), uy(rng)};
        Net net(lossless(), pos);
        for (int k = 0; k < 3; ++k) net.nodes[k]->flood.flood(std::make_shared<Blob>(80));
        net.sim.run_until(10 * kSecond);
        for (int k = 0; k < 3; ++k) {
            const auto d = bfs(pos, static_cast<std::size_t>(k), 113);
            for (std::size_t v = 0; v < pos.size(); ++v) {
                const auto& got = net.nodes[v]->flood_got;
                CHECK(std::count(got.begin(), got.end(), NodeId(static_cast<std::uint32_t>(k))) == (d[v] >= 0 ? 1 : 0));
            }
        }
        for (auto& n : net.nodes) CHECK(n->flood.rebroadcasts() <= 3);
    }
}

TEST_CASE("flood traffic follows its class and forwarding flag") {
    Net net(lossless(), line(3));
    net.nodes[0]->flood.flood(std::make_shared<Blob>(50), Traffic::Control);
    net.sim.run_until(5 * kSecond);
    const auto& origin = net.sim.counters(NodeId(0));
    const auto& relay = net.sim.counters(NodeId(1));
    CHECK(origin.ctrl_bytes == origin.phy_tx_bytes);
    CHECK(origin.fwd_bytes == 0);
    CHECK(relay.fwd_bytes == relay.phy_tx_bytes);
    CHECK(relay.data_bytes == 0);
}

TEST_CASE("DSDV converges to shortest hop counts") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0, 400), uy(0, 200);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Vec2> pos(25);
        for (auto& p : pos) p = {ux(rng), uy(rng)};
        Net net(lossless(), pos);
        net.start_dsdv();
        const int diameter = 25;
        net.sim.run_until(from_seconds(15.0 * (diameter + 2)));
        for (std::size_t s = 0; s < pos.size(); ++s) {
            const auto d = bfs(pos, s, 113);
            for (std::uint32_t t = 0; t < pos.size(); ++t) {
                const int m = net.nodes[s]->dsdv.metric(NodeId(t));
                if (d[t] < 0)
                    CHECK(m == DsdvRouter::kInfinity);
                else
                    CHECK(m == d[t]);
            }
        }
    }
}

TEST_CASE("DSDV: isolated node only knows itself and cannot send") {
    Net net(lossless(), {{0, 0}, {50, 0}, {390, 190}});
    net.start_dsdv();
    net.sim.run_until(60 * kSecond);
    CHECK(net.nodes[2]->dsdv.table().empty());
    CHECK(net.nodes[2]->dsdv.metric(NodeId(2)) == 0);
    CHECK_FALSE(net.nodes[2]->dsdv.send(NodeId(0), std::make_shared<Blob>(10)));
    CHECK(net.nodes[2]->dsdv.send(NodeId(2), std::make_shared<Blob>(10)));
    CHECK(net.nodes[2]->dv_got.size() == 1);
    CHECK(net.nodes[0]->dsdv.metric(NodeId(1)) == 1);
}

TEST_CASE("DSDV delivers along the line with hop and distance accounting") {
    Net net(lossless(), line(5));
    net.start_dsdv();
    net.sim.run_until(120 * kSecond);
    REQUIRE(net.nodes[0]->dsdv.next_hop(NodeId(4)) == NodeId(1));
    CHECK(net.nodes[0]->dsdv.send(NodeId(4), std::make_shared<Blob>(30)));
    net.sim.run_until(121 * kSecond);
    REQUIRE(net.nodes[4]->dv_got.size() == 1);
    CHECK(net.nodes[4]->dv_got[0].hops == 4);
    CHECK(net.nodes[4]->dv_got[0].meters == doctest::Approx(400));
    CHECK(net.nodes[4]->dv_got[0].src == NodeId(0));
}

TEST_CASE("DSDV updates are control traffic and data is data") {
    Net net(lossless(), line(3));
    net.start_dsdv();
    net.sim.run_until(60 * kSecond);
    for (std::uint32_t i = 0; i < 3; ++i) {
        const auto& c = net.sim.counters(NodeId(i));
        CHECK(c.data_bytes == 0);
        CHECK(c.ctrl_bytes == c.phy_tx_bytes);
    }
    const auto before = net.sim.counters(NodeId(1)).fwd_bytes;
    net.nodes[0]->dsdv.send(NodeId(2), std::make_shared<Blob>(30));
    net.sim.run_until(61 * kSecond);
    CHECK(net.sim.counters(NodeId(0)).data_bytes > 0);
    CHECK(net.sim.counters(NodeId(1)).fwd_bytes > before);
}

TEST_CASE("DSDV routes around a crashed relay") {
    // 0 - 1 - 3 and 0 - 2 - 3: two disjoint two-hop paths.
    Net net(lossless(), {{0, 0}, {80, 60}, {80, -60}, {160, 0}});
    net.start_dsdv();
    net.sim.run_until(60 * kSecond);
    REQUIRE(net.nodes[0]->dsdv.metric(NodeId(3)) == 2);
    const NodeId via = *net.nodes[0]->dsdv.next_hop(NodeId(3));
    net.sim.set_alive(via, false);
    net.nodes[0]->dsdv.send(NodeId(3), std::make_shared<Blob>(30));
    net.sim.run_until(200 * kSecond);
    REQUIRE(net.nodes[0]->dsdv.next_hop(NodeId(3)).has_value());
    CHECK(*net.nodes[0]->dsdv.next_hop(NodeId(3)) != via);
    CHECK(net.nodes[0]->dsdv.metric(NodeId(3)) == 2);
    net.nodes[0]->dsdv.send(NodeId(3), std::make_shared<Blob>(30));
    net.sim.run_until(201 * kSecond);
    CHECK(net.nodes[3]->dv_got.size() == 1);
}

TEST_CASE("DSDV: two-hop network is consistent after two intervals") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0, 100);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec2> pos(12);
        for (auto& p : pos) p = {u(rng), u(rng)};
        bool diameter_two = true;
        for (std::size_t s = 0; s < pos.size(); ++s)
            for (int d : bfs(pos, s, 113)) diameter_two = diameter_two && d >= 0 && d <= 2;
        if (!diameter_two) continue;
        ++checked;
        Net net(lossless(), pos);
        net.start_dsdv();
        net.sim.run_until(from_seconds(2 * 15.0 + 0.1));
        for (std::size_t s = 0; s < pos.size(); ++s) {
            const auto d = bfs(pos, s, 113);
            for (std::uint32_t t = 0; t < pos.size(); ++t) CHECK(net.nodes[s]->dsdv.metric(NodeId(t)) == d[t]);
        }
    }
    CHECK(checked >= 10);
}
