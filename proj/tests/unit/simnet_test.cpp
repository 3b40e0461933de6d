#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "thyme/simnet.hpp"

using namespace thyme;
using namespace thyme::sim;

namespace {

struct Blob : Payload {
    std::size_t n;
    explicit Blob(std::size_t n) : n(n) {}
    std::size_t wire_size() const override { return n; }
};

PayloadPtr blob(std::size_t n = 100) { return std::make_shared<Blob>(n); }

struct Recorder : Agent {
    Simulator* sim = nullptr;
    std::vector<std::pair<NodeId, SimTime>> got;
    int downs = 0, ups = 0;
    void on_frame(NodeId from, const PayloadPtr&) override { got.emplace_back(from, sim->now()); }
    void on_down() override { ++downs; }
    void on_up() override { ++ups; }
};

SimConfig lossless() {
    SimConfig c;
    c.p_loss = 0;
    return c;
}

struct Net {
    Simulator sim;
    std::vector<Recorder> agents;
    Net(SimConfig cfg, std::vector<Vec2> pos) : sim(cfg, pos), agents(pos.size()) {
        for (std::size_t i = 0; i < pos.size(); ++i) {
            agents[i].sim = &sim;
            sim.attach(NodeId(static_cast<std::uint32_t>(i)), &agents[i]);
        }
    }
};

}  // namespace

TEST_CASE("kernel events at equal time run in insertion order") {
    Simulator sim(lossless(), {{0, 0}});
    std::vector<int> order;
    sim.schedule_kernel_at(2 * kSecond, [&] { order.push_back(3); });
    sim.schedule_kernel_at(kSecond, [&] { order.push_back(1); });
    sim.schedule_kernel_at(kSecond, [&] { order.push_back(2); });
    sim.run_until(3 * kSecond);
    CHECK(order == std::vector<int>{1, 2, 3});
    CHECK(sim.now() == 3 * kSecond);
}

TEST_CASE("config validation") {
    SimConfig c;
    c.p_loss = 1;
    CHECK_THROWS(c.validate());
    c = SimConfig{};
    c.radio_range = 0;
    CHECK_THROWS(c.validate());
    c = SimConfig{};
    c.mac_retries = -1;
    CHECK_THROWS(c.validate());
    CHECK_NOTHROW(SimConfig{}.validate());
}

TEST_CASE("unit disc: lossless broadcast reaches exactly the nodes in range") {
    Net net(lossless(), {{0, 0}, {113, 0}, {113.5, 0}, {0, 100}, {70, 70}});
    net.sim.broadcast(NodeId(0), blob(), Traffic::Data);
    net.sim.run_until(kSecond);
    CHECK(net.agents[0].got.empty());
    CHECK(net.agents[1].got.size() == 1);
    CHECK(net.agents[2].got.empty());
    CHECK(net.agents[3].got.size() == 1);
    CHECK(net.agents[4].got.size() == 1);
    CHECK(net.sim.neighbors(NodeId(0)).size() == 3);
}

TEST_CASE("delivery time is airtime plus hop latency plus access delay") {
    SimConfig c = lossless();
    Net net(c, {{0, 0}, {10, 0}});
    net.sim.broadcast(NodeId(0), blob(936), Traffic::Data);
    net.sim.run_until(kSecond);
    REQUIRE(net.agents[1].got.size() == 1);
    const double airtime = 1000 * 8.0 / c.bandwidth_bps + c.phy_frame_time;
    const double t = to_seconds(net.agents[1].got[0].second);
    CHECK(t >= airtime + c.hop_latency - 1e-6);
    CHECK(t <= airtime + c.hop_latency + c.mac_jitter + 1e-6);
}

TEST_CASE("fragmentation charges per-frame overhead") {
    Net net(lossless(), {{0, 0}, {10, 0}});
    net.sim.broadcast(NodeId(0), blob(3000), Traffic::Data);
    net.sim.run_until(kSecond);
    const auto& c = net.sim.counters(NodeId(0));
    CHECK(c.frames == 3);
    CHECK(c.phy_tx_bytes == 3000 + 3 * 64);
    CHECK(c.data_bytes == c.phy_tx_bytes);
}

TEST_CASE("broadcast loss is binomial") {
    SimConfig c;
    c.p_loss = 0.2;
    Net net(c, {{0, 0}, {50, 0}});
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) net.sim.broadcast(NodeId(0), blob(), Traffic::Data);
    net.sim.run_until(100 * kSecond);
    const double mean = trials * 0.8, sd = std::sqrt(trials * 0.8 * 0.2);
    CHECK(std::abs(static_cast<double>(net.agents[1].got.size()) - mean) <= 3 * sd);
}

TEST_CASE("unicast fails only after every retry is lost") {
    SimConfig c;
    c.p_loss = 0.5;
    c.mac_retries = 7;
    Simulator sim(c, {{0, 0}, {50, 0}});
    const int trials = 100000;
    int failures = 0, done = 0;
    std::function<void()> next = [&] {
        if (done == trials) return;
        sim.unicast(NodeId(0), NodeId(1), blob(), Traffic::Data, false, [&](bool ok) {
            ++done;
            if (!ok) ++failures;
            next();
        });
    };
    next();
    sim.run_until(1'000'000 * kSecond);
    REQUIRE(done == trials);
    const double p = std::pow(0.5, 8);
    const double mean = trials * p, sd = std::sqrt(trials * p * (1 - p));
    CHECK(std::abs(failures - mean) <= 3 * sd);
    CHECK(sim.counters(NodeId(0)).mac_failures == static_cast<std::uint64_t>(failures));
}

TEST_CASE("unicast to a dead or distant node exhausts retries") {
    Net net(lossless(), {{0, 0}, {50, 0}, {300, 0}});
    net.sim.set_alive(NodeId(1), false);
    std::vector<bool> results;
    net.sim.unicast(NodeId(0), NodeId(1), blob(), Traffic::Data, false, [&](bool ok) { results.push_back(ok); });
    net.sim.unicast(NodeId(0), NodeId(2), blob(), Traffic::Data, false, [&](bool ok) { results.push_back(ok); });
    net.sim.run_until(kSecond);
    CHECK(results == std::vector<bool>{false, false});
    const auto& cnt = net.sim.counters(NodeId(0));
    CHECK(cnt.mac_failures == 2);
    CHECK(cnt.mac_retx == 14);
    CHECK(cnt.frames == 16);
    CHECK(net.agents[1].got.empty());
    CHECK(net.agents[2].got.empty());
}

TEST_CASE("dead nodes are inert and timers are bound to an incarnation") {
    Net net(lossless(), {{0, 0}, {50, 0}});
    int fired = 0;
    net.sim.schedule(2 * kSecond, NodeId(1), [&] { ++fired; });
    net.sim.run_until(kSecond);
    net.sim.set_alive(NodeId(1), false);
    CHECK(net.agents[1].downs == 1);
    net.sim.broadcast(NodeId(0), blob(), Traffic::Data);
    net.sim.broadcast(NodeId(1), blob(), Traffic::Data);
    net.sim.schedule(kSecond, NodeId(1), [&] { ++fired; });
    net.sim.run_until(kSecond + kSecond / 2);
    net.sim.set_alive(NodeId(1), true);
    CHECK(net.agents[1].ups == 1);
    net.sim.run_until(10 * kSecond);
    CHECK(fired == 0);
    CHECK(net.agents[1].got.empty());
    CHECK(net.agents[0].got.empty());
    CHECK(net.sim.counters(NodeId(1)).phy_tx_bytes == 0);
    CHECK(net.sim.uptime_seconds(NodeId(1)) == doctest::Approx(9.5));
}

TEST_CASE("counters close: phy is data plus control plus retransmissions") {
    SimConfig c;
    c.p_loss = 0.3;
    c.congestion_factor = 0.05;
    c.seed = 9;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0, 400), uy(0, 200);
    std::vector<Vec2> pos(20);
    for (auto& p : pos) p = {ux(rng), uy(rng)};
    Simulator sim(c, pos);
    std::uniform_int_distribution<std::uint32_t> node(0, 19);
    std::uniform_int_distribution<std::size_t> size(1, 4000);
    for (int i = 0; i < 2000; ++i) {
        const NodeId a(node(rng)), b(node(rng));
        const auto cls = (i % 3 == 0) ? Traffic::Control : Traffic::Data;
        if (i % 2)
            sim.broadcast(a, blob(size(rng)), cls, i % 5 == 0);
        else if (a != b)
            sim.unicast(a, b, blob(size(rng)), cls, i % 5 == 0);
    }
    sim.run_until(600 * kSecond);
    std::uint64_t phy = 0;
    for (std::uint32_t i = 0; i < 20; ++i) {
        const auto& n = sim.counters(NodeId(i));
        CHECK(n.phy_tx_bytes == n.data_bytes + n.ctrl_bytes + n.retx_bytes);
        CHECK(n.fwd_bytes <= n.phy_tx_bytes);
        phy += n.phy_tx_bytes;
    }
    CHECK(phy == sim.kernel_tx_bytes());
    CHECK(sim.total_counters().phy_tx_bytes == phy);
    CHECK(sim.total_counters().retx_bytes > 0);
}

TEST_CASE("overlapping transmissions raise loss under congestion") {
    auto rate = [](double factor) {
        SimConfig c;
        c.p_loss = 0.05;
        c.congestion_factor = factor;
        Net net(c, {{0, 0}, {50, 0}, {100, 0}});
        for (int i = 0; i < 2000; ++i) {
            net.sim.broadcast(NodeId(0), blob(1000), Traffic::Data);
            net.sim.broadcast(NodeId(2), blob(1000), Traffic::Data);
        }
        net.sim.run_until(100 * kSecond);
        return static_cast<double>(net.agents[1].got.size()) / 4000.0;
    };
    const double quiet = rate(0), busy = rate(0.2);
    CHECK(quiet == doctest::Approx(0.95).epsilon(0.02));
    CHECK(busy < quiet - 0.1);
}

TEST_CASE("transient churn: long-run up fraction matches the semi-Markov chain") {
    // Embedded chain switches with p_switch from either state, so its
    // stationary law is uniform; the time share weights by holding times.
    for (const TransientChurn p : {TransientChurn{120, 60, 0.75}, TransientChurn{50, 150, 0.3}}) {
        const double expected = p.on_period / (p.on_period + p.off_period);
        const int n = 100;
        Simulator sim(lossless(), std::vector<Vec2>(n, Vec2{0, 0}));
        for (std::uint32_t i = 0; i < n; ++i) sim.enable_transient_churn(NodeId(i), p, 0);
        const double horizon = 100000;
        sim.run_until(from_seconds(horizon));
        double up = 0;
        for (std::uint32_t i = 0; i < n; ++i) up += sim.uptime_seconds(NodeId(i));
        CHECK(up / (n * horizon) == doctest::Approx(expected).epsilon(0.03));
    }
}

TEST_CASE("permanent crash happens inside its window") {
    const int n = 50;
    Simulator sim(lossless(), std::vector<Vec2>(n, Vec2{0, 0}));
    for (std::uint32_t i = 0; i < n; ++i) sim.schedule_crash(NodeId(i), 200, 300);
    sim.run_until(from_seconds(199.9));
    for (std::uint32_t i = 0; i < n; ++i) CHECK(sim.alive(NodeId(i)));
    sim.run_until(from_seconds(300.1));
    for (std::uint32_t i = 0; i < n; ++i) {
        CHECK_FALSE(sim.alive(NodeId(i)));
        CHECK(sim.uptime_seconds(NodeId(i)) >= 200);
        CHECK(sim.uptime_seconds(NodeId(i)) <= 300);
    }
}

TEST_CASE("mobility: p_move zero never moves") {
    Simulator sim(lossless(), {{10, 20}});
    sim.enable_mobility(NodeId(0), MobilityParams{2.5, 0.0, 10});
    for (int t = 1; t <= 1000; ++t) {
        sim.run_until(t * 10 * kSecond);
        REQUIRE(sim.position(NodeId(0)) == Vec2{10, 20});
        REQUIRE_FALSE(sim.moving(NodeId(0)));
    }
}

TEST_CASE("mobility: leg duration is at least distance over v_max") {
    for (int seed = 1; seed <= 20; ++seed) {
        SimConfig c = lossless();
        c.seed = static_cast<std::uint64_t>(seed);
        Simulator sim(c, {{0, 100}});
        sim.enable_mobility(NodeId(0), MobilityParams{1.4, 1.0, 120},
                            [](NodeId, std::mt19937_64&) { return Vec2{300, 100}; });
        sim.run_until(from_seconds(120.5));
        REQUIRE(sim.moving(NodeId(0)));
        sim.run_until(from_seconds(120 + 300 / 1.4 - 0.5));
        CHECK(sim.moving(NodeId(0)));
        const Vec2 mid = sim.position(NodeId(0));
        CHECK(mid.y == doctest::Approx(100));
        CHECK(mid.x > 0);
        CHECK(mid.x < 300);
    }
}

TEST_CASE("mobility: random waypoints stay inside the area") {
    SimConfig c = lossless();
    c.area_width = 120;
    c.area_height = 80;
    const int n = 10;
    Simulator sim(c, std::vector<Vec2>(n, Vec2{60, 40}));
    for (std::uint32_t i = 0; i < n; ++i) sim.enable_mobility(NodeId(i), MobilityParams{2.5, 1.0, 1});
    int moving = 0;
    for (int t = 1; t <= 2000; ++t) {
        sim.run_until(t * kSecond);
        for (std::uint32_t i = 0; i < n; ++i) {
            const Vec2 p = sim.position(NodeId(i));
            REQUIRE(p.x >= 0);
            REQUIRE(p.x < 120);
            REQUIRE(p.y >= 0);
            REQUIRE(p.y < 80);
            moving += sim.moving(NodeId(i));
        }
    }
    CHECK(moving > 0);
}

TEST_CASE("same seed, same run") {
    auto run = [](std::uint64_t seed) {
        SimConfig c;
        c.p_loss = 0.2;
        c.seed = seed;
        Net net(c, {{0, 0}, {60, 0}, {120, 0}, {60, 60}});
        for (int i = 0; i < 300; ++i) {
            net.sim.broadcast(NodeId(i % 4), blob(200), Traffic::Data);
            net.sim.unicast(NodeId(1), NodeId(3), blob(50), Traffic::Control, false);
        }
        for (std::uint32_t i = 0; i < 4; ++i) net.sim.enable_mobility(NodeId(i), MobilityParams{1.4, 0.8, 5});
        net.sim.run_until(200 * kSecond);
        std::vector<std::pair<NodeId, SimTime>> all;
        for (auto& a : net.agents) all.insert(all.end(), a.got.begin(), a.got.end());
        std::vector<double> where;
        for (std::uint32_t i = 0; i < 4; ++i) where.push_back(net.sim.position(NodeId(i)).x);
        return std::make_tuple(all, where, net.sim.kernel_tx_bytes());
    };
    CHECK(run(3) == run(3));
    CHECK(run(3) != run(4));
}
