#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "properties.hpp"
#include "thyme/rng.hpp"
#include "thyme/route_geo.hpp"

using namespace thyme;
using namespace thyme::geo;
using thyme::sim::kSecond;

namespace {

struct Blob : sim::Payload {
    std::size_t n;
    explicit Blob(std::size_t n) : n(n) {}
    std::size_t wire_size() const override { return n; }
};

struct GeoStack : sim::Agent {
    GeoRouter router;
    std::vector<Delivery> got;
    std::vector<Nack> nacks;
    GeoStack(sim::Simulator& sim, NodeId self, Grid g) : router(sim, self, g) {
        router.set_deliver([this](const Delivery& d, const sim::PayloadPtr&) { got.push_back(d); });
        router.set_nack([this](const Nack& n) { nacks.push_back(n); });
    }
    void on_frame(NodeId from, const sim::PayloadPtr& frame) override { router.handle(from, frame); }
};

// One node at the center of every cell of a cols x rows grid, minus `holes`.
struct GridNet {
    Grid grid;
    std::unique_ptr<sim::Simulator> sim;
    std::vector<std::unique_ptr<GeoStack>> nodes;
    std::map<CellId, NodeId> at;

    GridNet(int cols, int rows, std::set<CellId> holes = {}) {
        grid = Grid{cols, rows, 40};
        std::vector<sim::Vec2> pos;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if (!holes.count(CellId{c, r})) {
                    at[CellId{c, r}] = NodeId(static_cast<std::uint32_t>(pos.size()));
                    pos.push_back(grid.center(CellId{c, r}));
                }
        sim::SimConfig cfg;
        cfg.p_loss = 0;
        cfg.area_width = cols * 40;
        cfg.area_height = rows * 40;
        sim = std::make_unique<sim::Simulator>(cfg, pos);
        for (std::uint32_t i = 0; i < pos.size(); ++i) {
            nodes.push_back(std::make_unique<GeoStack>(*sim, NodeId(i), grid));
            sim->attach(NodeId(i), nodes.back().get());
            nodes.back()->router.start();
        }
        sim->run_until(5 * kSecond);
    }
    GeoStack& node(CellId c) { return *nodes[at.at(c).value]; }
    void settle(double seconds = 1) { sim->run_until(sim->now() + sim::from_seconds(seconds)); }
    std::vector<Delivery> direct(CellId c) const {
        std::vector<Delivery> out;
        for (const auto& d : nodes[at.at(c).value]->got)
            if (d.direct) out.push_back(d);
        return out;
    }
};

}  // namespace

TEST_CASE("grid dimensions and cell lookup") {
    const Grid g = Grid::for_area(400, 200, 40);
    CHECK(g.cols == 10);
    CHECK(g.rows == 5);
    CHECK(Grid::for_area(401, 200, 40).cols == 11);
    CHECK(Grid::for_area(10, 10, 40).cols == 1);
    CHECK_THROWS(Grid::for_area(0, 10, 40));
    CHECK(g.cell_of({0, 0}) == CellId{0, 0});
    CHECK(g.cell_of({39.99, 40}) == CellId{0, 1});
    CHECK(g.cell_of({400, 200}) == CellId{9, 4});
    CHECK(g.cell_of({-5, 1000}) == CellId{0, 4});
    CHECK(g.center(CellId{2, 1}) == sim::Vec2{100, 60});
}

TEST_CASE("key hashing is FNV-1a") {
    CHECK(stable_hash("", 0) == 0xcbf29ce484222325ULL);
    CHECK(stable_hash("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(stable_hash("foobar", 6) == 0x85944171f73967e8ULL);
    const Grid g{14, 7, 40};
    const std::uint64_t idx = 0x85944171f73967e8ULL % 98;
    CHECK(hash_to_cell("foobar", g) == CellId{static_cast<int>(idx % 14), static_cast<int>(idx / 14)});
}

TEST_CASE("a one-cell grid maps every key to its only cell") {
    const Grid g{1, 1, 40};
    for (int i = 0; i < 100; ++i) CHECK(hash_to_cell("tag" + std::to_string(i), g) == CellId{0, 0});
}

TEST_CASE("hashed cells are uniform") {
    const Grid g{14, 7, 40};
    std::map<CellId, int> hits;
    const int keys = 10000;
    for (int i = 0; i < keys; ++i) {
        const CellId c = hash_to_cell("tag" + std::to_string(i), g);
        REQUIRE(g.contains(c));
        ++hits[c];
    }
    const double expected = keys / 98.0;
    double chi2 = 0;
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 14; ++c) {
            const double d = hits[CellId{c, r}] - expected;
            chi2 += d * d / expected;
        }
    // 97 degrees of freedom, 0.999 quantile.
    CHECK(chi2 < 142.3);
}

TEST_CASE("route_step: greedy on a full grid takes Chebyshev-distance hops") {
    const auto all = [](CellId c) { return c.col >= 0 && c.row >= 0 && c.col < 6 && c.row < 4; };
    CellId here{0, 0}, target{5, 2};
    PerimeterState st;
    int hops = 0;
    while (true) {
        const Step s = route_step(here, target, st, all);
        if (s.kind == StepKind::Deliver) break;
        REQUIRE(s.kind == StepKind::Forward);
        CHECK(std::max(std::abs(s.next.col - here.col), std::abs(s.next.row - here.row)) == 1);
        here = s.next;
        ++hops;
        REQUIRE(hops < 20);
    }
    CHECK(here == CellId{5, 2});
    CHECK(hops == 5);
}

TEST_CASE("route_step: an empty target cell elects the closest populated cell") {
    // 3x3 grid without its center: the packet loops around and settles on
    // one of the four edge-adjacent cells.
    const auto pop = [](CellId c) {
        return c.col >= 0 && c.row >= 0 && c.col < 3 && c.row < 3 && !(c == CellId{1, 1});
    };
    CellId here{0, 2}, target{1, 1};
    PerimeterState st;
    for (int i = 0; i < 40; ++i) {
        const Step s = route_step(here, target, st, pop);
        if (s.kind == StepKind::Deliver) break;
        REQUIRE(s.kind == StepKind::Forward);
        REQUIRE(pop(s.next));
        here = s.next;
    }
    CHECK(dist2(here, CellId{1, 1}) == 1);
}

TEST_CASE("route_step: a populated cell with no populated neighbors delivers to itself") {
    const auto only = [](CellId c) { return c == CellId{0, 0}; };
    CellId target{1, 0};
    PerimeterState st;
    const Step s = route_step(CellId{0, 0}, target, st, only);
    CHECK(s.kind == StepKind::Deliver);
    CHECK(s.next == CellId{0, 0});
}

TEST_CASE("cell routing properties") {
    const auto reach = props::grid_reachability(8);
    CHECK_MESSAGE(reach.ok(), reach.detail);
    const auto proxy = props::proxy_rule(6);
    CHECK_MESSAGE(proxy.ok(), proxy.detail);
}

TEST_CASE("router delivers across a full grid") {
    GridNet net(6, 4);
    net.node(CellId{0, 0}).router.send_to_cells({CellId{5, 3}}, std::make_shared<Blob>(40), sim::Traffic::Data);
    net.settle();
    const auto got = net.direct(CellId{5, 3});
    REQUIRE(got.size() == 1);
    CHECK(got[0].hops == 5);
    CHECK(got[0].at_cell == CellId{5, 3});
    CHECK(got[0].origin_cell == CellId{0, 0});
    CHECK(got[0].cells == std::vector<CellId>{CellId{5, 3}});
}

TEST_CASE("router elects a proxy for an empty cell") {
    GridNet net(5, 3, {CellId{4, 1}});
    net.node(CellId{0, 1}).router.send_to_cells({CellId{4, 1}}, std::make_shared<Blob>(40), sim::Traffic::Data);
    net.settle();
    int delivered = 0;
    for (const auto& [cell, id] : net.at)
        for (const auto& d : net.nodes[id.value]->got)
            if (d.direct) {
                ++delivered;
                CHECK(dist2(d.at_cell, CellId{4, 1}) == 1);
                CHECK(d.cells == std::vector<CellId>{CellId{4, 1}});
            }
    CHECK(delivered == 1);
}

TEST_CASE("multi-destination packets share hops until they diverge") {
    const std::vector<CellId> dests{CellId{6, 0}, CellId{7, 0}};
    auto bytes = [](const GridNet& net) { return net.sim->total_counters().data_bytes; };

    GridNet joint(8, 1);
    const auto base_joint = bytes(joint);
    joint.node(CellId{0, 0}).router.send_to_cells(dests, std::make_shared<Blob>(200), sim::Traffic::Data);
    joint.settle();
    const auto joint_cost = bytes(joint) - base_joint;

    GridNet apart(8, 1);
    const auto base_apart = bytes(apart);
    for (const auto& d : dests)
        apart.node(CellId{0, 0}).router.send_to_cells({d}, std::make_shared<Blob>(200), sim::Traffic::Data);
    apart.settle();
    const auto apart_cost = bytes(apart) - base_apart;

    for (const auto& d : dests) {
        CHECK(joint.direct(d).size() == 1);
        CHECK(apart.direct(d).size() == 1);
    }
    CHECK(joint_cost < apart_cost);
}

TEST_CASE("node-addressed packets") {
    GridNet net(5, 2);
    const NodeId target = net.at.at(CellId{4, 1});
    SUBCASE("reach the node") {
        net.node(CellId{0, 0}).router.send_to_node(target, CellId{4, 1}, std::make_shared<Blob>(20),
                                                   sim::Traffic::Data);
        net.settle();
        REQUIRE(net.node(CellId{4, 1}).got.size() == 1);
        CHECK(net.node(CellId{4, 1}).got[0].hops == 4);
        CHECK(net.node(CellId{0, 0}).nacks.empty());
    }
    SUBCASE("come back as a NACK when the node is absent") {
        net.node(CellId{0, 0}).router.send_to_node(target, CellId{3, 0}, std::make_shared<Blob>(20),
                                                   sim::Traffic::Data);
        net.settle();
        CHECK(net.node(CellId{4, 1}).got.empty());
        REQUIRE(net.node(CellId{0, 0}).nacks.size() == 1);
        CHECK(net.node(CellId{0, 0}).nacks[0].target == target);
        CHECK(net.node(CellId{0, 0}).nacks[0].cell == CellId{3, 0});
    }
    SUBCASE("come back as a NACK when the node crashed") {
        net.sim->set_alive(target, false);
        net.node(CellId{0, 0}).router.send_to_node(target, CellId{4, 1}, std::make_shared<Blob>(20),
                                                   sim::Traffic::Data);
        net.settle();
        REQUIRE(net.node(CellId{0, 0}).nacks.size() == 1);
        CHECK(net.node(CellId{0, 0}).nacks[0].target == target);
    }
}

TEST_CASE("cell fan-out reaches every node of the destination cell") {
    Grid g{3, 1, 40};
    std::vector<sim::Vec2> pos{{60, 20}, {100, 10}, {110, 30}, {90, 25}};
    sim::SimConfig cfg;
    cfg.p_loss = 0;
    cfg.area_width = 120;
    cfg.area_height = 40;
    sim::Simulator sim(cfg, pos);
    std::vector<std::unique_ptr<GeoStack>> nodes;
    for (std::uint32_t i = 0; i < pos.size(); ++i) {
        nodes.push_back(std::make_unique<GeoStack>(sim, NodeId(i), g));
        sim.attach(NodeId(i), nodes.back().get());
        nodes.back()->router.start();
    }
    sim.run_until(5 * kSecond);
    nodes[0]->router.send_to_cells({CellId{2, 0}}, std::make_shared<Blob>(20), sim::Traffic::Data);
    sim.run_until(6 * kSecond);
    int direct = 0;
    for (int i = 1; i <= 3; ++i) {
        REQUIRE(nodes[i]->got.size() == 1);
        direct += nodes[i]->got[0].direct;
    }
    CHECK(direct == 1);
    CHECK(nodes[0]->got.empty());
}
