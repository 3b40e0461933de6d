#include "thyme/harness/scenario.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <string>

#include "thyme/rng.hpp"
#include "thyme/thyme_dcs.hpp"
#include "thyme/thyme_plsg.hpp"

namespace thyme::harness {

namespace {

enum : std::uint64_t { kChurnPick = 0x11, kMobilePick = 0x12, kAppStart = 0x13 };

std::vector<NodeId> pick_fraction(std::vector<NodeId> pool, double fraction, std::mt19937_64 rng) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pool.size()))));
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

std::uint64_t run_seed(const Config& cfg) {
    return splitmix64(splitmix64(cfg.sim.seed ^ (std::uint64_t(cfg.topology) << 32)) ^ std::uint64_t(cfg.run));
}

std::vector<sim::Vec2> make_topology(const Config& cfg, int nodes) {
    auto rng = make_rng(cfg.sim.seed, kStreamTopology, static_cast<std::uint64_t>(cfg.topology));
    std::uniform_real_distribution<double> ux(0, cfg.sim.area_width), uy(0, cfg.sim.area_height);
    std::vector<sim::Vec2> out(static_cast<std::size_t>(nodes));
    for (auto& p : out) {
        p.x = ux(rng);
        p.y = uy(rng);
    }
    return out;
}

geo::Grid make_grid(const Config& cfg) {
    return geo::Grid::for_area(cfg.sim.area_width, cfg.sim.area_height, cfg.cell_size);
}

RunResult run_scenario(const Config& in_cfg, const Trace& trace, const Inspector& inspect, const Preparer& prepare) {
    Config cfg = in_cfg;
    cfg.apply_defaults();
    cfg.validate();
    if (trace.nodes != cfg.trace.nodes)
        throw ConfigError("trace has " + std::to_string(trace.nodes) + " nodes, scenario expects " +
                          std::to_string(cfg.trace.nodes));
    trace.validate(cfg.trace.op_start, cfg.sim.duration);

    RunResult res;
    res.cfg = cfg;
    res.nodes = trace.nodes;
    res.sim_seed = run_seed(cfg);

    sim::SimConfig sc = cfg.sim;
    sc.seed = res.sim_seed;
    sc.beacon_interval = cfg.geo.beacon_interval;
    const auto positions = make_topology(cfg, trace.nodes);
    sim::Simulator simulator(sc, positions);
    const auto grid = make_grid(cfg);

    ThymeParams tp = cfg.thyme;
    tp.seed = res.sim_seed;
    std::vector<std::unique_ptr<ThymeNode>> nodes;
    std::vector<ThymeNode*> raw;
    std::vector<DcsNode*> dcs;
    for (int i = 0; i < trace.nodes; ++i) {
        const NodeId id{static_cast<std::uint32_t>(i)};
        if (cfg.materialization == Materialization::Plsg) {
            nodes.push_back(std::make_unique<PlsgNode>(simulator, id, tp, res.log, cfg.dsdv));
        } else {
            auto d = std::make_unique<DcsNode>(simulator, id, tp, res.log, grid, cfg.geo);
            dcs.push_back(d.get());
            nodes.push_back(std::move(d));
        }
        raw.push_back(nodes.back().get());
        simulator.attach(id, nodes.back().get());
    }

    if (prepare) prepare(simulator);

    std::vector<NodeId> all;
    for (int i = 0; i < trace.nodes; ++i) all.push_back(NodeId{static_cast<std::uint32_t>(i)});

    // Churn.
    if (cfg.churn == ChurnMode::Permanent) {
        const auto pubs = trace.publishers();
        for (auto n : pick_fraction({pubs.begin(), pubs.end()}, cfg.churn_fraction,
                                    make_rng(res.sim_seed, kStreamChurn, kChurnPick)))
            simulator.schedule_crash(n, cfg.crash_from, cfg.crash_to);
    } else if (cfg.churn == ChurnMode::Transient) {
        for (auto n : pick_fraction(all, cfg.churn_fraction,
                                    make_rng(res.sim_seed, kStreamChurn, kChurnPick)))
            simulator.enable_transient_churn(n, cfg.transient, cfg.transient_start);
    }

    // Mobility. Cell population stays as initially placed: waypoints lie in
    // initially populated cells and a node never leaves a cell it would empty.
    if (cfg.mobility) {
        std::vector<CellId> populated;
        for (const auto& p : positions) populated.push_back(grid.cell_of(p));
        std::sort(populated.begin(), populated.end());
        populated.erase(std::unique(populated.begin(), populated.end()), populated.end());
        auto sampler = [grid, populated, w = cfg.sim.area_width, h = cfg.sim.area_height](NodeId, std::mt19937_64& rng) {
            std::uniform_int_distribution<std::size_t> pick(0, populated.size() - 1);
            std::uniform_real_distribution<double> u(0, 1);
            const CellId c = populated[pick(rng)];
            const double x0 = c.col * grid.cell_size, y0 = c.row * grid.cell_size;
            const double x1 = std::min(w, x0 + grid.cell_size), y1 = std::min(h, y0 + grid.cell_size);
            return sim::Vec2{x0 + u(rng) * (x1 - x0), y0 + u(rng) * (y1 - y0)};
        };
        auto may_depart = [&simulator, grid](NodeId n) {
            const CellId mine = grid.cell_of(simulator.position(n));
            for (std::uint32_t i = 0; i < simulator.node_count(); ++i) {
                const NodeId o{i};
                if (o == n || simulator.moving(o)) continue;
                if (grid.cell_of(simulator.position(o)) == mine) return true;
            }
            return false;
        };
        for (auto n : pick_fraction(all, cfg.mobile_fraction,
                                    make_rng(res.sim_seed, kStreamMobility, kMobilePick)))
            simulator.enable_mobility(n, cfg.rwp, sampler, may_depart);
    }

    // Startup: routing at 0, applications spread over the join window.
    for (auto* n : raw) n->boot();
    {
        auto rng = make_rng(res.sim_seed, kStreamProtocol, kAppStart);
        std::uniform_real_distribution<double> u(cfg.sim.join_start, cfg.sim.join_start + cfg.sim.join_length);
        for (auto* n : raw) {
            const auto at = sim::from_seconds(u(rng));
            simulator.schedule_kernel_at(at, [n, &simulator] {
                if (simulator.alive(n->id())) n->start_app();
            });
        }
    }

    // Trace replay.
    for (const auto& op : trace.ops) {
        auto* node = raw[op.node.value];
        if (op.kind == TraceOpKind::DownloadPolicy) {
            node->set_download_policy(DownloadPolicy{op.mode, op.probability});
            continue;
        }
        simulator.schedule_kernel_at(op.time_ms * sim::kMillisecond, [&res, &simulator, node, &op] {
            if (!simulator.alive(node->id()) || !node->app_started()) {
                ++res.skipped_ops;
                return;
            }
            bool ok = false;
            switch (op.kind) {
                case TraceOpKind::Pub: ok = node->publish(op.id_obj, op.tags, "", object_data(op.id_obj, op.size)); break;
                case TraceOpKind::Unpub: ok = node->unpublish(op.id_obj); break;
                case TraceOpKind::Sub: ok = node->subscribe(op.id_sub, op.query, op.ts_start, op.ts_end); break;
                case TraceOpKind::Unsub: ok = node->unsubscribe(op.id_sub); break;
                case TraceOpKind::DownloadPolicy: break;
            }
            res.issued.push_back({&op, ok});
        });
    }

    simulator.run_until(sim::from_seconds(cfg.sim.duration));

    res.totals = simulator.total_counters();
    res.kernel_tx_bytes = simulator.kernel_tx_bytes();
    res.events = simulator.events_processed();
    for (auto* n : raw) res.uptime.push_back(simulator.uptime_seconds(n->id()));
    for (auto* d : dcs) {
        const auto& s = d->router().stats();
        res.route_drops += s.drops_no_neighbor + s.drops_hop_limit + s.drops_moving + s.drops_mac;
        res.moving_forwards += s.forwarded_while_moving;
    }
    if (cfg.materialization == Materialization::Plsg)
        for (auto* n : raw) res.route_drops += static_cast<PlsgNode*>(n)->dsdv().drops();
    if (inspect) inspect(simulator, raw);
    check_invariants(res);
    return res;
}

void check_invariants(const RunResult& r) {
    const auto& t = r.totals;
    if (t.phy_tx_bytes != t.data_bytes + t.ctrl_bytes + t.retx_bytes)
        throw InvariantError("phy bytes " + std::to_string(t.phy_tx_bytes) + " != data + ctrl + retx " +
                             std::to_string(t.data_bytes + t.ctrl_bytes + t.retx_bytes));
    if (t.phy_tx_bytes != r.kernel_tx_bytes)
        throw InvariantError("per-node phy bytes " + std::to_string(t.phy_tx_bytes) + " != radio total " +
                             std::to_string(r.kernel_tx_bytes));
    if (t.fwd_bytes > t.phy_tx_bytes) throw InvariantError("forwarded bytes exceed phy bytes");
    if (r.moving_forwards != 0)
        throw InvariantError(std::to_string(r.moving_forwards) + " packets forwarded by moving nodes");
}

}  // namespace thyme::harness
