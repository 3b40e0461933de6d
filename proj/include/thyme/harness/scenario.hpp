#pragma once

// Runs one (trace, scenario, materialization, seed) combination end to end.

#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "thyme/harness/config.hpp"
#include "thyme/harness/trace.hpp"
#include "thyme/node.hpp"
#include "thyme/route_geo.hpp"
#include "thyme/simnet.hpp"

namespace thyme::harness {

/// A trace op the runner actually handed to a live node.
struct IssuedOp {
    const TraceOp* op;
    bool accepted;  // the node did not reject it synchronously
};

struct RunResult {
    Config cfg;
    std::uint64_t sim_seed = 0;
    int nodes = 0;
    EventLog log;
    std::vector<IssuedOp> issued;
    std::size_t skipped_ops = 0;  // issuing node was down
    sim::NodeCounters totals;
    std::uint64_t kernel_tx_bytes = 0;
    std::uint64_t events = 0;
    std::uint64_t route_drops = 0;
    std::uint64_t moving_forwards = 0;  // DCS forwards by nodes in transit
    std::vector<double> uptime;         // per node, seconds
};

/// Called once the run has ended, before the nodes are torn down.
using Inspector = std::function<void(const sim::Simulator&, const std::vector<ThymeNode*>&)>;
/// Called once the nodes are attached, before anything is scheduled.
using Preparer = std::function<void(sim::Simulator&)>;

/// Seed of the simulator for the configured (seed, topology, run).
std::uint64_t run_seed(const Config& cfg);
/// Node placement of the configured topology, uniform over the area.
std::vector<sim::Vec2> make_topology(const Config& cfg, int nodes);
/// Grid the geographic layer uses for the configured area.
geo::Grid make_grid(const Config& cfg);

class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Throws InvariantError when byte accounting does not close or a DCS node
/// forwarded while in transit.
void check_invariants(const RunResult& r);

/// `trace` must outlive the returned result (IssuedOp points into it).
/// Checks the invariants before returning.
RunResult run_scenario(const Config& cfg, const Trace& trace, const Inspector& inspect = {},
                       const Preparer& prepare = {});

}  // namespace thyme::harness
