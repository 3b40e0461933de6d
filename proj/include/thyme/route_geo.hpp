#pragma once

// Cell-based geographic routing for the data-centric materialization.
//
// Space is a grid of square cells; each populated cell acts as a virtual
// node. Packets move cell to cell over the 8-connected graph of populated
// cells: greedy towards the destination cell's center, falling back to a
// right-hand traversal around voids. A traversal that comes back to where it
// started ends at the closest cell it visited, which then stands in for the
// (empty) destination.

#include <cstdint>
#include <functional>
#include <map>
#include <string_view>
#include <vector>

#include "thyme/route_flood.hpp"
#include "thyme/simnet.hpp"

namespace thyme::geo {

using sim::PayloadPtr;
using sim::SimTime;
using sim::Traffic;
using sim::Vec2;

struct Grid {
    int cols = 1;
    int rows = 1;
    double cell_size = 40;

    static Grid for_area(double width, double height, double cell_size);
    CellId cell_of(Vec2 p) const;
    Vec2 center(CellId c) const;
    bool contains(CellId c) const { return c.col >= 0 && c.row >= 0 && c.col < cols && c.row < rows; }
};

CellId hash_to_cell(std::string_view key, const Grid& grid);

/// Squared center-to-center distance in cell units.
inline int dist2(CellId a, CellId b) {
    const int dc = a.col - b.col, dr = a.row - b.row;
    return dc * dc + dr * dr;
}
/// Total order used wherever cells compete on closeness to `target`.
inline bool closer(CellId a, CellId b, CellId target) {
    const int da = dist2(a, target), db = dist2(b, target);
    if (da != db) return da < db;
    return a < b;
}

// ---------------------------------------------------------------------------
// Cell-level routing decision, independent of nodes and radios.

struct PerimeterState {
    bool active = false;
    bool proxy_phase = false;  // the target is a proxy picked by an earlier traversal
    CellId entry, first, prev, best;
};

enum class StepKind : std::uint8_t { Deliver, Forward, Drop };

struct Step {
    StepKind kind = StepKind::Drop;
    CellId next;
};

using CellPredicate = std::function<bool(CellId)>;

/// One routing decision at `here` for a packet heading to `target`.
/// `populated(c)` reports whether the 8-neighbor cell c can take the packet.
/// May rewrite `target` when a traversal elects a proxy.
Step route_step(CellId here, CellId& target, PerimeterState& st, const CellPredicate& populated);

// ---------------------------------------------------------------------------
// Wire records

enum class DeliveryMode : std::uint8_t { Cell = 0, Anycast = 1, Node = 2 };

struct GeoDest {
    CellId cell;           // the addressed cell (hashed cell, subscriber cell, ...)
    CellId target;         // cell currently steered to; differs from `cell` after proxy election
    NodeId node = kNoNode;  // node-addressed only
    PerimeterState perim;

    static constexpr std::size_t kBytes = 2 * kCellIdBytes + kNodeIdBytes + 4 * kCellIdBytes + 1;
};

struct GeoPacket final : sim::Payload {
    NodeId origin;
    CellId origin_cell;
    std::uint32_t msg_id = 0;
    std::uint8_t hops = 0;
    DeliveryMode mode = DeliveryMode::Cell;
    Traffic cls = Traffic::Data;
    bool is_nack = false;
    std::vector<GeoDest> dests;
    PayloadPtr inner;
    // Instrumentation only, not on the wire.
    double meters = 0;

    static constexpr std::size_t kHeaderBytes = 1 + kNodeIdBytes + kCellIdBytes + 4 + 1 + 1 + 1;
    std::size_t wire_size() const override {
        return kHeaderBytes + GeoDest::kBytes * dests.size() + inner->wire_size();
    }
};

/// Intra-cell fan-out of a packet that reached its cell.
struct CellCast final : sim::Payload {
    NodeId origin;
    CellId origin_cell;
    CellId at_cell;
    std::uint32_t msg_id = 0;
    std::uint8_t hops = 0;
    std::vector<CellId> cells;  // addressed cells this delivery stands for
    PayloadPtr inner;
    double meters = 0;  // instrumentation

    static constexpr std::size_t kHeaderBytes = 1 + kNodeIdBytes + 2 * kCellIdBytes + 4 + 1 + 1;
    std::size_t wire_size() const override { return kHeaderBytes + kCellIdBytes * cells.size() + inner->wire_size(); }
};

struct Beacon final : sim::Payload {
    NodeId node;
    CellId cell;
    std::uint8_t flags = 0;

    static constexpr std::uint8_t kForwarding = 1;  // settled in `cell` and stationary
    static constexpr std::uint8_t kMember = 2;      // joined the cell's shared state
    static constexpr std::size_t kBytes = 1 + kNodeIdBytes + kCellIdBytes + 1;
    std::size_t wire_size() const override { return kBytes; }
};

/// Carried back to the source of a node-addressed packet whose target was
/// not found in the destination cell.
struct Nack final : sim::Payload {
    std::uint32_t msg_id = 0;
    NodeId target;
    CellId cell;
    PayloadPtr original;

    static constexpr std::size_t kBytes = 4 + kNodeIdBytes + kCellIdBytes;
    std::size_t wire_size() const override { return kBytes; }
};

// ---------------------------------------------------------------------------

struct GeoParams {
    double beacon_interval = 1.0;
    double beacon_timeout = 3.0;
    double stationary_after = 5.0;
    int max_hops = 0;        // 0: 4 x grid perimeter
    int reroutes = 2;        // next-hop alternatives tried after a MAC failure
};

struct Delivery {
    NodeId origin;
    CellId origin_cell;
    std::uint32_t msg_id;
    CellId at_cell;            // where it was delivered (may be a proxy)
    std::vector<CellId> cells;  // addressed cells (Cell/Anycast)
    int hops;
    double meters;
    bool direct;  // the receiver got it from the routing leg, not the intra-cell fan-out
};

struct GeoStats {
    std::uint64_t drops_no_neighbor = 0;
    std::uint64_t drops_hop_limit = 0;
    std::uint64_t drops_moving = 0;
    std::uint64_t drops_mac = 0;
    std::uint64_t nacks_sent = 0;
    std::uint64_t forwarded = 0;
    std::uint64_t forwarded_while_moving = 0;  // must stay zero
};

class GeoRouter {
public:
    struct Neighbor {
        CellId cell;
        std::uint8_t flags = 0;
        SimTime last_seen = 0;
    };

    using DeliverFn = std::function<void(const Delivery&, const PayloadPtr& inner)>;
    using NackFn = std::function<void(const Nack&)>;
    using SettleFn = std::function<void(CellId old_cell, CellId new_cell)>;
    using UnsettleFn = std::function<void()>;

    GeoRouter(sim::Simulator& sim, NodeId self, Grid grid, GeoParams params = {});

    void set_deliver(DeliverFn f) { deliver_ = std::move(f); }
    void set_nack(NackFn f) { nack_ = std::move(f); }
    void set_settle(SettleFn f) { settle_ = std::move(f); }
    void set_unsettle(UnsettleFn f) { unsettle_ = std::move(f); }

    /// Starts beaconing and stationarity tracking; call again after a reboot.
    void start();
    void reset();

    /// One packet towards all `cells`, split only where next hops diverge.
    std::uint32_t send_to_cells(const std::vector<CellId>& cells, PayloadPtr inner, Traffic cls,
                                DeliveryMode mode = DeliveryMode::Cell);
    std::uint32_t send_to_node(NodeId node, CellId cell, PayloadPtr inner, Traffic cls);
    bool handle(NodeId from, const PayloadPtr& frame);

    /// Cell the node is settled in (routes and serves as a member there).
    CellId cell() const { return cell_; }
    bool settled() const { return settled_; }
    bool member() const { return member_; }
    void set_member(bool m);

    /// Fresh neighbors that are settled members of this node's cell, plus self if a member.
    std::vector<NodeId> cell_members() const;
    bool is_designated() const;
    bool knows_in_cell(NodeId n, CellId c) const;
    const std::map<NodeId, Neighbor>& neighbors() const { return nbrs_; }
    const Grid& grid() const { return grid_; }
    const GeoStats& stats() const { return stats_; }

    void send_beacon();

private:
    void tick();
    bool fresh(const Neighbor& n) const;
    bool cell_usable(CellId c) const;
    NodeId pick_node(CellId c, std::uint32_t salt, NodeId exclude = kNoNode) const;
    void process(std::shared_ptr<GeoPacket> pkt, bool originated, int reroutes_left);
    void deliver_here(const GeoPacket& pkt, const std::vector<CellId>& cells, bool fanout);
    void node_arrival(const GeoPacket& pkt, const GeoDest& d);
    void send_nack(const GeoPacket& pkt, const GeoDest& d);

    sim::Simulator& sim_;
    NodeId self_;
    Grid grid_;
    GeoParams params_;
    int max_hops_;
    std::map<NodeId, Neighbor> nbrs_;
    CellId cell_;
    bool settled_ = true;
    bool member_ = false;
    SimTime last_motion_ = 0;
    std::uint32_t next_msg_ = 1;
    std::uint32_t boot_ = 0;
    GeoStats stats_;
    DeliverFn deliver_;
    NackFn nack_;
    SettleFn settle_;
    UnsettleFn unsettle_;
};

}  // namespace thyme::geo
