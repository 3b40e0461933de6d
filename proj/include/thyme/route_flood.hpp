#pragma once

// Routing for the publish-locally/subscribe-globally materialization:
// network-wide flooding with duplicate suppression, and a simplified DSDV
// (periodic full-table dumps, sequence-numbered routes, hop-count metric).

#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "thyme/simnet.hpp"

namespace thyme::route {

using sim::PayloadPtr;
using sim::SimTime;
using sim::Traffic;

// Message type tags (first header byte on the wire).
enum class PacketType : std::uint8_t {
    Flood = 0x01,
    DsdvUpdate = 0x02,
    DvData = 0x03,
    Beacon = 0x10,
    Geo = 0x11,
    CellCast = 0x12,
};

struct FloodPacket final : sim::Payload {
    NodeId origin;
    std::uint32_t seq = 0;
    std::uint8_t hops = 0;
    Traffic cls = Traffic::Data;
    PayloadPtr inner;

    static constexpr std::size_t kHeaderBytes = 1 + kNodeIdBytes + 4 + 1;
    std::size_t wire_size() const override { return kHeaderBytes + inner->wire_size(); }
};

class FloodRouter {
public:
    using Deliver = std::function<void(NodeId origin, const PayloadPtr& inner)>;

    FloodRouter(sim::Simulator& sim, NodeId self, std::size_t memory = 4096, double jitter = 0.005);

    void set_deliver(Deliver d) { deliver_ = std::move(d); }

    /// Floods `inner`; the origin delivers to itself immediately.
    void flood(PayloadPtr inner, Traffic cls = Traffic::Data);
    /// Returns true if the frame was a flood packet (whether or not it was new).
    bool handle(NodeId from, const PayloadPtr& frame);
    /// Forgets the duplicate-suppression memory (reboot).
    void reset();

    std::uint64_t rebroadcasts() const { return rebroadcasts_; }

private:
    bool remember(std::uint64_t id);

    sim::Simulator& sim_;
    NodeId self_;
    std::size_t memory_;
    double jitter_;
    std::uint32_t next_seq_ = 0;
    std::list<std::uint64_t> lru_;
    std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> seen_;
    std::uint64_t rebroadcasts_ = 0;
    Deliver deliver_;
};

struct DsdvUpdate final : sim::Payload {
    struct Adv {
        NodeId dst;
        std::uint32_t seq;
        std::uint8_t metric;
    };
    NodeId origin;
    std::vector<Adv> entries;

    static constexpr std::size_t kHeaderBytes = 1 + kNodeIdBytes + 2;
    static constexpr std::size_t kEntryBytes = 12;
    std::size_t wire_size() const override { return kHeaderBytes + kEntryBytes * entries.size(); }
};

struct DvPacket final : sim::Payload {
    NodeId src;
    NodeId dst;
    std::uint8_t ttl = 64;
    Traffic cls = Traffic::Data;
    PayloadPtr inner;
    // Instrumentation only, not on the wire.
    int hops = 0;
    double meters = 0;

    static constexpr std::size_t kHeaderBytes = 1 + 2 * kNodeIdBytes + 1;
    std::size_t wire_size() const override { return kHeaderBytes + inner->wire_size(); }
};

struct DsdvParams {
    double update_interval = 15;
    double holdtime = 45;
    int ttl = 64;
};

class DsdvRouter {
public:
    static constexpr std::uint8_t kInfinity = 255;

    struct Route {
        NodeId next;
        std::uint32_t seq = 0;
        std::uint8_t metric = kInfinity;
        SimTime updated = 0;
        // A fresher but longer advertisement waiting for the current route to go stale.
        std::optional<DsdvUpdate::Adv> pending;
        NodeId pending_next;
    };
    using Deliver = std::function<void(const DvPacket& pkt)>;

    DsdvRouter(sim::Simulator& sim, NodeId self, DsdvParams params = {});

    void set_deliver(Deliver d) { deliver_ = std::move(d); }

    /// Starts periodic dumps with a random phase; call again after a reboot.
    void start();
    /// Clears the table (reboot). The own sequence number keeps increasing.
    void reset();

    /// False when no valid route to dst exists. Delivery to self is immediate.
    bool send(NodeId dst, PayloadPtr inner, Traffic cls = Traffic::Data);
    bool handle(NodeId from, const PayloadPtr& frame);

    std::optional<NodeId> next_hop(NodeId dst) const;
    int metric(NodeId dst) const;
    const std::map<NodeId, Route>& table() const { return table_; }
    std::uint64_t drops() const { return drops_; }

private:
    void dump();
    void housekeeping();
    void invalidate_via(NodeId next);
    void forward(std::shared_ptr<DvPacket> pkt, bool originated);
    void on_update(NodeId from, const DsdvUpdate& upd);

    sim::Simulator& sim_;
    NodeId self_;
    DsdvParams params_;
    std::uint32_t own_seq_ = 0;
    std::map<NodeId, Route> table_;
    std::uint64_t drops_ = 0;
    Deliver deliver_;
};

}  // namespace thyme::route
