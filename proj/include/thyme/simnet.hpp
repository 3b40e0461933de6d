#pragma once

// Deterministic discrete-event wireless network simulator.
//
// Radio: unit disc of radius radio_range with i.i.d. per-frame loss. The
// effective loss of a reception grows linearly with the number of other
// transmissions overlapping it in time whose sender is within range of the
// receiver (capped). Each node transmits one frame at a time; frames queue
// behind the node's previous transmission plus a uniform access delay.
//
// Unicast retries up to mac_retries times; broadcast is a single attempt.
// Every attempt is charged to the sender's phy_tx_bytes; the first attempt
// goes to data or control bytes by traffic class and the rest to retx bytes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "thyme/core.hpp"

namespace thyme::sim {

using SimTime = std::int64_t;  // microseconds

inline constexpr SimTime kMillisecond = 1000;
inline constexpr SimTime kSecond = 1'000'000;

constexpr SimTime from_seconds(double s) { return static_cast<SimTime>(s * 1e6 + (s >= 0 ? 0.5 : -0.5)); }
constexpr double to_seconds(SimTime t) { return static_cast<double>(t) * 1e-6; }
inline Timestamp to_timestamp(SimTime t) { return Timestamp::at(t / kMillisecond); }

struct Vec2 {
    double x = 0;
    double y = 0;
    bool operator==(const Vec2&) const = default;
};

double distance(Vec2 a, Vec2 b);

enum class Traffic : std::uint8_t { Data, Control };

/// Anything carried over the air. wire_size() is the encoded size without
/// the per-frame overhead the radio adds.
struct Payload {
    virtual ~Payload() = default;
    virtual std::size_t wire_size() const = 0;
};
using PayloadPtr = std::shared_ptr<const Payload>;

struct SimConfig {
    double area_width = 400;
    double area_height = 200;
    double radio_range = 113;
    double p_loss = 0.05;
    int mac_retries = 7;
    double beacon_interval = 1.0;
    std::uint64_t seed = 1;
    double duration = 720;
    double join_start = 30;
    double join_length = 30;
    double cooldown = 60;

    double hop_latency = 0.002;          // fixed per-hop latency, seconds
    double bandwidth_bps = 6e6;
    std::size_t frame_overhead = 64;     // MAC + LLC + IP + UDP header bytes per frame
    std::size_t mtu = 1472;              // payload bytes per frame before fragmentation
    double phy_frame_time = 100e-6;      // preamble + interframe space per frame, seconds
    double mac_jitter = 0.001;           // uniform channel access delay, seconds
    double congestion_factor = 0.0;      // extra loss per overlapping in-range transmission
    double congestion_cap = 0.6;

    void validate() const;
};

struct NodeCounters {
    std::uint64_t phy_tx_bytes = 0;
    std::uint64_t data_bytes = 0;
    std::uint64_t ctrl_bytes = 0;
    std::uint64_t retx_bytes = 0;
    std::uint64_t fwd_bytes = 0;
    std::uint64_t mac_retx = 0;
    std::uint64_t mac_failures = 0;
    std::uint64_t frames = 0;

    NodeCounters& operator+=(const NodeCounters& o);
};

/// Protocol stack attached to a node.
class Agent {
public:
    virtual ~Agent() = default;
    virtual void on_frame(NodeId from, const PayloadPtr& payload) = 0;
    virtual void on_down() {}
    virtual void on_up() {}
};

struct MobilityParams {
    double v_max = 1.4;    // m/s, leg speed uniform in (0, v_max]
    double p_move = 0.8;   // probability of leaving at the end of a pause
    double pause = 120;    // seconds
};

using WaypointSampler = std::function<Vec2(NodeId, std::mt19937_64&)>;
using DeparturePredicate = std::function<bool(NodeId)>;

struct TransientChurn {
    double on_period = 120;
    double off_period = 60;
    double p_switch = 0.75;
};

class Simulator {
public:
    Simulator(SimConfig cfg, std::vector<Vec2> positions);
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    const SimConfig& config() const { return cfg_; }
    std::size_t node_count() const { return nodes_.size(); }
    SimTime now() const { return now_; }

    void attach(NodeId n, Agent* agent);

    /// Node-bound timers never fire while the node is down, nor after it has
    /// gone down and come back (each up period is a new incarnation).
    void schedule(SimTime delay, NodeId node, std::function<void()> fn);
    void schedule_kernel_at(SimTime at, std::function<void()> fn);

    void run_until(SimTime end);
    std::uint64_t events_processed() const { return events_; }

    // --- radio ---------------------------------------------------------------
    void broadcast(NodeId src, PayloadPtr msg, Traffic cls, bool forwarded = false);
    using UnicastDone = std::function<void(bool delivered)>;
    void unicast(NodeId src, NodeId dst, PayloadPtr msg, Traffic cls, bool forwarded, UnicastDone done = {});

    /// Sender-to-receiver distance of the frame being delivered; valid
    /// inside Agent::on_frame.
    double last_hop_meters() const { return last_hop_meters_; }

    // --- state ---------------------------------------------------------------
    Vec2 position(NodeId n) const;
    bool moving(NodeId n) const { return nodes_[n.value].in_transit; }
    bool alive(NodeId n) const { return nodes_[n.value].alive; }
    bool in_range(NodeId a, NodeId b) const;
    std::vector<NodeId> neighbors(NodeId n) const;
    const NodeCounters& counters(NodeId n) const { return nodes_[n.value].counters; }
    NodeCounters total_counters() const;
    std::uint64_t kernel_tx_bytes() const { return kernel_tx_bytes_; }

    /// Observes every transmission attempt with its on-air byte count.
    using TxTap = std::function<void(NodeId src, const Payload& msg, std::size_t bytes, bool retx)>;
    void set_tx_tap(TxTap tap) { tx_tap_ = std::move(tap); }

    void set_alive(NodeId n, bool up);

    // --- mobility & churn ----------------------------------------------------
    void enable_mobility(NodeId n, MobilityParams params, WaypointSampler sampler = {},
                         DeparturePredicate may_depart = {});
    /// Crash-stop at a uniform instant in [from, to] seconds.
    void schedule_crash(NodeId n, double from, double to);
    /// Alternating on/off from `start` seconds; the first on period has a
    /// uniformly random remaining length.
    void enable_transient_churn(NodeId n, TransientChurn params, double start);

    /// Total time the node has spent up so far.
    double uptime_seconds(NodeId n) const;

private:
    struct Leg {
        Vec2 from, to;
        SimTime t0 = 0, t1 = 0;
    };

    struct NodeSlot {
        Vec2 pos;
        bool alive = true;
        bool in_transit = false;
        std::uint32_t epoch = 0;
        Leg leg;
        SimTime busy_until = 0;
        SimTime up_since = 0;
        SimTime up_total = 0;
        Agent* agent = nullptr;
        NodeCounters counters;
        std::mt19937_64 mobility_rng;
        std::mt19937_64 churn_rng;
    };

    struct Event {
        SimTime t;
        std::uint64_t seq;
        std::uint32_t node;  // kNoNode.value for kernel events
        std::uint32_t epoch;
        std::function<void()> fn;
    };

    struct Tx {
        SimTime start, end;
        NodeId src;
        Vec2 pos;
    };

    struct TxWindow {
        SimTime start, end;
        std::size_t frames;
        std::size_t bytes;
        Vec2 pos;
    };

    void push(SimTime at, std::uint32_t node, std::uint32_t epoch, std::function<void()> fn);
    TxWindow start_frame(NodeId src, const Payload& msg, Traffic cls, bool retx, bool fwd);
    double reception_success(const TxWindow& w, NodeId src, NodeId rx) const;
    void prune_registry();
    void unicast_attempt(NodeId src, NodeId dst, PayloadPtr msg, Traffic cls, bool fwd, int attempt,
                         std::shared_ptr<UnicastDone> done, std::uint32_t src_epoch);

    void mobility_pause(NodeId n, MobilityParams p, std::shared_ptr<WaypointSampler> sampler,
                        std::shared_ptr<DeparturePredicate> may_depart);
    void transient_flip(NodeId n, TransientChurn p, bool currently_on);

    SimConfig cfg_;
    std::vector<NodeSlot> nodes_;
    std::vector<Event> heap_;
    std::uint64_t seq_ = 0;
    std::uint64_t events_ = 0;
    SimTime now_ = 0;
    std::vector<Tx> registry_;
    std::mt19937_64 radio_rng_;
    std::uint64_t kernel_tx_bytes_ = 0;
    TxTap tx_tap_;
    double last_hop_meters_ = 0;
};

}  // namespace thyme::sim
