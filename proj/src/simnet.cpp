#include "thyme/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "thyme/rng.hpp"

namespace thyme::sim {

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

void SimConfig::validate() const {
    if (!(radio_range > 0)) throw std::invalid_argument("radio_range must be positive");
    if (!(p_loss >= 0 && p_loss < 1)) throw std::invalid_argument("p_loss must be in [0, 1)");
    if (mac_retries < 0) throw std::invalid_argument("mac_retries must be non-negative");
    if (!(area_width > 0 && area_height > 0)) throw std::invalid_argument("area must be non-degenerate");
    if (!(bandwidth_bps > 0)) throw std::invalid_argument("bandwidth must be positive");
    if (!(congestion_cap >= 0 && congestion_cap < 1)) throw std::invalid_argument("congestion_cap must be in [0, 1)");
    if (congestion_factor < 0) throw std::invalid_argument("congestion_factor must be non-negative");
    if (mtu == 0) throw std::invalid_argument("mtu must be positive");
}

NodeCounters& NodeCounters::operator+=(const NodeCounters& o) {
    phy_tx_bytes += o.phy_tx_bytes;
    data_bytes += o.data_bytes;
    ctrl_bytes += o.ctrl_bytes;
    retx_bytes += o.retx_bytes;
    fwd_bytes += o.fwd_bytes;
    mac_retx += o.mac_retx;
    mac_failures += o.mac_failures;
    frames += o.frames;
    return *this;
}

Simulator::Simulator(SimConfig cfg, std::vector<Vec2> positions)
    : cfg_(cfg), radio_rng_(make_rng(cfg.seed, kStreamRadio)) {
    cfg_.validate();
    nodes_.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        auto& n = nodes_[i];
        n.pos = positions[i];
        n.mobility_rng = make_rng(cfg.seed, kStreamMobility, i);
        n.churn_rng = make_rng(cfg.seed, kStreamChurn, i);
    }
}

void Simulator::attach(NodeId n, Agent* agent) { nodes_.at(n.value).agent = agent; }

void Simulator::push(SimTime at, std::uint32_t node, std::uint32_t epoch, std::function<void()> fn) {
    if (at < now_) at = now_;
    heap_.push_back(Event{at, seq_++, node, epoch, std::move(fn)});
    std::push_heap(heap_.begin(), heap_.end(), [](const Event& a, const Event& b) {
        return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    });
}

void Simulator::schedule(SimTime delay, NodeId node, std::function<void()> fn) {
    const auto& slot = nodes_.at(node.value);
    if (!slot.alive) return;
    push(now_ + std::max<SimTime>(delay, 0), node.value, slot.epoch, std::move(fn));
}

void Simulator::schedule_kernel_at(SimTime at, std::function<void()> fn) {
    push(at, kNoNode.value, 0, std::move(fn));
}

void Simulator::run_until(SimTime end) {
    const auto later = [](const Event& a, const Event& b) { return a.t != b.t ? a.t > b.t : a.seq > b.seq; };
    while (!heap_.empty() && heap_.front().t <= end) {
        std::pop_heap(heap_.begin(), heap_.end(), later);
        Event ev = std::move(heap_.back());
        heap_.pop_back();
        now_ = ev.t;
        if (ev.node != kNoNode.value) {
            const auto& slot = nodes_[ev.node];
            if (!slot.alive || slot.epoch != ev.epoch) continue;
        }
        ++events_;
        ev.fn();
    }
    if (now_ < end) now_ = end;
}

// ---------------------------------------------------------------------------
// Radio

Simulator::TxWindow Simulator::start_frame(NodeId src, const Payload& msg, Traffic cls, bool retx, bool fwd) {
    auto& slot = nodes_[src.value];
    const std::size_t payload_bytes = msg.wire_size();
    const std::size_t frames = std::max<std::size_t>(1, (payload_bytes + cfg_.mtu - 1) / cfg_.mtu);
    const std::size_t bytes = payload_bytes + frames * cfg_.frame_overhead;
    const double airtime = static_cast<double>(bytes) * 8.0 / cfg_.bandwidth_bps +
                           static_cast<double>(frames) * cfg_.phy_frame_time;

    std::uniform_real_distribution<double> jitter(0.0, cfg_.mac_jitter);
    const SimTime start = std::max(now_, slot.busy_until) + from_seconds(jitter(radio_rng_));
    const SimTime end = start + std::max<SimTime>(1, from_seconds(airtime));
    slot.busy_until = end;

    auto& c = slot.counters;
    c.phy_tx_bytes += bytes;
    c.frames += frames;
    if (retx)
        c.retx_bytes += bytes;
    else if (cls == Traffic::Control)
        c.ctrl_bytes += bytes;
    else
        c.data_bytes += bytes;
    if (fwd) c.fwd_bytes += bytes;
    kernel_tx_bytes_ += bytes;
    if (tx_tap_) tx_tap_(src, msg, bytes, retx);

    const Vec2 pos = position(src);
    registry_.push_back(Tx{start, end, src, pos});
    if (registry_.size() > 512) prune_registry();
    return TxWindow{start, end, frames, bytes, pos};
}

void Simulator::prune_registry() {
    const SimTime horizon = now_ - kSecond;
    registry_.erase(std::remove_if(registry_.begin(), registry_.end(), [&](const Tx& t) { return t.end < horizon; }),
                    registry_.end());
}

double Simulator::reception_success(const TxWindow& w, NodeId src, NodeId rx) const {
    double p = cfg_.p_loss;
    if (cfg_.congestion_factor > 0) {
        const Vec2 rpos = position(rx);
        int overlapping = 0;
        for (const auto& t : registry_) {
            if (t.src == src || t.end <= w.start || t.start >= w.end) continue;
            if (t.src == rx || distance(t.pos, rpos) <= cfg_.radio_range) ++overlapping;
        }
        p = std::min(cfg_.congestion_cap, p + cfg_.congestion_factor * overlapping);
        p = std::max(p, cfg_.p_loss);
    }
    return std::pow(1.0 - p, static_cast<double>(w.frames));
}

void Simulator::broadcast(NodeId src, PayloadPtr msg, Traffic cls, bool forwarded) {
    if (!alive(src)) return;
    const TxWindow w = start_frame(src, *msg, cls, false, forwarded);
    const SimTime deliver_at = w.end + from_seconds(cfg_.hop_latency);
    push(deliver_at, kNoNode.value, 0, [this, src, w, msg = std::move(msg)] {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const NodeId rx(static_cast<std::uint32_t>(i));
            if (rx == src || !nodes_[i].alive) continue;
            const double d = distance(w.pos, position(rx));
            if (d > cfg_.radio_range) continue;
            if (u(radio_rng_) >= reception_success(w, src, rx)) continue;
            if (nodes_[i].agent) {
                last_hop_meters_ = d;
                nodes_[i].agent->on_frame(src, msg);
            }
        }
    });
}

void Simulator::unicast(NodeId src, NodeId dst, PayloadPtr msg, Traffic cls, bool forwarded, UnicastDone done) {
    if (!alive(src)) return;
    unicast_attempt(src, dst, std::move(msg), cls, forwarded, 0,
                    done ? std::make_shared<UnicastDone>(std::move(done)) : nullptr, nodes_[src.value].epoch);
}

void Simulator::unicast_attempt(NodeId src, NodeId dst, PayloadPtr msg, Traffic cls, bool fwd, int attempt,
                                std::shared_ptr<UnicastDone> done, std::uint32_t src_epoch) {
    const TxWindow w = start_frame(src, *msg, cls, attempt > 0, fwd);
    const SimTime result_at = w.end + from_seconds(cfg_.hop_latency);
    push(result_at, kNoNode.value, 0, [this, src, dst, w, msg = std::move(msg), cls, fwd, attempt, done, src_epoch] {
        auto& s = nodes_[src.value];
        const bool src_ok = s.alive && s.epoch == src_epoch;
        bool ok = false;
        double d = 0;
        if (nodes_[dst.value].alive) {
            d = distance(w.pos, position(dst));
            if (d <= cfg_.radio_range) {
                std::uniform_real_distribution<double> u(0.0, 1.0);
                ok = u(radio_rng_) < reception_success(w, src, dst);
            }
        }
        if (ok) {
            s.counters.mac_retx += static_cast<std::uint64_t>(attempt);
            if (auto* a = nodes_[dst.value].agent) {
                last_hop_meters_ = d;
                a->on_frame(src, msg);
            }
            if (done && src_ok) (*done)(true);
            return;
        }
        if (!src_ok) return;
        if (attempt < cfg_.mac_retries) {
            unicast_attempt(src, dst, msg, cls, fwd, attempt + 1, done, src_epoch);
            return;
        }
        s.counters.mac_retx += static_cast<std::uint64_t>(attempt);
        ++s.counters.mac_failures;
        if (done) (*done)(false);
    });
}

// ---------------------------------------------------------------------------
// State

Vec2 Simulator::position(NodeId n) const {
    const auto& s = nodes_[n.value];
    if (!s.in_transit) return s.pos;
    const auto& l = s.leg;
    if (now_ >= l.t1) return l.to;
    const double f = static_cast<double>(now_ - l.t0) / static_cast<double>(l.t1 - l.t0);
    return Vec2{l.from.x + (l.to.x - l.from.x) * f, l.from.y + (l.to.y - l.from.y) * f};
}

bool Simulator::in_range(NodeId a, NodeId b) const { return distance(position(a), position(b)) <= cfg_.radio_range; }

std::vector<NodeId> Simulator::neighbors(NodeId n) const {
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const NodeId m(static_cast<std::uint32_t>(i));
        if (m != n && nodes_[i].alive && in_range(n, m)) out.push_back(m);
    }
    return out;
}

NodeCounters Simulator::total_counters() const {
    NodeCounters t;
    for (const auto& n : nodes_) t += n.counters;
    return t;
}

void Simulator::set_alive(NodeId n, bool up) {
    auto& s = nodes_.at(n.value);
    if (s.alive == up) return;
    s.alive = up;
    ++s.epoch;
    if (up) {
        s.up_since = now_;
        s.busy_until = now_;
        if (s.agent) s.agent->on_up();
    } else {
        s.up_total += now_ - s.up_since;
        if (s.agent) s.agent->on_down();
    }
}

double Simulator::uptime_seconds(NodeId n) const {
    const auto& s = nodes_.at(n.value);
    return to_seconds(s.up_total + (s.alive ? now_ - s.up_since : 0));
}

// ---------------------------------------------------------------------------
// Mobility and churn

void Simulator::enable_mobility(NodeId n, MobilityParams params, WaypointSampler sampler,
                                DeparturePredicate may_depart) {
    auto sp = std::make_shared<WaypointSampler>(std::move(sampler));
    auto dp = std::make_shared<DeparturePredicate>(std::move(may_depart));
    schedule_kernel_at(now_ + from_seconds(params.pause), [this, n, params, sp, dp] { mobility_pause(n, params, sp, dp); });
}

void Simulator::mobility_pause(NodeId n, MobilityParams p, std::shared_ptr<WaypointSampler> sampler,
                               std::shared_ptr<DeparturePredicate> may_depart) {
    auto& s = nodes_[n.value];
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool toss = u(s.mobility_rng) < p.p_move;
    if (!toss || (*may_depart && !(*may_depart)(n))) {
        schedule_kernel_at(now_ + from_seconds(p.pause), [this, n, p, sampler, may_depart] {
            mobility_pause(n, p, sampler, may_depart);
        });
        return;
    }
    Vec2 to;
    if (*sampler) {
        to = (*sampler)(n, s.mobility_rng);
    } else {
        std::uniform_real_distribution<double> ux(0.0, cfg_.area_width), uy(0.0, cfg_.area_height);
        to = Vec2{ux(s.mobility_rng), uy(s.mobility_rng)};
    }
    to.x = std::clamp(to.x, 0.0, std::nextafter(cfg_.area_width, 0.0));
    to.y = std::clamp(to.y, 0.0, std::nextafter(cfg_.area_height, 0.0));
    const double speed = p.v_max * (1.0 - u(s.mobility_rng));  // (0, v_max]
    const double len = distance(s.pos, to);
    s.leg = Leg{s.pos, to, now_, now_ + std::max<SimTime>(1, from_seconds(len / speed))};
    s.in_transit = true;
    schedule_kernel_at(s.leg.t1, [this, n, p, sampler, may_depart] {
        auto& slot = nodes_[n.value];
        slot.pos = slot.leg.to;
        slot.in_transit = false;
        schedule_kernel_at(now_ + from_seconds(p.pause), [this, n, p, sampler, may_depart] {
            mobility_pause(n, p, sampler, may_depart);
        });
    });
}

void Simulator::schedule_crash(NodeId n, double from, double to) {
    std::uniform_real_distribution<double> u(from, to);
    const SimTime at = from_seconds(u(nodes_.at(n.value).churn_rng));
    schedule_kernel_at(at, [this, n] { set_alive(n, false); });
}

void Simulator::enable_transient_churn(NodeId n, TransientChurn p, double start) {
    std::uniform_real_distribution<double> u(0.0, p.on_period);
    const double first = p.on_period - u(nodes_.at(n.value).churn_rng);  // (0, on_period]
    schedule_kernel_at(from_seconds(start + first), [this, n, p] { transient_flip(n, p, true); });
}

void Simulator::transient_flip(NodeId n, TransientChurn p, bool currently_on) {
    auto& s = nodes_[n.value];
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool next_on = (u(s.churn_rng) < p.p_switch) ? !currently_on : currently_on;
    set_alive(n, next_on);
    const double stay = next_on ? p.on_period : p.off_period;
    schedule_kernel_at(now_ + from_seconds(stay), [this, n, p, next_on] { transient_flip(n, p, next_on); });
}

}  // namespace thyme::sim
