#include "thyme/route_flood.hpp"

#include <algorithm>

#include "thyme/rng.hpp"

namespace thyme::route {

FloodRouter::FloodRouter(sim::Simulator& sim, NodeId self, std::size_t memory, double jitter)
    : sim_(sim), self_(self), memory_(memory), jitter_(jitter) {}

bool FloodRouter::remember(std::uint64_t id) {
    if (auto it = seen_.find(id); it != seen_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);
        return false;
    }
    lru_.push_front(id);
    seen_[id] = lru_.begin();
    if (lru_.size() > memory_) {
        seen_.erase(lru_.back());
        lru_.pop_back();
    }
    return true;
}

void FloodRouter::reset() {
    lru_.clear();
    seen_.clear();
}

void FloodRouter::flood(PayloadPtr inner, Traffic cls) {
    auto pkt = std::make_shared<FloodPacket>();
    pkt->origin = self_;
    pkt->seq = next_seq_++;
    pkt->cls = cls;
    pkt->inner = std::move(inner);
    remember((std::uint64_t{self_.value} << 32) | pkt->seq);
    sim_.broadcast(self_, pkt, cls);
    if (deliver_) deliver_(self_, pkt->inner);
}

bool FloodRouter::handle(NodeId, const PayloadPtr& frame) {
    const auto* pkt = dynamic_cast<const FloodPacket*>(frame.get());
    if (!pkt) return false;
    if (!remember((std::uint64_t{pkt->origin.value} << 32) | pkt->seq)) return true;
    if (deliver_) deliver_(pkt->origin, pkt->inner);

    auto copy = std::make_shared<FloodPacket>(*pkt);
    copy->hops = static_cast<std::uint8_t>(std::min(255, pkt->hops + 1));
    const double delay = jitter_ * hash_unit(self_.value, pkt->origin.value, pkt->seq);
    sim_.schedule(sim::from_seconds(delay), self_, [this, copy] {
        ++rebroadcasts_;
        sim_.broadcast(self_, copy, copy->cls, true);
    });
    return true;
}

// ---------------------------------------------------------------------------

DsdvRouter::DsdvRouter(sim::Simulator& sim, NodeId self, DsdvParams params)
    : sim_(sim), self_(self), params_(params) {}

void DsdvRouter::start() {
    const double phase = params_.update_interval * hash_unit(self_.value, own_seq_, 0xd5d7);
    sim_.schedule(sim::from_seconds(phase), self_, [this] { dump(); });
}

void DsdvRouter::reset() {
    table_.clear();
    own_seq_ += 2;
}

void DsdvRouter::dump() {
    own_seq_ += 2;
    housekeeping();
    auto upd = std::make_shared<DsdvUpdate>();
    upd->origin = self_;
    upd->entries.push_back({self_, own_seq_, 0});
    for (const auto& [dst, r] : table_) upd->entries.push_back({dst, r.seq, r.metric});
    sim_.broadcast(self_, upd, Traffic::Control);
    sim_.schedule(sim::from_seconds(params_.update_interval), self_, [this] { dump(); });
}

void DsdvRouter::housekeeping() {
    const SimTime now = sim_.now();
    const SimTime hold = sim::from_seconds(params_.holdtime);
    for (auto it = table_.begin(); it != table_.end();) {
        auto& r = it->second;
        if (r.metric != kInfinity && r.pending && now - r.updated > sim::from_seconds(1.5 * params_.update_interval)) {
            r.seq = r.pending->seq;
            r.metric = r.pending->metric;
            r.next = r.pending_next;
            r.updated = now;
            r.pending.reset();
        }
        if (r.metric != kInfinity && now - r.updated > hold) {
            r.metric = kInfinity;
            r.seq |= 1u;
            r.updated = now;
        }
        if (r.metric == kInfinity && now - r.updated > hold)
            it = table_.erase(it);
        else
            ++it;
    }
}

void DsdvRouter::invalidate_via(NodeId next) {
    for (auto& [dst, r] : table_) {
        if (r.next == next && r.metric != kInfinity) {
            r.metric = kInfinity;
            r.seq |= 1u;
            r.updated = sim_.now();
            r.pending.reset();
        }
    }
}

void DsdvRouter::on_update(NodeId from, const DsdvUpdate& upd) {
    const SimTime now = sim_.now();
    for (const auto& adv : upd.entries) {
        if (adv.dst == self_) continue;
        const std::uint8_t m = adv.metric == kInfinity ? kInfinity : static_cast<std::uint8_t>(std::min(254, adv.metric + 1));
        auto it = table_.find(adv.dst);
        if (it == table_.end()) {
            if (m == kInfinity) continue;
            table_[adv.dst] = Route{from, adv.seq, m, now, std::nullopt, NodeId{}};
            continue;
        }
        auto& r = it->second;
        const bool valid = r.metric != kInfinity;
        if (adv.seq > r.seq) {
            if (!valid || r.next == from || m <= r.metric) {
                r = Route{from, adv.seq, m, now, std::nullopt, NodeId{}};
            } else if (m != kInfinity && (!r.pending || adv.seq > r.pending->seq ||
                                          (adv.seq == r.pending->seq && m < r.pending->metric))) {
                r.pending = DsdvUpdate::Adv{adv.dst, adv.seq, m};
                r.pending_next = from;
            }
        } else if (adv.seq == r.seq) {
            if (m < r.metric) {
                r.next = from;
                r.metric = m;
                r.updated = now;
            } else if (r.next == from && valid) {
                r.updated = now;
            }
        } else if (r.next == from && valid && m != kInfinity) {
            // The current next hop still advertises the route, only with older news.
            r.updated = now;
        } else if (valid && m < r.metric && adv.seq + 2 >= r.seq) {
            // A shorter path one generation behind: otherwise a long path whose
            // dump phases line up can keep winning on freshness forever.
            r = Route{from, adv.seq, m, now, std::nullopt, NodeId{}};
        }
    }
}

std::optional<NodeId> DsdvRouter::next_hop(NodeId dst) const {
    auto it = table_.find(dst);
    if (it == table_.end() || it->second.metric == kInfinity) return std::nullopt;
    return it->second.next;
}

int DsdvRouter::metric(NodeId dst) const {
    if (dst == self_) return 0;
    auto it = table_.find(dst);
    return it == table_.end() ? kInfinity : it->second.metric;
}

bool DsdvRouter::send(NodeId dst, PayloadPtr inner, Traffic cls) {
    auto pkt = std::make_shared<DvPacket>();
    pkt->src = self_;
    pkt->dst = dst;
    pkt->ttl = static_cast<std::uint8_t>(params_.ttl);
    pkt->cls = cls;
    pkt->inner = std::move(inner);
    if (dst == self_) {
        if (deliver_) deliver_(*pkt);
        return true;
    }
    if (!next_hop(dst)) return false;
    forward(std::move(pkt), true);
    return true;
}

void DsdvRouter::forward(std::shared_ptr<DvPacket> pkt, bool originated) {
    const auto nh = next_hop(pkt->dst);
    if (!nh || pkt->ttl == 0) {
        ++drops_;
        return;
    }
    const NodeId next = *nh;
    sim_.unicast(self_, next, pkt, pkt->cls, !originated, [this, next](bool ok) {
        if (!ok) {
            invalidate_via(next);
            ++drops_;
        }
    });
}

bool DsdvRouter::handle(NodeId from, const PayloadPtr& frame) {
    if (const auto* upd = dynamic_cast<const DsdvUpdate*>(frame.get())) {
        on_update(from, *upd);
        return true;
    }
    const auto* pkt = dynamic_cast<const DvPacket*>(frame.get());
    if (!pkt) return false;
    auto copy = std::make_shared<DvPacket>(*pkt);
    copy->hops += 1;
    copy->meters += sim_.last_hop_meters();
    if (pkt->dst == self_) {
        if (deliver_) deliver_(*copy);
        return true;
    }
    copy->ttl = static_cast<std::uint8_t>(pkt->ttl - 1);
    forward(std::move(copy), false);
    return true;
}

}  // namespace thyme::route
