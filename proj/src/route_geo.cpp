#include "thyme/route_geo.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "thyme/rng.hpp"

namespace thyme::geo {

namespace {

// Counterclockwise from east.
constexpr int kDc[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDr[8] = {0, 1, 1, 1, 0, -1, -1, -1};

int direction_index(int dc, int dr) {
    const double a = std::atan2(static_cast<double>(dr), static_cast<double>(dc));
    int k = static_cast<int>(std::lround(a / (M_PI / 4)));
    return ((k % 8) + 8) % 8;
}

CellId step_cell(CellId c, int k) { return CellId{c.col + kDc[k], c.row + kDr[k]}; }

}  // namespace

Grid Grid::for_area(double width, double height, double cell_size) {
    if (!(width > 0 && height > 0 && cell_size > 0)) throw std::invalid_argument("degenerate grid");
    Grid g;
    g.cell_size = cell_size;
    g.cols = std::max(1, static_cast<int>(std::ceil(width / cell_size - 1e-9)));
    g.rows = std::max(1, static_cast<int>(std::ceil(height / cell_size - 1e-9)));
    return g;
}

CellId Grid::cell_of(Vec2 p) const {
    const int c = static_cast<int>(std::floor(p.x / cell_size));
    const int r = static_cast<int>(std::floor(p.y / cell_size));
    return CellId{std::clamp(c, 0, cols - 1), std::clamp(r, 0, rows - 1)};
}

Vec2 Grid::center(CellId c) const { return Vec2{(c.col + 0.5) * cell_size, (c.row + 0.5) * cell_size}; }

CellId hash_to_cell(std::string_view key, const Grid& grid) {
    const std::uint64_t n = static_cast<std::uint64_t>(grid.cols) * static_cast<std::uint64_t>(grid.rows);
    const std::uint64_t idx = stable_hash(key.data(), key.size()) % n;
    return CellId{static_cast<int>(idx % static_cast<std::uint64_t>(grid.cols)),
                  static_cast<int>(idx / static_cast<std::uint64_t>(grid.cols))};
}

Step route_step(CellId here, CellId& target, PerimeterState& st, const CellPredicate& populated) {
    for (int round = 0; round < 3; ++round) {
        if (here == target) {
            st.active = false;
            return {StepKind::Deliver, here};
        }
        if (st.active && dist2(here, target) < dist2(st.entry, target)) st.active = false;

        if (!st.active) {
            std::optional<CellId> best;
            for (int k = 0; k < 8; ++k) {
                const CellId n = step_cell(here, k);
                if (populated(n) && (!best || closer(n, *best, target))) best = n;
            }
            if (best && dist2(*best, target) < dist2(here, target)) return {StepKind::Forward, *best};

            st.active = true;
            st.entry = here;
            st.best = here;
            const int kt = direction_index(target.col - here.col, target.row - here.row);
            for (int i = 1; i <= 8; ++i) {
                const CellId n = step_cell(here, (kt + i) % 8);
                if (populated(n)) {
                    st.first = n;
                    st.prev = here;
                    return {StepKind::Forward, n};
                }
            }
            // No populated neighbor cell: the traversal is this cell alone.
            st.active = false;
            return {StepKind::Deliver, here};
        }

        if (closer(here, st.best, target)) st.best = here;
        const int kb = direction_index(st.prev.col - here.col, st.prev.row - here.row);
        std::optional<CellId> next;
        for (int i = 1; i <= 8; ++i) {
            const CellId n = step_cell(here, (kb + i) % 8);
            if (populated(n)) {
                next = n;
                break;
            }
        }
        if (!next) return {StepKind::Drop, here};
        if (here == st.entry && *next == st.first) {
            if (st.proxy_phase) return {StepKind::Drop, here};
            if (st.best == here) {
                st.active = false;
                return {StepKind::Deliver, here};
            }
            target = st.best;
            st = PerimeterState{};
            st.proxy_phase = true;
            continue;
        }
        st.prev = here;
        return {StepKind::Forward, *next};
    }
    return {StepKind::Drop, here};
}

// ---------------------------------------------------------------------------

GeoRouter::GeoRouter(sim::Simulator& sim, NodeId self, Grid grid, GeoParams params)
    : sim_(sim), self_(self), grid_(grid), params_(params) {
    max_hops_ = params_.max_hops > 0 ? params_.max_hops : 8 * (grid_.cols + grid_.rows);
    cell_ = grid_.cell_of(sim_.position(self_));
}

void GeoRouter::start() {
    cell_ = grid_.cell_of(sim_.position(self_));
    settled_ = !sim_.moving(self_);
    last_motion_ = sim_.now();
    const double phase = params_.beacon_interval * hash_unit(self_.value, boot_, 0xbeac);
    sim_.schedule(sim::from_seconds(phase), self_, [this] { tick(); });
}

void GeoRouter::reset() {
    nbrs_.clear();
    member_ = false;
    ++boot_;
}

void GeoRouter::set_member(bool m) {
    if (member_ == m) return;
    member_ = m;
    send_beacon();
}

bool GeoRouter::fresh(const Neighbor& n) const {
    return sim_.now() - n.last_seen <= sim::from_seconds(params_.beacon_timeout);
}

void GeoRouter::send_beacon() {
    auto b = std::make_shared<Beacon>();
    b->node = self_;
    b->cell = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
    b->flags = static_cast<std::uint8_t>((settled_ ? Beacon::kForwarding : 0) | (member_ && settled_ ? Beacon::kMember : 0));
    sim_.broadcast(self_, b, Traffic::Control);
}

void GeoRouter::tick() {
    const SimTime now = sim_.now();
    if (sim_.moving(self_)) last_motion_ = now;
    const CellId here = grid_.cell_of(sim_.position(self_));
    if (settled_ && here != cell_) {
        settled_ = false;
        member_ = false;
        if (unsettle_) unsettle_();
    } else if (!settled_ && !sim_.moving(self_) &&
               now - last_motion_ >= sim::from_seconds(params_.stationary_after)) {
        const CellId old = cell_;
        cell_ = here;
        settled_ = true;
        if (settle_) settle_(old, here);
    }
    for (auto it = nbrs_.begin(); it != nbrs_.end();) {
        if (!fresh(it->second))
            it = nbrs_.erase(it);
        else
            ++it;
    }
    send_beacon();
    sim_.schedule(sim::from_seconds(params_.beacon_interval), self_, [this] { tick(); });
}

bool GeoRouter::cell_usable(CellId c) const {
    if (!grid_.contains(c)) return false;
    for (const auto& [id, n] : nbrs_)
        if (n.cell == c && (n.flags & Beacon::kForwarding) && fresh(n)) return true;
    return false;
}

NodeId GeoRouter::pick_node(CellId c, std::uint32_t salt, NodeId exclude) const {
    NodeId best = kNoNode;
    std::uint64_t best_h = 0;
    for (const auto& [id, n] : nbrs_) {
        if (id == exclude || n.cell != c || !(n.flags & Beacon::kForwarding) || !fresh(n)) continue;
        const std::uint64_t h = splitmix64(salt ^ (std::uint64_t{id.value} << 32));
        if (best == kNoNode || h < best_h) {
            best = id;
            best_h = h;
        }
    }
    return best;
}

bool GeoRouter::knows_in_cell(NodeId n, CellId c) const {
    auto it = nbrs_.find(n);
    return it != nbrs_.end() && it->second.cell == c && fresh(it->second);
}

std::vector<NodeId> GeoRouter::cell_members() const {
    std::vector<NodeId> out;
    if (member_ && settled_) out.push_back(self_);
    for (const auto& [id, n] : nbrs_)
        if (n.cell == cell_ && (n.flags & Beacon::kMember) && fresh(n)) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
}

bool GeoRouter::is_designated() const {
    if (!member_ || !settled_) return false;
    for (const auto& [id, n] : nbrs_)
        if (id < self_ && n.cell == cell_ && (n.flags & Beacon::kMember) && fresh(n)) return false;
    return true;
}

std::uint32_t GeoRouter::send_to_cells(const std::vector<CellId>& cells, PayloadPtr inner, Traffic cls,
                                       DeliveryMode mode) {
    auto pkt = std::make_shared<GeoPacket>();
    pkt->origin = self_;
    pkt->origin_cell = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
    pkt->msg_id = next_msg_++;
    pkt->mode = mode;
    pkt->cls = cls;
    pkt->inner = std::move(inner);
    std::vector<CellId> uniq = cells;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (const auto& c : uniq) pkt->dests.push_back(GeoDest{c, c, kNoNode, {}});
    const auto id = pkt->msg_id;
    process(std::move(pkt), true, params_.reroutes);
    return id;
}

std::uint32_t GeoRouter::send_to_node(NodeId node, CellId cell, PayloadPtr inner, Traffic cls) {
    auto pkt = std::make_shared<GeoPacket>();
    pkt->origin = self_;
    pkt->origin_cell = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
    pkt->msg_id = next_msg_++;
    pkt->mode = DeliveryMode::Node;
    pkt->cls = cls;
    pkt->inner = std::move(inner);
    pkt->dests.push_back(GeoDest{cell, cell, node, {}});
    const auto id = pkt->msg_id;
    process(std::move(pkt), true, params_.reroutes);
    return id;
}

void GeoRouter::process(std::shared_ptr<GeoPacket> pkt, bool originated, int reroutes_left) {
    const CellId here = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
    const auto usable = [this](CellId c) { return cell_usable(c); };

    std::vector<CellId> cells_here;
    std::map<NodeId, std::pair<std::vector<GeoDest>, std::vector<GeoDest>>> groups;  // stepped, original
    for (const auto& orig : pkt->dests) {
        if (pkt->mode == DeliveryMode::Node && orig.node == self_) {
            node_arrival(*pkt, orig);
            continue;
        }
        if (!originated && !settled_) {
            ++stats_.drops_moving;
            continue;
        }
        GeoDest d = orig;
        const Step s = route_step(here, d.target, d.perim, usable);
        if (s.kind == StepKind::Deliver) {
            if (pkt->mode == DeliveryMode::Node)
                node_arrival(*pkt, d);
            else
                cells_here.push_back(d.cell);
            continue;
        }
        if (s.kind == StepKind::Drop) {
            ++stats_.drops_no_neighbor;
            continue;
        }
        NodeId next = kNoNode;
        if (pkt->mode == DeliveryMode::Node && s.next == d.cell && knows_in_cell(d.node, d.cell)) next = d.node;
        if (next == kNoNode) next = pick_node(s.next, pkt->msg_id ^ (std::uint32_t{pkt->hops} << 24));
        if (next == kNoNode) {
            ++stats_.drops_no_neighbor;
            continue;
        }
        auto& g = groups[next];
        g.first.push_back(d);
        g.second.push_back(orig);
    }

    if (!cells_here.empty()) deliver_here(*pkt, cells_here, pkt->mode == DeliveryMode::Cell);

    for (auto& [next, g] : groups) {
        if (pkt->hops >= max_hops_) {
            stats_.drops_hop_limit += g.first.size();
            continue;
        }
        auto out = std::make_shared<GeoPacket>(*pkt);
        out->dests = std::move(g.first);
        auto retry = std::make_shared<GeoPacket>(*pkt);
        retry->dests = std::move(g.second);
        if (!originated) {
            ++stats_.forwarded;
            if (!settled_) ++stats_.forwarded_while_moving;
        }
        const NodeId nh = next;
        sim_.unicast(self_, nh, out, out->cls, !originated,
                     [this, nh, retry, originated, reroutes_left](bool ok) {
                         if (ok) return;
                         nbrs_.erase(nh);
                         if (reroutes_left > 0)
                             process(retry, originated, reroutes_left - 1);
                         else
                             stats_.drops_mac += retry->dests.size();
                     });
    }
}

void GeoRouter::deliver_here(const GeoPacket& pkt, const std::vector<CellId>& cells, bool fanout) {
    const CellId here = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
    if (fanout) {
        auto cc = std::make_shared<CellCast>();
        cc->origin = pkt.origin;
        cc->origin_cell = pkt.origin_cell;
        cc->at_cell = here;
        cc->msg_id = pkt.msg_id;
        cc->hops = pkt.hops;
        cc->cells = cells;
        cc->inner = pkt.inner;
        cc->meters = pkt.meters;
        sim_.broadcast(self_, cc, pkt.cls, pkt.origin != self_);
    }
    if (deliver_)
        deliver_(Delivery{pkt.origin, pkt.origin_cell, pkt.msg_id, here, cells, pkt.hops, pkt.meters, true},
                 pkt.inner);
}

void GeoRouter::node_arrival(const GeoPacket& pkt, const GeoDest& d) {
    if (d.node == self_) {
        if (pkt.is_nack) {
            if (const auto* n = dynamic_cast<const Nack*>(pkt.inner.get()); n && nack_) nack_(*n);
            return;
        }
        if (deliver_) {
            const CellId here = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
            deliver_(Delivery{pkt.origin, pkt.origin_cell, pkt.msg_id, here, {d.cell}, pkt.hops, pkt.meters, true},
                     pkt.inner);
        }
        return;
    }
    if (d.target == d.cell && knows_in_cell(d.node, d.cell)) {
        auto out = std::make_shared<GeoPacket>(pkt);
        out->dests = {d};
        const bool originated = pkt.origin == self_ && pkt.hops == 0;
        if (!originated) ++stats_.forwarded;
        sim_.unicast(self_, d.node, out, out->cls, !originated, [this, out, d](bool ok) {
            if (!ok) {
                nbrs_.erase(d.node);
                send_nack(*out, d);
            }
        });
        return;
    }
    send_nack(pkt, d);
}

void GeoRouter::send_nack(const GeoPacket& pkt, const GeoDest& d) {
    if (pkt.is_nack) return;
    if (pkt.origin == self_) {
        if (nack_) {
            Nack n;
            n.msg_id = pkt.msg_id;
            n.target = d.node;
            n.cell = d.cell;
            n.original = pkt.inner;
            nack_(n);
        }
        return;
    }
    auto n = std::make_shared<Nack>();
    n->msg_id = pkt.msg_id;
    n->target = d.node;
    n->cell = d.cell;
    n->original = pkt.inner;
    auto out = std::make_shared<GeoPacket>();
    out->origin = self_;
    out->origin_cell = settled_ ? cell_ : grid_.cell_of(sim_.position(self_));
    out->msg_id = next_msg_++;
    out->mode = DeliveryMode::Node;
    out->cls = Traffic::Control;
    out->is_nack = true;
    out->inner = n;
    out->dests.push_back(GeoDest{pkt.origin_cell, pkt.origin_cell, pkt.origin, {}});
    ++stats_.nacks_sent;
    process(std::move(out), true, params_.reroutes);
}

bool GeoRouter::handle(NodeId from, const PayloadPtr& frame) {
    if (const auto* b = dynamic_cast<const Beacon*>(frame.get())) {
        nbrs_[b->node] = Neighbor{b->cell, b->flags, sim_.now()};
        return true;
    }
    if (const auto* p = dynamic_cast<const GeoPacket*>(frame.get())) {
        auto copy = std::make_shared<GeoPacket>(*p);
        copy->hops = static_cast<std::uint8_t>(std::min(255, p->hops + 1));
        copy->meters += sim_.last_hop_meters();
        process(std::move(copy), false, params_.reroutes);
        return true;
    }
    if (const auto* c = dynamic_cast<const CellCast*>(frame.get())) {
        (void)from;
        if (settled_ && cell_ == c->at_cell && deliver_)
            deliver_(Delivery{c->origin, c->origin_cell, c->msg_id, c->at_cell, c->cells, c->hops + 1,
                              c->meters + sim_.last_hop_meters(), false},
                     c->inner);
        return true;
    }
    return false;
}

}  // namespace thyme::geo
