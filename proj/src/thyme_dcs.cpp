#include "thyme/thyme_dcs.hpp"

#include <algorithm>

namespace thyme {

using geo::DeliveryMode;
using sim::PayloadPtr;
using sim::Traffic;

DcsNode::DcsNode(sim::Simulator& sim, NodeId self, ThymeParams params, EventLog& log, geo::Grid grid,
                 geo::GeoParams geo)
    : ThymeNode(sim, self, params, log), router_(sim, self, grid, geo) {
    router_.set_deliver([this](const geo::Delivery& d, const PayloadPtr& inner) { on_delivery(d, inner); });
    router_.set_nack([this](const geo::Nack& n) { on_nack(n); });
    router_.set_settle([this](CellId o, CellId n) { on_settle(o, n); });
    router_.set_unsettle([this] {
        joined_ = false;
        ++join_generation_;
    });
}

void DcsNode::boot() { router_.start(); }

void DcsNode::start_app() {
    if (app_started_ || !sim_.alive(self_)) return;
    app_started_ = true;
    home_cell_ = here();
    schedule_sweep();
    cell_join();
}

void DcsNode::on_down() {
    fail_pending_ops();
    router_.reset();
    cell_ops_.clear();
    fetches_.clear();
    downloads_.clear();
    nack_buffer_.clear();
    joined_ = false;
    ++join_generation_;
}

void DcsNode::on_up() {
    router_.start();
    if (!app_started_) return;
    schedule_sweep();
    rebooted_ = true;
    // A moving node settles later through the router callback.
    if (router_.settled()) on_settle(home_cell_, router_.cell());
}

CellId DcsNode::here() const {
    return router_.settled() ? router_.cell() : router_.grid().cell_of(sim_.position(self_));
}

std::vector<CellId> DcsNode::tag_cells(const std::set<std::string>& tags) const {
    std::vector<CellId> out;
    for (const auto& t : tags) out.push_back(geo::hash_to_cell(t, router_.grid()));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<ObjectKey> DcsNode::held_objects() const {
    std::vector<ObjectKey> out;
    for (const auto& [k, o] : objects_) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// Per-cell acknowledged operations

void DcsNode::start_cell_op(std::uint64_t op, std::set<CellId> cells,
                            std::function<void(const std::set<CellId>&)> send) {
    const auto id = next_op_ - 1;  // callers reserve the id before building messages
    cell_ops_[id] = CellOp{op, cells, send, 0};
    log_.attempt(op);
    // Local deliveries can ack (and retire the op) synchronously, so send from copies.
    send(cells);
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_, [this, id] { cell_op_timeout(id, 0); });
}

void DcsNode::cell_op_timeout(std::uint32_t id, int attempt) {
    auto it = cell_ops_.find(id);
    if (it == cell_ops_.end() || it->second.attempts != attempt) return;
    auto& c = it->second;
    if (c.attempts >= params_.op_retries) {
        end_op(c.op, false);
        cell_ops_.erase(it);
        return;
    }
    ++c.attempts;
    log_.attempt(c.op);
    const int next = c.attempts;
    auto send = c.send;
    send(std::set<CellId>(c.unacked));
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_, [this, id, next] { cell_op_timeout(id, next); });
}

void DcsNode::on_ack(const msg::Ack& a) {
    auto it = cell_ops_.find(a.op);
    if (it == cell_ops_.end()) return;
    for (const auto& c : a.cells) it->second.unacked.erase(c);
    if (it->second.unacked.empty()) {
        end_op(it->second.op, true);
        cell_ops_.erase(it);
    }
}

void DcsNode::send_ack(const geo::Delivery& d, std::uint32_t op) {
    auto a = std::make_shared<msg::Ack>();
    a->op = op;
    a->cells = d.cells;
    if (d.origin == self_) {
        on_ack(*a);
        return;
    }
    router_.send_to_node(d.origin, d.origin_cell, a, Traffic::Data);
}

// ---------------------------------------------------------------------------
// Operations

bool DcsNode::publish(const std::string& id_obj, const std::set<std::string>& tags, std::string summary,
                      std::string data) {
    const auto op = begin_op(OpType::Publish);
    const ObjectKey key{id_obj, self_};
    ObjectMetadata md{key, tags, std::move(summary), now_ts(), {}};
    const CellId cell = here();
    md.replicas.push_back({self_, cell});
    if (router_.settled())
        for (auto n : router_.cell_members())
            if (n != self_) md.replicas.push_back({n, cell});
    try {
        validate(md);
        if (objects_.count(key) || store_.has_live_publication(key)) throw std::invalid_argument("duplicate key");
    } catch (const std::exception&) {
        end_op(op, false);
        return false;
    }
    objects_[key] = HeldObject{md, data, Role::Own, cell};

    if (md.replicas.size() > 1) {
        auto put = std::make_shared<msg::ReplicaPut>();
        put->md = md;
        put->data = std::move(data);
        sim_.broadcast(self_, put, Traffic::Data);
    }

    const auto id = next_op_++;
    auto m = std::make_shared<msg::Publish>();
    m->op = id;
    m->md = md;
    const auto cells = tag_cells(tags);
    start_cell_op(op, {cells.begin(), cells.end()}, [this, m](const std::set<CellId>& to) {
        router_.send_to_cells({to.begin(), to.end()}, m, Traffic::Data);
    });
    return true;
}

bool DcsNode::unpublish(const std::string& id_obj) {
    const auto op = begin_op(OpType::Unpublish);
    const ObjectKey key{id_obj, self_};
    auto it = objects_.find(key);
    if (it == objects_.end() || it->second.role != Role::Own) {
        end_op(op, false);
        return false;
    }
    const auto md = it->second.md;
    objects_.erase(it);
    store_.unpublish(key);

    const auto id = next_op_++;
    auto m = std::make_shared<msg::Unpublish>();
    m->op = id;
    m->key = key;
    m->active_cell = md.replicas.empty() ? here() : md.replicas.front().cell;
    const auto cells = tag_cells(md.tags);
    const CellId active = m->active_cell;
    bool first = true;
    start_cell_op(op, {cells.begin(), cells.end()}, [this, m, active, first](const std::set<CellId>& to) mutable {
        std::vector<CellId> dest(to.begin(), to.end());
        if (first) dest.push_back(active);
        first = false;
        router_.send_to_cells(dest, m, Traffic::Data);
    });
    return true;
}

bool DcsNode::subscribe(std::uint32_t id_sub, const std::string& text, Timestamp ts_start, Timestamp ts_end) {
    const auto op = begin_op(OpType::Subscribe);
    OwnSubscription own;
    own.sub = Subscription{id_sub, text, ts_start, ts_end, self_, here()};
    try {
        validate(own.sub);
        if (own_subs_.count(id_sub)) throw std::invalid_argument("duplicate subscription id");
        own.dnf = query::to_dnf(query::parse(text), rng_, params_.max_clauses);
    } catch (const std::exception&) {
        end_op(op, false);
        return false;
    }
    const auto id = next_op_++;
    std::map<CellId, std::shared_ptr<msg::SubscribeClause>> by_cell;
    for (const auto& c : own.dnf.clauses) {
        auto& m = by_cell[geo::hash_to_cell(c.key, router_.grid())];
        if (!m) {
            m = std::make_shared<msg::SubscribeClause>();
            m->op = id;
            m->sub = own.sub;
        }
        m->clauses.push_back(c);
    }
    std::set<CellId> cells;
    for (const auto& [c, v] : by_cell) cells.insert(c);
    sub_cells_[id_sub] = {cells.begin(), cells.end()};
    own_subs_[id_sub] = std::move(own);
    if (cells.empty()) {
        end_op(op, true);
        return true;
    }
    start_cell_op(op, cells, [this, by_cell](const std::set<CellId>& to) {
        for (const auto& c : to) router_.send_to_cells({c}, by_cell.at(c), Traffic::Data);
    });
    return true;
}

bool DcsNode::unsubscribe(std::uint32_t id_sub) {
    const auto op = begin_op(OpType::Unsubscribe);
    auto it = own_subs_.find(id_sub);
    if (it == own_subs_.end() || !it->second.active) {
        end_op(op, false);
        return false;
    }
    it->second.active = false;
    const auto id = next_op_++;
    auto m = std::make_shared<msg::UnsubscribeClause>();
    m->op = id;
    m->owner = self_;
    m->id_sub = id_sub;
    const auto& cells = sub_cells_[id_sub];
    if (cells.empty()) {
        end_op(op, true);
        return true;
    }
    start_cell_op(op, {cells.begin(), cells.end()}, [this, m](const std::set<CellId>& to) {
        router_.send_to_cells({to.begin(), to.end()}, m, Traffic::Data);
    });
    return true;
}

// ---------------------------------------------------------------------------
// Broker side

void DcsNode::on_delivery(const geo::Delivery& d, const PayloadPtr& inner) {
    if (!app_started_) return;
    const auto* p = inner.get();

    // Node-addressed traffic.
    if (const auto* a = dynamic_cast<const msg::Ack*>(p)) return on_ack(*a);
    if (const auto* n = dynamic_cast<const msg::Notify*>(p)) return on_notify(*n);
    if (const auto* r = dynamic_cast<const msg::DownloadReply*>(p)) return on_download_reply(d, *r);
    if (const auto* r = dynamic_cast<const msg::DownloadRequest*>(p)) return serve_download(*r);

    // Cell-addressed traffic is for members only.
    if (!joined_) return;
    const bool designated = router_.is_designated();
    if (const auto* m = dynamic_cast<const msg::Publish*>(p)) return broker_publish(d, *m);
    if (const auto* m = dynamic_cast<const msg::SubscribeClause*>(p)) return broker_subscribe(d, *m);
    if (const auto* m = dynamic_cast<const msg::Unpublish*>(p)) {
        if (std::find(d.cells.begin(), d.cells.end(), m->active_cell) != d.cells.end()) {
            auto it = objects_.find(m->key);
            if (it != objects_.end() && it->second.role == Role::Active) objects_.erase(it);
        }
        if (store_.has_publication(m->key)) store_.unpublish(m->key);
        // The broker cannot tell whether the active cell is also a tag cell, so it always acks.
        if (designated) send_ack(d, m->op);
        return;
    }
    if (const auto* m = dynamic_cast<const msg::UnsubscribeClause*>(p)) {
        store_.unsubscribe(m->owner, m->id_sub);
        if (designated) send_ack(d, m->op);
        return;
    }
    if (const auto* m = dynamic_cast<const msg::FetchMore*>(p)) {
        auto* rec = store_.find_subscription(m->owner, m->id_sub);
        if (!rec) return;
        rec->past_cursor = std::min<std::size_t>(m->offset, rec->past_matches.size());
        if (!designated) return;
        Notification n;
        n.id_sub = m->id_sub;
        try {
            n = store_.fetch_more(m->owner, m->id_sub, params_.batch_n);
        } catch (const StoreError&) {
            n.has_more = false;
        }
        send_notify(rec->subscription, std::move(n), true, m->offset, m->broker_cell);
        return;
    }
    if (const auto* m = dynamic_cast<const msg::LocationUpdate*>(p)) {
        for (auto id : m->subs) {
            auto* rec = store_.find_subscription(m->owner, id);
            if (!rec) continue;
            rec->subscription.cell_owner = m->cell;
            const SubKey sk{m->owner, id};
            dormant_.erase(sk);
            auto b = nack_buffer_.find(sk);
            if (b == nack_buffer_.end()) continue;
            auto pending = std::move(b->second.pending);
            nack_buffer_.erase(b);
            if (!designated) continue;
            for (auto& n : pending) router_.send_to_node(m->owner, m->cell, n, Traffic::Data);
        }
        return;
    }
    if (const auto* m = dynamic_cast<const msg::ReplicaAnnounce*>(p)) {
        for (const auto& key : m->keys) {
            auto* rec = store_.find_publication(key);
            if (!rec || rec->unpublished) continue;
            auto& reps = rec->metadata.replicas;
            reps.erase(std::remove_if(reps.begin(), reps.end(), [&](const ReplicaLocation& r) { return r.node == m->node; }),
                       reps.end());
            reps.push_back({m->node, m->cell});
        }
        return;
    }
}

void DcsNode::broker_publish(const geo::Delivery& d, const msg::Publish& m) {
    const bool designated = router_.is_designated();
    if (store_.has_publication(m.md.key)) {
        if (designated) send_ack(d, m.op);
        return;
    }
    PublicationRecord rec;
    rec.metadata = m.md;
    std::vector<Match> matches;
    try {
        matches = store_.index_publication(std::move(rec), now_ts());
    } catch (const StoreError&) {
        return;
    }
    if (!designated) return;
    for (auto& mt : matches) {
        Notification n;
        n.id_sub = mt.subscription.id_sub;
        n.matches.push_back(std::move(mt.metadata));
        n.total_available = 1;
        send_notify(mt.subscription, std::move(n), false, 0, d.at_cell);
    }
    send_ack(d, m.op);
}

void DcsNode::broker_subscribe(const geo::Delivery& d, const msg::SubscribeClause& m) {
    const bool designated = router_.is_designated();
    const CellId addressed = d.cells.empty() ? d.at_cell : d.cells.front();
    SubscriptionRecord rec;
    rec.subscription = m.sub;
    rec.clauses = m.clauses;
    if (auto* old = store_.find_subscription(m.sub.owner, m.sub.id_sub)) {
        // A proxy cell can broker clauses addressed to several cells.
        bool extra = false;
        for (const auto& c : m.clauses)
            if (std::find(old->clauses.begin(), old->clauses.end(), c) == old->clauses.end()) {
                old->clauses.push_back(c);
                extra = true;
            }
        if (extra) {
            rec.clauses = old->clauses;
            store_.unsubscribe(m.sub.owner, m.sub.id_sub);
        }
    }
    if (store_.has_subscription(m.sub.owner, m.sub.id_sub)) {
        if (!designated) return;
        auto* rec = store_.find_subscription(m.sub.owner, m.sub.id_sub);
        rec->past_cursor = 0;
        if (!rec->past_matches.empty()) {
            Notification n;
            try {
                n = store_.fetch_more(m.sub.owner, m.sub.id_sub, params_.batch_n);
            } catch (const StoreError&) {
            }
            if (!n.matches.empty()) send_notify(rec->subscription, std::move(n), true, 0, addressed);
        }
        send_ack(d, m.op);
        return;
    }
    Notification n;
    try {
        n = store_.index_subscription(std::move(rec), now_ts(), params_.batch_n);
    } catch (const StoreError&) {
        return;
    }
    if (!designated) return;
    if (!n.matches.empty()) send_notify(m.sub, std::move(n), true, 0, addressed);
    send_ack(d, m.op);
}

void DcsNode::send_notify(const Subscription& sub, Notification n, bool past, std::uint32_t offset,
                          CellId broker_cell) {
    const auto count = n.matches.size();
    log_.notifications_sent += count;
    auto m = std::make_shared<msg::Notify>();
    m->from = self_;
    m->broker_cell = broker_cell;
    m->past = past;
    m->offset = offset;
    m->n = std::move(n);
    if (sub.owner == self_) {
        on_notify(*m);
        return;
    }
    const SubKey sk{sub.owner, sub.id_sub};
    if (dormant_.count(sk)) {
        log_.notifications_undeliverable += count;
        return;
    }
    if (auto b = nack_buffer_.find(sk); b != nack_buffer_.end()) {
        b->second.pending.push_back(m);
        return;
    }
    router_.send_to_node(sub.owner, sub.cell_owner.value_or(here()), m, Traffic::Data);
}

void DcsNode::on_nack(const geo::Nack& n) {
    ++log_.nacks_received;
    if (const auto* note = dynamic_cast<const msg::Notify*>(n.original.get())) {
        const SubKey sk{n.target, note->n.id_sub};
        auto& b = nack_buffer_[sk];
        if (b.pending.empty()) {
            b.since = sim_.now();
            sim_.schedule(sim::from_seconds(params_.nack_hold), self_, [this, sk, since = b.since] {
                auto it = nack_buffer_.find(sk);
                if (it == nack_buffer_.end() || it->second.since != since) return;
                for (const auto& p : it->second.pending) log_.notifications_undeliverable += p->n.matches.size();
                nack_buffer_.erase(it);
                dormant_.insert(sk);
            });
        }
        b.pending.push_back(std::make_shared<msg::Notify>(*note));
        return;
    }
    if (const auto* req = dynamic_cast<const msg::DownloadRequest*>(n.original.get())) {
        auto it = downloads_.find(req->req_id);
        if (it != downloads_.end()) download_next(req->req_id, it->second.generation);
    }
}

// ---------------------------------------------------------------------------
// Subscriber side

void DcsNode::on_notify(const msg::Notify& m) {
    accept_notification(m.n);
    if (!m.past) return;
    auto& f = fetches_[{m.n.id_sub, m.broker_cell}];
    if (m.offset != f.expected) return;
    f.expected += static_cast<std::uint32_t>(m.n.matches.size());
    if (f.outstanding) {
        f.outstanding = false;
        end_op(f.op, true);
    }
    auto own = own_subs_.find(m.n.id_sub);
    if (m.n.has_more && own != own_subs_.end() && own->second.active && !m.n.matches.empty())
        request_more(m.n.id_sub, m.broker_cell);
}

void DcsNode::request_more(std::uint32_t id_sub, CellId broker_cell) {
    auto& f = fetches_[{id_sub, broker_cell}];
    f.op = begin_op(OpType::FetchMore);
    f.attempts = 0;
    f.outstanding = true;
    fetch_attempt(id_sub, broker_cell, ++f.generation);
}

void DcsNode::fetch_attempt(std::uint32_t id_sub, CellId broker_cell, std::uint64_t generation) {
    auto it = fetches_.find({id_sub, broker_cell});
    if (it == fetches_.end() || !it->second.outstanding || it->second.generation != generation) return;
    auto& f = it->second;
    if (f.attempts > params_.op_retries) {
        f.outstanding = false;
        end_op(f.op, false);
        return;
    }
    ++f.attempts;
    log_.attempt(f.op);
    auto m = std::make_shared<msg::FetchMore>();
    m->owner = self_;
    m->id_sub = id_sub;
    m->offset = f.expected;
    m->broker_cell = broker_cell;
    router_.send_to_cells({broker_cell}, m, Traffic::Data);
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_,
                  [this, id_sub, broker_cell, generation] { fetch_attempt(id_sub, broker_cell, generation); });
}

// ---------------------------------------------------------------------------
// Downloads

void DcsNode::start_download(const ObjectMetadata& md) {
    const auto op = begin_op(OpType::Download);
    if (objects_.count(md.key)) {
        end_op(op, true);
        return;
    }
    const CellId me = here();
    std::vector<ReplicaLocation> reps;
    for (const auto& r : md.replicas)
        if (r.node != self_ && std::none_of(reps.begin(), reps.end(), [&](const ReplicaLocation& x) { return x.node == r.node; }))
            reps.push_back(r);
    std::stable_sort(reps.begin(), reps.end(), [&](const ReplicaLocation& a, const ReplicaLocation& b) {
        const int da = geo::dist2(a.cell, me), db = geo::dist2(b.cell, me);
        return da != db ? da < db : a.node < b.node;
    });
    Download d;
    d.op = op;
    d.md = md;
    for (std::size_t i = 0; i < reps.size() && static_cast<int>(d.plan.size()) < params_.op_retries; ++i)
        d.plan.push_back({reps[i].node, reps[i].cell});
    d.plan.push_back({kNoNode, md.replicas.empty() ? me : md.replicas.front().cell});
    const auto req = next_req_++;
    auto& slot = downloads_[req] = std::move(d);
    slot.index = 0;
    download_next(req, slot.generation);
}

void DcsNode::download_next(std::uint32_t req, std::uint64_t generation) {
    auto it = downloads_.find(req);
    if (it == downloads_.end() || it->second.generation != generation) return;
    auto& d = it->second;
    if (d.index >= d.plan.size()) {
        const auto op = d.op;
        downloads_.erase(it);
        end_op(op, false);
        return;
    }
    const Target t = d.plan[d.index];
    const int d2 = t.node == kNoNode ? -1 : geo::dist2(t.cell, here());
    log_.download_attempt(d.op, static_cast<int>(d.index), d2);
    ++d.index;
    const auto gen = ++d.generation;
    log_.attempt(d.op);
    auto m = std::make_shared<msg::DownloadRequest>();
    m->requester = self_;
    m->requester_cell = here();
    m->req_id = req;
    m->key = d.md.key;
    if (t.node == kNoNode)
        router_.send_to_cells({t.cell}, m, Traffic::Data, DeliveryMode::Anycast);
    else
        router_.send_to_node(t.node, t.cell, m, Traffic::Data);
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_, [this, req, gen] { download_next(req, gen); });
}

void DcsNode::serve_download(const msg::DownloadRequest& r) {
    auto rep = std::make_shared<msg::DownloadReply>();
    rep->from = self_;
    rep->req_id = r.req_id;
    rep->key = r.key;
    auto it = objects_.find(r.key);
    rep->found = it != objects_.end();
    if (rep->found) rep->data = it->second.data;
    router_.send_to_node(r.requester, r.requester_cell, rep, Traffic::Data);
}

void DcsNode::on_download_reply(const geo::Delivery& d, const msg::DownloadReply& r) {
    auto it = downloads_.find(r.req_id);
    if (it == downloads_.end() || !(it->second.md.key == r.key)) return;
    if (!r.found) {
        download_next(r.req_id, it->second.generation);
        return;
    }
    const auto md = it->second.md;
    const auto op = it->second.op;
    downloads_.erase(it);
    const CellId cell = here();
    objects_[md.key] = HeldObject{md, r.data, Role::Passive, cell};
    end_op(op, true, d.hops, d.meters);

    auto a = std::make_shared<msg::ReplicaAnnounce>();
    a->keys = {md.key};
    a->node = self_;
    a->cell = cell;
    log_.announce(sim_.now(), md.key, self_, cell);
    router_.send_to_cells(tag_cells(md.tags), a, Traffic::Data);
}

// ---------------------------------------------------------------------------
// Cell membership

void DcsNode::on_settle(CellId, CellId new_cell) {
    if (!app_started_) return;
    const bool moved = !(home_cell_ == new_cell);
    home_cell_ = new_cell;
    if (moved) {
        store_.clear();
        nack_buffer_.clear();
        dormant_.clear();
        for (auto& [k, o] : objects_)
            if (o.role == Role::Active) o.role = Role::Passive;
    }
    if (moved || rebooted_) {
        auto upd = std::make_shared<msg::LocationUpdate>();
        upd->owner = self_;
        upd->cell = new_cell;
        std::set<CellId> cells;
        for (auto& [id, own] : own_subs_) {
            if (!own.active) continue;
            own.sub.cell_owner = new_cell;
            upd->subs.push_back(id);
            for (auto c : sub_cells_[id]) cells.insert(c);
        }
        if (!cells.empty()) router_.send_to_cells({cells.begin(), cells.end()}, upd, Traffic::Data);
    }
    if (moved) {
        // One announcement per distinct set of tag cells.
        std::map<std::vector<CellId>, std::shared_ptr<msg::ReplicaAnnounce>> by_dest;
        for (auto& [k, o] : objects_) {
            if (o.role != Role::Passive) continue;
            o.cell = new_cell;
            auto& a = by_dest[tag_cells(o.md.tags)];
            if (!a) {
                a = std::make_shared<msg::ReplicaAnnounce>();
                a->node = self_;
                a->cell = new_cell;
            }
            a->keys.push_back(k);
            log_.announce(sim_.now(), k, self_, new_cell);
        }
        for (auto& [cells, a] : by_dest) router_.send_to_cells(cells, a, Traffic::Data);
    }
    rebooted_ = false;
    cell_join();
}

void DcsNode::cell_join() {
    joined_ = false;
    router_.set_member(false);
    const auto gen = ++join_generation_;
    join_op_ = begin_op(OpType::Join);
    sim_.schedule(sim::from_seconds(params_.beacon_wait), self_, [this, gen] { join_listen(0, gen); });
}

void DcsNode::join_listen(int round, std::uint64_t generation) {
    if (generation != join_generation_ || joined_) return;
    if (!router_.settled()) return;
    NodeId entry = kNoNode;
    for (const auto& [id, n] : router_.neighbors())
        if (n.cell == router_.cell() && (n.flags & geo::Beacon::kMember)) {
            entry = id;
            break;
        }
    if (entry != kNoNode) {
        auto req = std::make_shared<msg::JoinRequest>();
        req->joiner = self_;
        sim_.unicast(self_, entry, req, Traffic::Data, false);
        join_waiting_ = true;
    }
    const double wait = entry != kNoNode ? params_.op_timeout : params_.beacon_wait;
    sim_.schedule(sim::from_seconds(wait), self_, [this, round, generation] {
        if (generation != join_generation_ || joined_) return;
        if (round < params_.op_retries) {
            join_listen(round + 1, generation);
            return;
        }
        // Nobody to learn from: the node is alone in its cell.
        joined_ = true;
        join_waiting_ = false;
        router_.set_member(true);
        end_op(join_op_, false);
    });
}

void DcsNode::on_join_reply(const msg::JoinReply& r) {
    for (const auto& p : r.pubs) store_.merge_publication(p);
    for (const auto& s : r.subs) store_.merge_subscription(s);
    for (const auto& o : r.objects) {
        if (o.unpublished || objects_.count(o.metadata.key)) continue;
        objects_[o.metadata.key] = HeldObject{o.metadata, o.data, Role::Active, router_.cell()};
    }
    if (!joined_ && join_waiting_) {
        joined_ = true;
        join_waiting_ = false;
        router_.set_member(true);
        end_op(join_op_, true);
    }
}

void DcsNode::on_frame(NodeId from, const PayloadPtr& payload) {
    if (router_.handle(from, payload)) return;
    if (!app_started_) return;
    const auto* p = payload.get();
    if (const auto* put = dynamic_cast<const msg::ReplicaPut*>(p)) {
        if (!joined_ || !(router_.cell() == here())) return;
        const bool listed = std::any_of(put->md.replicas.begin(), put->md.replicas.end(),
                                        [&](const ReplicaLocation& r) { return r.cell == router_.cell(); });
        if (listed && !objects_.count(put->md.key))
            objects_[put->md.key] = HeldObject{put->md, put->data, Role::Active, router_.cell()};
        return;
    }
    if (dynamic_cast<const msg::JoinRequest*>(p)) {
        if (!joined_) return;
        auto rep = std::make_shared<msg::JoinReply>();
        rep->from = self_;
        for (const auto& [k, r] : store_.subscriptions()) rep->subs.push_back(r);
        for (const auto& [k, r] : store_.publications()) rep->pubs.push_back(r);
        for (const auto& [k, o] : objects_) {
            if (o.role == Role::Passive || !(o.cell == router_.cell())) continue;
            rep->objects.push_back(PublicationRecord{o.md, o.data, false});
        }
        sim_.unicast(self_, from, rep, Traffic::Data, false);
        return;
    }
    if (const auto* rep = dynamic_cast<const msg::JoinReply*>(p)) {
        on_join_reply(*rep);
        return;
    }
}

}  // namespace thyme
