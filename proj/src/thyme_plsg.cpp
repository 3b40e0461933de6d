#include "thyme/thyme_plsg.hpp"

#include "thyme/rng.hpp"

namespace thyme {

using sim::PayloadPtr;
using sim::Traffic;

PlsgNode::PlsgNode(sim::Simulator& sim, NodeId self, ThymeParams params, EventLog& log, route::DsdvParams dsdv)
    : ThymeNode(sim, self, params, log), flood_(sim, self), dsdv_(sim, self, dsdv) {
    flood_.set_deliver([this](NodeId origin, const PayloadPtr& inner) { on_flooded(origin, inner); });
    dsdv_.set_deliver([this](const route::DvPacket& pkt) { on_routed(pkt); });
}

void PlsgNode::boot() { dsdv_.start(); }

void PlsgNode::start_app() {
    if (app_started_ || !sim_.alive(self_)) return;
    app_started_ = true;
    schedule_sweep();
    join_op_ = begin_op(OpType::Join);
    join_answered_ = false;
    join_round(0);
}

void PlsgNode::join_round(int round) {
    auto req = std::make_shared<msg::JoinRequest>();
    req->joiner = self_;
    sim_.broadcast(self_, req, Traffic::Data);
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_, [this, round] {
        if (join_answered_) return;
        if (round < params_.op_retries) {
            join_round(round + 1);
            return;
        }
        // Nobody answered: carry on alone.
        joined_ = true;
        end_op(join_op_, false);
    });
}

void PlsgNode::on_down() {
    fail_pending_ops();
    flood_.reset();
    dsdv_.reset();
    downloads_.clear();
    fetches_.clear();
    joined_ = false;
}

void PlsgNode::on_up() {
    dsdv_.start();
    if (!app_started_) return;
    schedule_sweep();
    join_op_ = begin_op(OpType::Join);
    join_answered_ = false;
    join_round(0);
}

std::vector<ObjectKey> PlsgNode::held_objects() const {
    std::vector<ObjectKey> out;
    for (const auto& [k, r] : store_.publications())
        if (!r.unpublished && !r.data.empty()) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// Operations

bool PlsgNode::publish(const std::string& id_obj, const std::set<std::string>& tags, std::string summary,
                       std::string data) {
    const auto op = begin_op(OpType::Publish);
    PublicationRecord rec;
    rec.metadata.key = ObjectKey{id_obj, self_};
    rec.metadata.tags = tags;
    rec.metadata.summary = std::move(summary);
    rec.metadata.ts_pub = now_ts();
    rec.data = std::move(data);
    std::vector<Match> matches;
    try {
        validate(rec.metadata);
        matches = store_.index_publication(std::move(rec), now_ts());
    } catch (const std::exception&) {
        end_op(op, false);
        return false;
    }
    for (auto& m : matches) {
        Notification n;
        n.id_sub = m.subscription.id_sub;
        n.matches.push_back(std::move(m.metadata));
        n.total_available = 1;
        send_notification(m.subscription.owner, std::move(n), false, 0);
    }
    end_op(op, true);
    return true;
}

bool PlsgNode::unpublish(const std::string& id_obj) {
    const auto op = begin_op(OpType::Unpublish);
    const bool ok = store_.unpublish(ObjectKey{id_obj, self_});
    end_op(op, ok);
    return ok;
}

bool PlsgNode::subscribe(std::uint32_t id_sub, const std::string& text, Timestamp ts_start, Timestamp ts_end) {
    const auto op = begin_op(OpType::Subscribe);
    OwnSubscription own;
    own.sub = Subscription{id_sub, text, ts_start, ts_end, self_, std::nullopt};
    try {
        validate(own.sub);
        if (own_subs_.count(id_sub)) throw std::invalid_argument("duplicate subscription id");
        own.dnf = query::to_dnf(query::parse(text), rng_, params_.max_clauses);
    } catch (const std::exception&) {
        end_op(op, false);
        return false;
    }
    auto m = std::make_shared<msg::Subscribe>();
    m->sub = own.sub;
    m->clauses = own.dnf.clauses;
    own_subs_[id_sub] = std::move(own);
    flood_.flood(m, Traffic::Data);
    end_op(op, true);
    return true;
}

bool PlsgNode::unsubscribe(std::uint32_t id_sub) {
    const auto op = begin_op(OpType::Unsubscribe);
    auto it = own_subs_.find(id_sub);
    if (it == own_subs_.end() || !it->second.active) {
        end_op(op, false);
        return false;
    }
    it->second.active = false;
    auto m = std::make_shared<msg::Unsubscribe>();
    m->owner = self_;
    m->id_sub = id_sub;
    flood_.flood(m, Traffic::Data);
    end_op(op, true);
    return true;
}

// ---------------------------------------------------------------------------
// Message handling

void PlsgNode::on_frame(NodeId from, const PayloadPtr& payload) {
    if (flood_.handle(from, payload) || dsdv_.handle(from, payload)) return;
    if (!app_started_) return;
    if (const auto* req = dynamic_cast<const msg::JoinRequest*>(payload.get())) {
        if (!joined_) return;
        const double u = hash_unit(params_.seed ^ 0x101, self_.value, (std::uint64_t{req->joiner.value} << 32) ^
                                                                          static_cast<std::uint64_t>(sim_.now()));
        if (u >= params_.p_reply) return;
        const double delay = params_.reply_window * hash_unit(params_.seed ^ 0x102, self_.value, sim_.now());
        const NodeId joiner = req->joiner;
        sim_.schedule(sim::from_seconds(delay), self_, [this, joiner] {
            auto rep = std::make_shared<msg::JoinReply>();
            rep->from = self_;
            for (const auto& [k, r] : store_.subscriptions()) {
                SubscriptionRecord copy;
                copy.subscription = r.subscription;
                copy.clauses = r.clauses;
                rep->subs.push_back(std::move(copy));
            }
            sim_.unicast(self_, joiner, rep, Traffic::Data, false);
        });
        return;
    }
    if (const auto* rep = dynamic_cast<const msg::JoinReply*>(payload.get())) {
        for (const auto& r : rep->subs) install_subscription(r);
        if (!join_answered_) {
            join_answered_ = true;
            joined_ = true;
            end_op(join_op_, true);
        }
    }
}

void PlsgNode::install_subscription(SubscriptionRecord rec) {
    const auto& s = rec.subscription;
    if (store_.has_subscription(s.owner, s.id_sub)) return;
    if (!s.ts_end.is_bottom() && s.ts_end.ms() < now_ts().ms()) return;
    const NodeId owner = s.owner;
    rec.past_cursor = 0;
    rec.past_matches.clear();
    Notification n;
    try {
        n = store_.index_subscription(std::move(rec), now_ts(), params_.batch_n);
    } catch (const StoreError&) {
        return;
    }
    if (!n.matches.empty()) send_notification(owner, std::move(n), true, 0);
}

void PlsgNode::on_flooded(NodeId, const PayloadPtr& inner) {
    if (!app_started_) return;
    if (const auto* m = dynamic_cast<const msg::Subscribe*>(inner.get())) {
        SubscriptionRecord rec;
        rec.subscription = m->sub;
        rec.clauses = m->clauses;
        install_subscription(std::move(rec));
    } else if (const auto* u = dynamic_cast<const msg::Unsubscribe*>(inner.get())) {
        store_.unsubscribe(u->owner, u->id_sub);
    }
}

void PlsgNode::send_notification(NodeId owner, Notification n, bool past, std::uint32_t offset) {
    log_.notifications_sent += n.matches.size();
    if (owner == self_) {
        msg::Notify local;
        local.from = self_;
        local.past = past;
        local.offset = offset;
        local.n = std::move(n);
        on_notify(local);
        return;
    }
    auto m = std::make_shared<msg::Notify>();
    m->from = self_;
    m->past = past;
    m->offset = offset;
    m->n = std::move(n);
    const auto count = m->n.matches.size();
    if (!dsdv_.send(owner, m, Traffic::Data)) log_.notifications_undeliverable += count;
}

void PlsgNode::on_routed(const route::DvPacket& pkt) {
    if (!app_started_) return;
    const auto* inner = pkt.inner.get();
    if (const auto* n = dynamic_cast<const msg::Notify*>(inner)) {
        on_notify(*n);
    } else if (const auto* f = dynamic_cast<const msg::FetchMore*>(inner)) {
        auto* rec = store_.find_subscription(f->owner, f->id_sub);
        if (!rec) return;
        rec->past_cursor = std::min<std::size_t>(f->offset, rec->past_matches.size());
        Notification n;
        n.id_sub = f->id_sub;
        try {
            n = store_.fetch_more(f->owner, f->id_sub, params_.batch_n);
        } catch (const StoreError&) {
            n.has_more = false;
        }
        send_notification(f->owner, std::move(n), true, f->offset);
    } else if (const auto* req = dynamic_cast<const msg::DownloadRequest*>(inner)) {
        auto rep = std::make_shared<msg::DownloadReply>();
        rep->from = self_;
        rep->req_id = req->req_id;
        rep->key = req->key;
        const auto* rec = store_.find_publication(req->key);
        rep->found = rec && !rec->unpublished && req->key.owner == self_;
        if (rep->found) rep->data = rec->data;
        dsdv_.send(req->requester, rep, Traffic::Data);
    } else if (const auto* rep = dynamic_cast<const msg::DownloadReply*>(inner)) {
        auto it = downloads_.find(rep->req_id);
        if (it == downloads_.end()) return;
        const auto op = it->second.op;
        downloads_.erase(it);
        end_op(op, rep->found, pkt.hops, pkt.meters);
    }
}

void PlsgNode::on_notify(const msg::Notify& m) {
    accept_notification(m.n);
    if (!m.past) return;
    auto& f = fetches_[{m.n.id_sub, m.from}];
    if (m.offset != f.expected) return;
    f.expected += static_cast<std::uint32_t>(m.n.matches.size());
    if (f.outstanding) {
        f.outstanding = false;
        end_op(f.op, true);
    }
    auto own = own_subs_.find(m.n.id_sub);
    if (m.n.has_more && own != own_subs_.end() && own->second.active && !m.n.matches.empty())
        request_more(m.n.id_sub, m.from);
}

void PlsgNode::request_more(std::uint32_t id_sub, NodeId source) {
    auto& f = fetches_[{id_sub, source}];
    f.op = begin_op(OpType::FetchMore);
    f.attempts = 0;
    f.outstanding = true;
    fetch_attempt(id_sub, source, ++f.generation);
}

void PlsgNode::fetch_attempt(std::uint32_t id_sub, NodeId source, std::uint64_t generation) {
    auto it = fetches_.find({id_sub, source});
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
    dsdv_.send(source, m, Traffic::Data);
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_,
                  [this, id_sub, source, generation] { fetch_attempt(id_sub, source, generation); });
}

void PlsgNode::start_download(const ObjectMetadata& md) {
    const auto op = begin_op(OpType::Download);
    if (md.key.owner == self_) {
        end_op(op, true);
        return;
    }
    const auto req = next_req_++;
    downloads_[req] = Download{op, md.key, 0};
    download_attempt(req);
}

void PlsgNode::download_attempt(std::uint32_t req) {
    auto it = downloads_.find(req);
    if (it == downloads_.end()) return;
    auto& d = it->second;
    if (d.attempts > params_.op_retries) {
        const auto op = d.op;
        downloads_.erase(it);
        end_op(op, false);
        return;
    }
    ++d.attempts;
    log_.attempt(d.op);
    auto m = std::make_shared<msg::DownloadRequest>();
    m->requester = self_;
    m->req_id = req;
    m->key = d.key;
    dsdv_.send(d.key.owner, m, Traffic::Data);
    sim_.schedule(sim::from_seconds(params_.op_timeout), self_, [this, req] { download_attempt(req); });
}

}  // namespace thyme
