#include "thyme/node.hpp"

#include "thyme/rng.hpp"

namespace thyme {

const char* to_string(OpType t) {
    switch (t) {
        case OpType::Publish: return "publish";
        case OpType::Unpublish: return "unpublish";
        case OpType::Subscribe: return "subscribe";
        case OpType::Unsubscribe: return "unsubscribe";
        case OpType::Download: return "download";
        case OpType::FetchMore: return "fetch_more";
        case OpType::Join: return "join";
    }
    return "?";
}

std::uint64_t EventLog::begin(SimTime t, NodeId node, OpType type) {
    OpRecord r;
    r.id = ops_.size();
    r.node = node;
    r.type = type;
    r.begin = t;
    ops_.push_back(r);
    return r.id;
}

void EventLog::end(std::uint64_t op, SimTime t, bool ok, int hops, double meters) {
    auto& r = ops_.at(op);
    if (r.end >= 0) return;
    r.end = t;
    r.ok = ok;
    r.hops = hops;
    r.meters = meters;
}

ThymeNode::ThymeNode(sim::Simulator& sim, NodeId self, ThymeParams params, EventLog& log)
    : sim_(sim), self_(self), params_(params), log_(log), rng_(make_rng(params.seed, kStreamProtocol, self.value)) {}

std::uint64_t ThymeNode::begin_op(OpType t) {
    const auto id = log_.begin(sim_.now(), self_, t);
    pending_ops_.insert(id);
    return id;
}

void ThymeNode::end_op(std::uint64_t op, bool ok, int hops, double meters) {
    if (pending_ops_.erase(op) == 0) return;
    log_.end(op, sim_.now(), ok, hops, meters);
}

void ThymeNode::fail_pending_ops() {
    for (auto op : pending_ops_) log_.end(op, sim_.now(), false);
    pending_ops_.clear();
}

bool ThymeNode::wants_download(const ObjectKey& key) const {
    if (policy_.mode != DownloadMode::Immediate) return false;
    const std::uint64_t kh = stable_hash(key.id_obj.data(), key.id_obj.size()) ^ (std::uint64_t{key.owner.value} << 32);
    return hash_unit(params_.seed ^ 0x0d0e, self_.value, kh) < policy_.probability;
}

void ThymeNode::accept_notification(const Notification& n) {
    auto it = own_subs_.find(n.id_sub);
    if (it == own_subs_.end() || !it->second.active) return;
    auto& own = it->second;
    for (const auto& md : n.matches) {
        if (!own.seen.insert(md.key).second) continue;
        log_.notify(sim_.now(), self_, n.id_sub, md.key);
        if (md.key.owner == self_) continue;
        if (download_seen_.insert(md.key).second && wants_download(md.key)) start_download(md);
    }
}

void ThymeNode::schedule_sweep() {
    sim_.schedule(sim::from_seconds(params_.expiry_sweep), self_, [this] {
        store_.expire(now_ts());
        schedule_sweep();
    });
}

}  // namespace thyme
