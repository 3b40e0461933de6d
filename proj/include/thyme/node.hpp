#pragma once

// Shared application-side pieces of both materializations: the structured
// event log the harness reads, tunables, and the subscriber-side bookkeeping
// (notification dedup, past-batch cursors, download policy).

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "thyme/core.hpp"
#include "thyme/query.hpp"
#include "thyme/simnet.hpp"
#include "thyme/store.hpp"

namespace thyme {

using sim::SimTime;

enum class OpType : std::uint8_t { Publish, Unpublish, Subscribe, Unsubscribe, Download, FetchMore, Join };

const char* to_string(OpType t);

struct OpRecord {
    std::uint64_t id = 0;
    NodeId node;
    OpType type = OpType::Publish;
    SimTime begin = 0;
    SimTime end = -1;  // -1 while pending
    bool ok = false;
    int attempts = 0;
    int hops = 0;
    double meters = 0;
};

struct NotifyRecord {
    SimTime t;
    NodeId node;
    std::uint32_t id_sub;
    ObjectKey key;
};

struct AnnounceRecord {
    SimTime t;
    ObjectKey key;
    NodeId node;
    CellId cell;
};

struct DownloadAttempt {
    std::uint64_t op;
    int index;
    int cell_distance2;  // squared cell distance to the target, -1 for the active-cell attempt
};

/// Append-only log shared by all nodes of one run.
class EventLog {
public:
    std::uint64_t begin(SimTime t, NodeId node, OpType type);
    void end(std::uint64_t op, SimTime t, bool ok, int hops = 0, double meters = 0);
    void attempt(std::uint64_t op) { ++ops_.at(op).attempts; }
    const OpRecord& op(std::uint64_t id) const { return ops_.at(id); }

    void notify(SimTime t, NodeId node, std::uint32_t id_sub, const ObjectKey& key) {
        notifications_.push_back({t, node, id_sub, key});
    }
    void announce(SimTime t, const ObjectKey& key, NodeId node, CellId cell) {
        announcements_.push_back({t, key, node, cell});
    }
    void download_attempt(std::uint64_t op, int index, int d2) { download_attempts_.push_back({op, index, d2}); }

    const std::vector<OpRecord>& ops() const { return ops_; }
    const std::vector<NotifyRecord>& notifications() const { return notifications_; }
    const std::vector<AnnounceRecord>& announcements() const { return announcements_; }
    const std::vector<DownloadAttempt>& download_attempts() const { return download_attempts_; }

    std::uint64_t notifications_sent = 0;     // broker/publisher side, per matched object
    std::uint64_t notifications_undeliverable = 0;
    std::uint64_t nacks_received = 0;

private:
    std::vector<OpRecord> ops_;
    std::vector<NotifyRecord> notifications_;
    std::vector<AnnounceRecord> announcements_;
    std::vector<DownloadAttempt> download_attempts_;
};

struct ThymeParams {
    std::size_t batch_n = 10;
    double op_timeout = 2.0;
    int op_retries = 3;
    double p_reply = 0.3;       // PL/SG join: probability a neighbor answers
    double reply_window = 0.5;  // PL/SG join: answer delay upper bound, seconds
    double nack_hold = 30;
    double beacon_wait = 2.0;
    std::size_t max_clauses = 64;
    double expiry_sweep = 10;
    std::uint64_t seed = 1;
};

enum class DownloadMode : std::uint8_t { Immediate, Discard, Store };

struct DownloadPolicy {
    DownloadMode mode = DownloadMode::Immediate;
    double probability = 0.5;
};

/// Application interface shared by both materializations.
class ThymeNode : public sim::Agent {
public:
    ThymeNode(sim::Simulator& sim, NodeId self, ThymeParams params, EventLog& log);

    /// Brings up the routing layer (t = 0).
    virtual void boot() = 0;
    /// Starts the application: join procedure, then normal operation.
    virtual void start_app() = 0;

    /// Each returns false when the operation was rejected synchronously.
    virtual bool publish(const std::string& id_obj, const std::set<std::string>& tags, std::string summary,
                         std::string data) = 0;
    virtual bool unpublish(const std::string& id_obj) = 0;
    virtual bool subscribe(std::uint32_t id_sub, const std::string& query, Timestamp ts_start, Timestamp ts_end) = 0;
    virtual bool unsubscribe(std::uint32_t id_sub) = 0;

    void set_download_policy(DownloadPolicy p) { policy_ = p; }
    NodeId id() const { return self_; }
    bool app_started() const { return app_started_; }
    bool joined() const { return joined_; }
    const TimeAwareStore& store() const { return store_; }
    /// Keys whose bytes this node holds (own, replicated, downloaded).
    virtual std::vector<ObjectKey> held_objects() const = 0;

protected:
    struct OwnSubscription {
        Subscription sub;
        query::DnfQuery dnf;
        bool active = true;
        std::set<ObjectKey> seen;
    };

    /// Records first-time (subscription, object) pairs and applies the
    /// download policy to each newly seen object.
    void accept_notification(const Notification& n);
    bool wants_download(const ObjectKey& key) const;
    virtual void start_download(const ObjectMetadata& md) = 0;
    Timestamp now_ts() const { return sim::to_timestamp(sim_.now()); }
    void fail_pending_ops();
    std::uint64_t begin_op(OpType t);
    void end_op(std::uint64_t op, bool ok, int hops = 0, double meters = 0);
    void schedule_sweep();

    sim::Simulator& sim_;
    NodeId self_;
    ThymeParams params_;
    EventLog& log_;
    TimeAwareStore store_;
    std::map<std::uint32_t, OwnSubscription> own_subs_;
    std::set<ObjectKey> download_seen_;
    std::set<std::uint64_t> pending_ops_;
    DownloadPolicy policy_;
    bool app_started_ = false;
    bool joined_ = false;
    std::mt19937_64 rng_;
};

}  // namespace thyme
