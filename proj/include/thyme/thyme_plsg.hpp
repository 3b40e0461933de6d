#pragma once

// Publish locally, subscribe globally: publications stay at their owner,
// subscriptions are flooded to every node, downloads go to the owner over
// distance-vector routes.

#include <map>

#include "thyme/messages.hpp"
#include "thyme/node.hpp"
#include "thyme/route_flood.hpp"

namespace thyme {

class PlsgNode final : public ThymeNode {
public:
    PlsgNode(sim::Simulator& sim, NodeId self, ThymeParams params, EventLog& log, route::DsdvParams dsdv = {});

    void boot() override;
    void start_app() override;

    bool publish(const std::string& id_obj, const std::set<std::string>& tags, std::string summary,
                 std::string data) override;
    bool unpublish(const std::string& id_obj) override;
    bool subscribe(std::uint32_t id_sub, const std::string& query, Timestamp ts_start, Timestamp ts_end) override;
    bool unsubscribe(std::uint32_t id_sub) override;
    std::vector<ObjectKey> held_objects() const override;

    void on_frame(NodeId from, const sim::PayloadPtr& payload) override;
    void on_down() override;
    void on_up() override;

    const route::DsdvRouter& dsdv() const { return dsdv_; }
    const route::FloodRouter& flood() const { return flood_; }

private:
    struct Download {
        std::uint64_t op;
        ObjectKey key;
        int attempts = 0;
    };
    struct Fetch {
        std::uint32_t expected = 0;
        std::uint64_t op = 0;
        int attempts = 0;
        bool outstanding = false;
        std::uint64_t generation = 0;
    };

    void start_download(const ObjectMetadata& md) override;
    void download_attempt(std::uint32_t req);
    void on_flooded(NodeId origin, const sim::PayloadPtr& inner);
    void on_routed(const route::DvPacket& pkt);
    void on_notify(const msg::Notify& m);
    void request_more(std::uint32_t id_sub, NodeId source);
    void fetch_attempt(std::uint32_t id_sub, NodeId source, std::uint64_t generation);
    void send_notification(NodeId owner, Notification n, bool past, std::uint32_t offset);
    void install_subscription(SubscriptionRecord rec);
    void join_round(int round);

    route::FloodRouter flood_;
    route::DsdvRouter dsdv_;
    std::map<std::uint32_t, Download> downloads_;
    std::uint32_t next_req_ = 1;
    std::map<std::pair<std::uint32_t, NodeId>, Fetch> fetches_;
    std::uint64_t join_op_ = 0;
    bool join_answered_ = false;
};

}  // namespace thyme
