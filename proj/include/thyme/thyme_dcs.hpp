#pragma once

// Data-centric storage: metadata is indexed at the cells its tags hash to,
// subscription clauses at the cell of their key, and object bytes stay in
// the publisher's cell (active replicas) plus any downloader (passive
// replicas).

#include <functional>
#include <map>
#include <set>

#include "thyme/messages.hpp"
#include "thyme/node.hpp"
#include "thyme/route_geo.hpp"

namespace thyme {

class DcsNode final : public ThymeNode {
public:
    enum class Role : std::uint8_t { Own, Active, Passive };

    struct HeldObject {
        ObjectMetadata md;
        std::string data;
        Role role = Role::Own;
        CellId cell;  // cell the node was in when it obtained the bytes
    };

    DcsNode(sim::Simulator& sim, NodeId self, ThymeParams params, EventLog& log, geo::Grid grid,
            geo::GeoParams geo = {});

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

    const geo::GeoRouter& router() const { return router_; }
    const std::map<ObjectKey, HeldObject>& objects() const { return objects_; }

private:
    struct CellOp {
        std::uint64_t op;
        std::set<CellId> unacked;
        std::function<void(const std::set<CellId>&)> send;
        int attempts = 0;
    };
    struct Target {
        NodeId node;  // kNoNode: the active-replication cell
        CellId cell;
    };
    struct Download {
        std::uint64_t op;
        ObjectMetadata md;
        std::vector<Target> plan;
        std::size_t index = 0;
        std::uint64_t generation = 0;
    };
    struct Fetch {
        std::uint32_t expected = 0;
        std::uint64_t op = 0;
        int attempts = 0;
        bool outstanding = false;
        std::uint64_t generation = 0;
    };
    struct Buffered {
        SimTime since = 0;
        std::vector<std::shared_ptr<msg::Notify>> pending;
    };
    using SubKey = std::pair<NodeId, std::uint32_t>;

    CellId here() const;
    std::vector<CellId> tag_cells(const std::set<std::string>& tags) const;

    void start_cell_op(std::uint64_t op, std::set<CellId> cells, std::function<void(const std::set<CellId>&)> send);
    void cell_op_timeout(std::uint32_t id, int attempt);
    void on_ack(const msg::Ack& a);
    void send_ack(const geo::Delivery& d, std::uint32_t op);

    void on_delivery(const geo::Delivery& d, const sim::PayloadPtr& inner);
    void on_nack(const geo::Nack& n);
    void on_settle(CellId old_cell, CellId new_cell);

    void broker_publish(const geo::Delivery& d, const msg::Publish& m);
    void broker_subscribe(const geo::Delivery& d, const msg::SubscribeClause& m);
    void send_notify(const Subscription& sub, Notification n, bool past, std::uint32_t offset, CellId broker_cell);
    void on_notify(const msg::Notify& m);
    void request_more(std::uint32_t id_sub, CellId broker_cell);
    void fetch_attempt(std::uint32_t id_sub, CellId broker_cell, std::uint64_t generation);

    void start_download(const ObjectMetadata& md) override;
    void download_next(std::uint32_t req, std::uint64_t generation);
    void serve_download(const msg::DownloadRequest& r);
    void on_download_reply(const geo::Delivery& d, const msg::DownloadReply& r);

    void cell_join();
    void join_listen(int round, std::uint64_t generation);
    void on_join_reply(const msg::JoinReply& r);

    geo::GeoRouter router_;
    std::map<ObjectKey, HeldObject> objects_;
    std::map<std::uint32_t, CellOp> cell_ops_;
    std::uint32_t next_op_ = 1;
    std::map<std::uint32_t, std::vector<CellId>> sub_cells_;
    std::map<std::pair<std::uint32_t, CellId>, Fetch> fetches_;
    std::map<std::uint32_t, Download> downloads_;
    std::uint32_t next_req_ = 1;
    std::map<SubKey, Buffered> nack_buffer_;
    std::set<SubKey> dormant_;
    std::uint64_t join_generation_ = 0;
    std::uint64_t join_op_ = 0;
    bool join_waiting_ = false;
    CellId home_cell_;  // cell whose shared state this node holds
    bool rebooted_ = false;
};

}  // namespace thyme
