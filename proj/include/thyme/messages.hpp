#pragma once

// Application messages of both materializations. Each starts with a one-byte
// type tag; sizes follow docs/wire-format.md.

#include <cstdint>
#include <string>
#include <vector>

#include "thyme/core.hpp"
#include "thyme/query.hpp"
#include "thyme/simnet.hpp"
#include "thyme/store.hpp"

namespace thyme::msg {

inline constexpr std::size_t kTag = 1;

inline std::size_t clauses_size(const std::vector<query::Conjunction>& cs) {
    std::size_t n = 1;
    for (const auto& c : cs) n += query::wire_size(c);
    return n;
}

inline std::size_t record_size(const SubscriptionRecord& r) { return wire_size(r.subscription) + clauses_size(r.clauses); }

inline std::size_t record_size(const PublicationRecord& r) {
    return wire_size(r.metadata) + 1 + wire_size(r.data);
}

// --- PL/SG ---------------------------------------------------------------------

struct Subscribe final : sim::Payload {
    Subscription sub;
    std::vector<query::Conjunction> clauses;
    std::size_t wire_size() const override { return kTag + thyme::wire_size(sub) + clauses_size(clauses); }
};

struct Unsubscribe final : sim::Payload {
    NodeId owner;
    std::uint32_t id_sub = 0;
    std::size_t wire_size() const override { return kTag + kNodeIdBytes + 4; }
};

/// Notification from a publisher (PL/SG) or broker (DCS). Past batches carry
/// the stream offset of their first match so the subscriber can resume.
struct Notify final : sim::Payload {
    NodeId from;
    CellId broker_cell;  // DCS: addressed broker cell of the clause; unused in PL/SG
    bool past = false;
    std::uint32_t offset = 0;
    Notification n;
    std::size_t wire_size() const override {
        return kTag + kNodeIdBytes + kCellIdBytes + 1 + 4 + thyme::wire_size(n);
    }
};

struct FetchMore final : sim::Payload {
    NodeId owner;
    std::uint32_t id_sub = 0;
    std::uint32_t offset = 0;
    CellId broker_cell;
    std::size_t wire_size() const override { return kTag + kNodeIdBytes + 4 + 4 + kCellIdBytes; }
};

struct DownloadRequest final : sim::Payload {
    NodeId requester;
    CellId requester_cell;
    std::uint32_t req_id = 0;
    ObjectKey key;
    std::size_t wire_size() const override { return kTag + kNodeIdBytes + kCellIdBytes + 4 + thyme::wire_size(key); }
};

struct DownloadReply final : sim::Payload {
    NodeId from;
    std::uint32_t req_id = 0;
    ObjectKey key;
    bool found = false;
    std::string data;
    std::size_t wire_size() const override {
        return kTag + kNodeIdBytes + 4 + thyme::wire_size(key) + 1 + thyme::wire_size(data);
    }
};

struct JoinRequest final : sim::Payload {
    NodeId joiner;
    std::size_t wire_size() const override { return kTag + kNodeIdBytes; }
};

/// PL/SG: the responder's subscriptions. DCS: the responder's cell state.
struct JoinReply final : sim::Payload {
    NodeId from;
    std::vector<SubscriptionRecord> subs;
    std::vector<PublicationRecord> pubs;     // DCS broker entries (metadata only)
    std::vector<PublicationRecord> objects;  // DCS active replicas (with bytes)
    std::size_t wire_size() const override {
        std::size_t n = kTag + kNodeIdBytes + 3 * 4;
        for (const auto& s : subs) n += record_size(s);
        for (const auto& p : pubs) n += record_size(p);
        for (const auto& o : objects) n += record_size(o);
        return n;
    }
};

// --- DCS -----------------------------------------------------------------------

struct Publish final : sim::Payload {
    std::uint32_t op = 0;
    ObjectMetadata md;
    std::size_t wire_size() const override { return kTag + 4 + thyme::wire_size(md); }
};

/// Active replication inside the publisher's cell.
struct ReplicaPut final : sim::Payload {
    ObjectMetadata md;
    std::string data;
    std::size_t wire_size() const override { return kTag + thyme::wire_size(md) + thyme::wire_size(data); }
};

/// Removes metadata at tag cells and active replicas at the publisher's cell.
struct Unpublish final : sim::Payload {
    std::uint32_t op = 0;
    ObjectKey key;
    CellId active_cell;
    std::size_t wire_size() const override { return kTag + 4 + thyme::wire_size(key) + kCellIdBytes; }
};

/// The clauses of one subscription whose keys hash to the addressed cell.
struct SubscribeClause final : sim::Payload {
    std::uint32_t op = 0;
    Subscription sub;
    std::vector<query::Conjunction> clauses;
    std::size_t wire_size() const override { return kTag + 4 + thyme::wire_size(sub) + clauses_size(clauses); }
};

struct UnsubscribeClause final : sim::Payload {
    std::uint32_t op = 0;
    NodeId owner;
    std::uint32_t id_sub = 0;
    std::size_t wire_size() const override { return kTag + 4 + kNodeIdBytes + 4; }
};

/// Per-cell acknowledgement of a DCS operation.
struct Ack final : sim::Payload {
    std::uint32_t op = 0;
    std::vector<CellId> cells;
    std::size_t wire_size() const override { return kTag + 4 + 1 + kCellIdBytes * cells.size(); }
};

struct LocationUpdate final : sim::Payload {
    NodeId owner;
    CellId cell;
    std::vector<std::uint32_t> subs;
    std::size_t wire_size() const override { return kTag + kNodeIdBytes + kCellIdBytes + 1 + 4 * subs.size(); }
};

/// New (or moved) replicas held by `node`, sent to the objects' tag cells.
struct ReplicaAnnounce final : sim::Payload {
    std::vector<ObjectKey> keys;
    NodeId node;
    CellId cell;
    std::size_t wire_size() const override {
        std::size_t n = kTag + kNodeIdBytes + kCellIdBytes + 2;
        for (const auto& k : keys) n += thyme::wire_size(k);
        return n;
    }
};

}  // namespace thyme::msg
