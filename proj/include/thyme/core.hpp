#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace thyme {

/// Globally unique node identifier. Nodes of a run are numbered 0..N-1.
struct NodeId {
    std::uint32_t value = 0;

    constexpr NodeId() = default;
    constexpr explicit NodeId(std::uint32_t v) : value(v) {}

    friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

inline constexpr NodeId kNoNode{std::numeric_limits<std::uint32_t>::max()};

/// Grid cell coordinates; cell (0,0) is the south-west corner of the area.
struct CellId {
    int col = 0;
    int row = 0;

    friend constexpr auto operator<=>(const CellId&, const CellId&) = default;
};

/// Application-level timestamp in simulated milliseconds since run start,
/// or bottom (the unbounded start/end of the system's lifetime).
class Timestamp {
public:
    constexpr Timestamp() = default;

    static constexpr Timestamp bottom() { return Timestamp{}; }
    static constexpr Timestamp at(std::int64_t ms) {
        if (ms < 0) throw std::invalid_argument("negative timestamp");
        Timestamp t;
        t.ms_ = ms;
        return t;
    }

    constexpr bool is_bottom() const { return ms_ < 0; }
    constexpr std::int64_t ms() const { return ms_; }

    /// Value used when this timestamp opens a time frame.
    constexpr std::int64_t as_start() const { return is_bottom() ? 0 : ms_; }
    /// Value used when this timestamp closes a time frame.
    constexpr std::int64_t as_end() const {
        return is_bottom() ? std::numeric_limits<std::int64_t>::max() : ms_;
    }

    friend constexpr bool operator==(Timestamp, Timestamp) = default;

private:
    std::int64_t ms_ = -1;
};

struct ObjectKey {
    std::string id_obj;
    NodeId owner;

    friend auto operator<=>(const ObjectKey&, const ObjectKey&) = default;
};

struct ReplicaLocation {
    NodeId node;
    CellId cell;

    friend auto operator<=>(const ReplicaLocation&, const ReplicaLocation&) = default;
};

struct ObjectMetadata {
    ObjectKey key;
    std::set<std::string> tags;
    std::string summary;
    Timestamp ts_pub;
    std::vector<ReplicaLocation> replicas;  // empty in PL/SG

    bool operator==(const ObjectMetadata&) const = default;
};

struct Subscription {
    std::uint32_t id_sub = 0;
    std::string query;  // textual query, see query.hpp for the grammar
    Timestamp ts_start;
    Timestamp ts_end;
    NodeId owner;
    std::optional<CellId> cell_owner;

    bool operator==(const Subscription&) const = default;
};

struct Notification {
    std::uint32_t id_sub = 0;
    std::vector<ObjectMetadata> matches;
    bool has_more = false;
    std::size_t total_available = 0;
};

/// Closed time frame check with bottom resolved to system start / end.
bool time_frame_contains(const Subscription& sub, Timestamp ts);

/// Validates the tuple invariants of metadata and subscriptions; throws
/// std::invalid_argument on violation.
void validate(const ObjectMetadata& md);
void validate(const Subscription& sub);

// ---------------------------------------------------------------------------
// Wire encoding. All integers are little-endian fixed width; strings carry a
// u16 length prefix; sets and lists carry a u8 (tags, replicas) or u16
// (matches) count prefix. docs/wire-format.md has the full layout.

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void str(const std::string& s);
    void cell(CellId c);
    void timestamp(Timestamp t);

    const std::string& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::string buf_;
};

inline constexpr std::size_t kNodeIdBytes = 4;
inline constexpr std::size_t kCellIdBytes = 2;
inline constexpr std::size_t kTimestampBytes = 8;

std::size_t wire_size(const std::string& s);
std::size_t wire_size(const ObjectKey& k);
std::size_t wire_size(const ObjectMetadata& md);
std::size_t wire_size(const Subscription& sub);
std::size_t wire_size(const Notification& n);

void encode(ByteWriter& w, const ObjectKey& k);
void encode(ByteWriter& w, const ObjectMetadata& md);
void encode(ByteWriter& w, const Subscription& sub);
void encode(ByteWriter& w, const Notification& n);

}  // namespace thyme

template <>
struct std::hash<thyme::NodeId> {
    std::size_t operator()(thyme::NodeId n) const noexcept { return std::hash<std::uint32_t>{}(n.value); }
};

template <>
struct std::hash<thyme::CellId> {
    std::size_t operator()(thyme::CellId c) const noexcept {
        return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.col)) << 32) |
                                          static_cast<std::uint32_t>(c.row));
    }
};

template <>
struct std::hash<thyme::ObjectKey> {
    std::size_t operator()(const thyme::ObjectKey& k) const noexcept {
        return std::hash<std::string>{}(k.id_obj) * 31u + k.owner.value;
    }
};
