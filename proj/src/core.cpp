#include "thyme/core.hpp"

#include <algorithm>

namespace thyme {

bool time_frame_contains(const Subscription& sub, Timestamp ts) {
    if (ts.is_bottom()) throw std::invalid_argument("time_frame_contains needs a concrete timestamp");
    return sub.ts_start.as_start() <= ts.ms() && ts.ms() <= sub.ts_end.as_end();
}

void validate(const ObjectMetadata& md) {
    if (md.tags.empty()) throw std::invalid_argument("object metadata needs at least one tag");
    if (md.ts_pub.is_bottom()) throw std::invalid_argument("publication timestamp must be concrete");
}

void validate(const Subscription& sub) {
    if (!sub.ts_start.is_bottom() && !sub.ts_end.is_bottom() && sub.ts_start.ms() > sub.ts_end.ms())
        throw std::invalid_argument("subscription time frame starts after it ends");
    if (sub.query.empty()) throw std::invalid_argument("empty subscription query");
}

void ByteWriter::u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
}

void ByteWriter::u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
}

void ByteWriter::str(const std::string& s) {
    if (s.size() > 0xffff) throw std::length_error("string too long for wire encoding");
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.append(s);
}

void ByteWriter::cell(CellId c) {
    u8(static_cast<std::uint8_t>(c.col));
    u8(static_cast<std::uint8_t>(c.row));
}

void ByteWriter::timestamp(Timestamp t) {
    u64(t.is_bottom() ? ~std::uint64_t{0} : static_cast<std::uint64_t>(t.ms()));
}

std::size_t wire_size(const std::string& s) { return 2 + s.size(); }

std::size_t wire_size(const ObjectKey& k) { return wire_size(k.id_obj) + kNodeIdBytes; }

std::size_t wire_size(const ObjectMetadata& md) {
    std::size_t n = wire_size(md.key) + 1;
    for (const auto& t : md.tags) n += wire_size(t);
    n += wire_size(md.summary) + kTimestampBytes;
    n += 1 + md.replicas.size() * (kNodeIdBytes + kCellIdBytes);
    return n;
}

std::size_t wire_size(const Subscription& sub) {
    return 4 + wire_size(sub.query) + 2 * kTimestampBytes + kNodeIdBytes + 1 +
           (sub.cell_owner ? kCellIdBytes : 0);
}

std::size_t wire_size(const Notification& n) {
    std::size_t s = 4 + 2;
    for (const auto& m : n.matches) s += wire_size(m);
    return s + 1 + 4;
}

void encode(ByteWriter& w, const ObjectKey& k) {
    w.str(k.id_obj);
    w.u32(k.owner.value);
}

void encode(ByteWriter& w, const ObjectMetadata& md) {
    encode(w, md.key);
    w.u8(static_cast<std::uint8_t>(md.tags.size()));
    for (const auto& t : md.tags) w.str(t);
    w.str(md.summary);
    w.timestamp(md.ts_pub);
    w.u8(static_cast<std::uint8_t>(md.replicas.size()));
    for (const auto& r : md.replicas) {
        w.u32(r.node.value);
        w.cell(r.cell);
    }
}

void encode(ByteWriter& w, const Subscription& sub) {
    w.u32(sub.id_sub);
    w.str(sub.query);
    w.timestamp(sub.ts_start);
    w.timestamp(sub.ts_end);
    w.u32(sub.owner.value);
    w.u8(sub.cell_owner ? 1 : 0);
    if (sub.cell_owner) w.cell(*sub.cell_owner);
}

void encode(ByteWriter& w, const Notification& n) {
    w.u32(n.id_sub);
    w.u16(static_cast<std::uint16_t>(n.matches.size()));
    for (const auto& m : n.matches) encode(w, m);
    w.u8(n.has_more ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(n.total_available));
}

}  // namespace thyme
