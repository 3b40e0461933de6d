#pragma once

// Operation traces: generation and the tab-separated file format
// (docs/formats.md).

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "thyme/core.hpp"
#include "thyme/harness/config.hpp"

namespace thyme::harness {

enum class TraceOpKind : std::uint8_t { Pub, Unpub, Sub, Unsub, DownloadPolicy };

const char* to_string(TraceOpKind k);

struct TraceOp {
    std::int64_t time_ms = 0;
    NodeId node;
    TraceOpKind kind = TraceOpKind::Pub;

    // PUB / UNPUB
    std::string id_obj;
    std::set<std::string> tags;
    std::size_t size = 0;
    // SUB / UNSUB
    std::uint32_t id_sub = 0;
    Timestamp ts_start;
    Timestamp ts_end;
    std::string query;
    // DLPOLICY
    DownloadMode mode = DownloadMode::Immediate;
    double probability = 0;

    bool operator==(const TraceOp&) const = default;
};

struct Trace {
    int nodes = 0;
    std::vector<TraceOp> ops;  // sorted by time_ms, stable

    std::size_t count(TraceOpKind k) const;
    /// Nodes that issue at least one publication.
    std::set<NodeId> publishers() const;

    void write(std::ostream& out) const;
    static Trace read(std::istream& in);
    void validate(double op_start_s, double op_end_s) const;
};

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Trace generate_trace(const TraceParams& p);

/// Tag name of popularity rank r (0 is the most popular).
std::string tag_name(int rank);

/// Deterministic object bytes for a publication.
std::string object_data(const std::string& id_obj, std::size_t size);

}  // namespace thyme::harness
