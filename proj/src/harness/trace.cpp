#include "thyme/harness/trace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "thyme/rng.hpp"

namespace thyme::harness {

const char* to_string(TraceOpKind k) {
    switch (k) {
        case TraceOpKind::Pub: return "PUB";
        case TraceOpKind::Unpub: return "UNPUB";
        case TraceOpKind::Sub: return "SUB";
        case TraceOpKind::Unsub: return "UNSUB";
        case TraceOpKind::DownloadPolicy: return "DLPOLICY";
    }
    return "?";
}

std::string tag_name(int rank) { return "t" + std::to_string(rank); }

std::string object_data(const std::string& id_obj, std::size_t size) {
    std::string out;
    out.reserve(size);
    std::uint64_t h = stable_hash(id_obj.data(), id_obj.size());
    while (out.size() < size) {
        h = splitmix64(h);
        out.push_back(static_cast<char>('a' + h % 26));
    }
    return out;
}

std::size_t Trace::count(TraceOpKind k) const {
    return static_cast<std::size_t>(std::count_if(ops.begin(), ops.end(), [k](const TraceOp& o) { return o.kind == k; }));
}

std::set<NodeId> Trace::publishers() const {
    std::set<NodeId> out;
    for (const auto& o : ops)
        if (o.kind == TraceOpKind::Pub) out.insert(o.node);
    return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

enum : std::uint64_t { kRoleStream = 0, kPubStream = 1, kSubStream = 2, kUnpubStream = 3, kUnsubStream = 4 };

std::vector<double> zipf_weights(int n, double s) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) w[static_cast<std::size_t>(r)] = 1.0 / std::pow(r + 1, s);
    return w;
}

/// Event instants of a Poisson process of `rate` per second over [from, to).
std::vector<double> arrivals(std::mt19937_64& rng, double rate, double from, double to) {
    std::vector<double> out;
    if (rate <= 0) return out;
    std::exponential_distribution<double> gap(rate);
    for (double t = from + gap(rng); t < to; t += gap(rng)) out.push_back(t);
    return out;
}

std::int64_t to_ms(double s) { return static_cast<std::int64_t>(std::floor(s * 1000)); }

std::string random_query(std::mt19937_64& rng, std::discrete_distribution<int>& pick) {
    std::uniform_int_distribution<int> nclauses(1, 3), nlits(1, 2);
    std::bernoulli_distribution neg(0.25);
    std::string out;
    const int k = nclauses(rng);
    for (int i = 0; i < k; ++i) {
        if (i) out += " | ";
        const int m = nlits(rng);
        for (int j = 0; j < m; ++j) {
            if (j) out += " & ";
            // The first literal stays positive so every clause has a key.
            if (j && neg(rng)) out += '!';
            out += tag_name(pick(rng));
        }
    }
    return out;
}

}  // namespace

Trace generate_trace(const TraceParams& p) {
    p.validate();
    Trace tr;
    tr.nodes = p.nodes;

    auto role_rng = make_rng(p.seed, kStreamTrace, kRoleStream);
    std::vector<std::uint32_t> order(static_cast<std::size_t>(p.nodes));
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), role_rng);
    const auto n_pub = static_cast<std::size_t>(std::lround(p.publisher_fraction * p.nodes));
    std::vector<bool> is_pub(order.size(), false);
    for (std::size_t i = 0; i < n_pub; ++i) is_pub[order[i]] = true;

    const auto weights = zipf_weights(p.tags, p.zipf_s);
    const int sub_tags = std::max(1, static_cast<int>(std::ceil(p.sub_tag_fraction * p.tags)));

    const double per_hour = p.compression / 3600.0;  // event-time hours per simulated second
    const double start = p.op_start, end = p.op_end(), mid = (start + end) / 2;

    for (std::uint32_t n = 0; n < order.size(); ++n) {
        const NodeId node{n};
        TraceOp pol;
        pol.time_ms = 0;
        pol.node = node;
        pol.kind = TraceOpKind::DownloadPolicy;
        pol.mode = p.download_mode;
        pol.probability = p.download_probability;
        tr.ops.push_back(pol);

        if (is_pub[n]) {
            auto rng = make_rng(p.seed, kStreamTrace, (std::uint64_t{n} << 8) | kPubStream);
            std::discrete_distribution<int> tag(weights.begin(), weights.end());
            std::uniform_int_distribution<int> ntags(1, p.tags_per_pub_max);
            std::vector<std::pair<std::int64_t, std::string>> published;
            int k = 0;
            for (double t : arrivals(rng, p.pub_rate * per_hour, start, end)) {
                TraceOp o;
                o.time_ms = to_ms(t);
                o.node = node;
                o.kind = TraceOpKind::Pub;
                o.id_obj = "o" + std::to_string(n) + "." + std::to_string(k++);
                const int want = std::min(ntags(rng), p.tags);
                while (static_cast<int>(o.tags.size()) < want) o.tags.insert(tag_name(tag(rng)));
                o.size = p.object_size;
                published.emplace_back(o.time_ms, o.id_obj);
                tr.ops.push_back(std::move(o));
            }
            auto urng = make_rng(p.seed, kStreamTrace, (std::uint64_t{n} << 8) | kUnpubStream);
            std::set<std::string> gone;
            for (double t : arrivals(urng, p.unpub_rate * per_hour, mid, end)) {
                const auto ms = to_ms(t);
                std::vector<std::string> live;
                for (const auto& [pt, id] : published)
                    if (pt < ms && !gone.count(id)) live.push_back(id);
                if (live.empty()) continue;
                std::uniform_int_distribution<std::size_t> which(0, live.size() - 1);
                TraceOp o;
                o.time_ms = ms;
                o.node = node;
                o.kind = TraceOpKind::Unpub;
                o.id_obj = live[which(urng)];
                gone.insert(o.id_obj);
                tr.ops.push_back(std::move(o));
            }
        } else {
            auto rng = make_rng(p.seed, kStreamTrace, (std::uint64_t{n} << 8) | kSubStream);
            // Uniform over the most popular tags.
            std::discrete_distribution<int> tag(static_cast<std::size_t>(sub_tags), 0.0, 1.0, [](double) { return 1.0; });
            std::bernoulli_distribution past(p.past_fraction);
            auto times = arrivals(rng, p.sub_rate_first * p.sub_scale * per_hour, start, mid);
            for (double t : arrivals(rng, p.sub_rate_second * p.sub_scale * per_hour, mid, end)) times.push_back(t);
            std::vector<std::pair<std::int64_t, std::uint32_t>> subscribed;
            std::uint32_t id = 0;
            for (double t : times) {
                TraceOp o;
                o.time_ms = to_ms(t);
                o.node = node;
                o.kind = TraceOpKind::Sub;
                o.id_sub = id++;
                if (!past(rng)) o.ts_start = Timestamp::at(o.time_ms);
                o.query = p.multi_clause ? random_query(rng, tag) : tag_name(tag(rng));
                subscribed.emplace_back(o.time_ms, o.id_sub);
                tr.ops.push_back(std::move(o));
            }
            auto urng = make_rng(p.seed, kStreamTrace, (std::uint64_t{n} << 8) | kUnsubStream);
            std::set<std::uint32_t> gone;
            for (double t : arrivals(urng, p.unsub_rate * p.unsub_scale * per_hour, mid, end)) {
                const auto ms = to_ms(t);
                std::vector<std::uint32_t> live;
                for (const auto& [st, sid] : subscribed)
                    if (st < ms && !gone.count(sid)) live.push_back(sid);
                if (live.empty()) continue;
                std::uniform_int_distribution<std::size_t> which(0, live.size() - 1);
                TraceOp o;
                o.time_ms = ms;
                o.node = node;
                o.kind = TraceOpKind::Unsub;
                o.id_sub = live[which(urng)];
                gone.insert(o.id_sub);
                tr.ops.push_back(std::move(o));
            }
        }
    }
    std::stable_sort(tr.ops.begin(), tr.ops.end(), [](const TraceOp& a, const TraceOp& b) {
        if (a.time_ms != b.time_ms) return a.time_ms < b.time_ms;
        return a.node < b.node;
    });
    return tr;
}

// ---------------------------------------------------------------------------
// File format

namespace {

std::string ts_field(Timestamp t) { return t.is_bottom() ? "-" : std::to_string(t.ms()); }

const char* mode_name(DownloadMode m) {
    switch (m) {
        case DownloadMode::Immediate: return "immediate";
        case DownloadMode::Discard: return "discard";
        case DownloadMode::Store: return "store";
    }
    return "?";
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t b = 0;
    while (true) {
        const auto e = line.find('\t', b);
        out.push_back(line.substr(b, e == std::string::npos ? std::string::npos : e - b));
        if (e == std::string::npos) break;
        b = e + 1;
    }
    return out;
}

std::int64_t to_int(const std::string& s, int line) {
    try {
        std::size_t used = 0;
        const auto v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw TraceError("line " + std::to_string(line) + ": bad integer '" + s + "'");
    }
}

Timestamp to_ts(const std::string& s, int line) {
    if (s == "-") return Timestamp::bottom();
    const auto v = to_int(s, line);
    if (v < 0) throw TraceError("line " + std::to_string(line) + ": negative timestamp");
    return Timestamp::at(v);
}

}  // namespace

void Trace::write(std::ostream& out) const {
    out << "# thyme-trace v1\n";
    out << "nodes\t" << nodes << '\n';
    for (const auto& o : ops) {
        out << o.time_ms << '\t' << o.node.value << '\t' << to_string(o.kind);
        switch (o.kind) {
            case TraceOpKind::Pub: {
                out << '\t' << o.id_obj << '\t' << o.size << '\t';
                bool first = true;
                for (const auto& t : o.tags) {
                    if (!first) out << ',';
                    out << t;
                    first = false;
                }
                break;
            }
            case TraceOpKind::Unpub: out << '\t' << o.id_obj; break;
            case TraceOpKind::Sub:
                out << '\t' << o.id_sub << '\t' << ts_field(o.ts_start) << '\t' << ts_field(o.ts_end) << '\t' << o.query;
                break;
            case TraceOpKind::Unsub: out << '\t' << o.id_sub; break;
            case TraceOpKind::DownloadPolicy: {
                std::ostringstream p;
                p.precision(6);
                p << o.probability;
                out << '\t' << mode_name(o.mode) << '\t' << p.str();
                break;
            }
        }
        out << '\n';
    }
}

Trace Trace::read(std::istream& in) {
    Trace tr;
    std::string line;
    int n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (n == 1 && line != "# thyme-trace v1") throw TraceError("unsupported trace version: " + line);
            continue;
        }
        const auto f = split_tabs(line);
        if (f[0] == "nodes") {
            if (f.size() != 2) throw TraceError("line " + std::to_string(n) + ": bad nodes line");
            tr.nodes = static_cast<int>(to_int(f[1], n));
            header = true;
            continue;
        }
        if (!header) throw TraceError("line " + std::to_string(n) + ": op before the nodes line");
        if (f.size() < 3) throw TraceError("line " + std::to_string(n) + ": too few fields");
        TraceOp o;
        o.time_ms = to_int(f[0], n);
        o.node = NodeId{static_cast<std::uint32_t>(to_int(f[1], n))};
        const auto& k = f[2];
        auto need = [&](std::size_t c) {
            if (f.size() != c) throw TraceError("line " + std::to_string(n) + ": " + k + " expects " + std::to_string(c) + " fields");
        };
        if (k == "PUB") {
            need(6);
            o.kind = TraceOpKind::Pub;
            o.id_obj = f[3];
            o.size = static_cast<std::size_t>(to_int(f[4], n));
            std::stringstream ss(f[5]);
            for (std::string t; std::getline(ss, t, ',');)
                if (!t.empty()) o.tags.insert(t);
        } else if (k == "UNPUB") {
            need(4);
            o.kind = TraceOpKind::Unpub;
            o.id_obj = f[3];
        } else if (k == "SUB") {
            need(7);
            o.kind = TraceOpKind::Sub;
            o.id_sub = static_cast<std::uint32_t>(to_int(f[3], n));
            o.ts_start = to_ts(f[4], n);
            o.ts_end = to_ts(f[5], n);
            o.query = f[6];
        } else if (k == "UNSUB") {
            need(4);
            o.kind = TraceOpKind::Unsub;
            o.id_sub = static_cast<std::uint32_t>(to_int(f[3], n));
        } else if (k == "DLPOLICY") {
            need(5);
            o.kind = TraceOpKind::DownloadPolicy;
            if (f[3] == "immediate") o.mode = DownloadMode::Immediate;
            else if (f[3] == "discard") o.mode = DownloadMode::Discard;
            else if (f[3] == "store") o.mode = DownloadMode::Store;
            else throw TraceError("line " + std::to_string(n) + ": unknown download mode " + f[3]);
            try {
                o.probability = std::stod(f[4]);
            } catch (const std::exception&) {
                throw TraceError("line " + std::to_string(n) + ": bad probability");
            }
        } else {
            throw TraceError("line " + std::to_string(n) + ": unknown op " + k);
        }
        tr.ops.push_back(std::move(o));
    }
    if (!header) throw TraceError("missing nodes line");
    return tr;
}

void Trace::validate(double op_start_s, double op_end_s) const {
    const auto lo = static_cast<std::int64_t>(op_start_s * 1000), hi = static_cast<std::int64_t>(op_end_s * 1000);
    std::int64_t prev = 0;
    for (const auto& o : ops) {
        if (o.node.value >= static_cast<std::uint32_t>(nodes))
            throw TraceError("op references node " + std::to_string(o.node.value) + " outside the trace's " +
                             std::to_string(nodes) + " nodes");
        if (o.time_ms < prev) throw TraceError("trace is not sorted by time");
        prev = o.time_ms;
        if (o.kind != TraceOpKind::DownloadPolicy && (o.time_ms < lo || o.time_ms > hi))
            throw TraceError("op at " + std::to_string(o.time_ms) + " ms outside the operation window");
        if (o.kind == TraceOpKind::Pub && o.tags.empty()) throw TraceError("publication " + o.id_obj + " without tags");
        if (o.kind == TraceOpKind::DownloadPolicy && (o.probability < 0 || o.probability > 1))
            throw TraceError("download probability outside [0,1]");
    }
}

}  // namespace thyme::harness
