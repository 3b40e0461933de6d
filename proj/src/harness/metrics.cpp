#include "thyme/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "thyme/query.hpp"

namespace thyme::harness {

// ---------------------------------------------------------------------------
// Expected notifications

namespace {

bool eval(const query::Query& q, const std::set<std::string>& tags) {
    using K = query::Query::Kind;
    switch (q.kind) {
        case K::Literal: return tags.count(q.tag) != 0;
        case K::Not: return !eval(q.children.front(), tags);
        case K::And:
            return std::all_of(q.children.begin(), q.children.end(), [&](const query::Query& c) { return eval(c, tags); });
        case K::Or:
            return std::any_of(q.children.begin(), q.children.end(), [&](const query::Query& c) { return eval(c, tags); });
    }
    return false;
}

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

}  // namespace

std::vector<ExpectedPair> expected_pairs(const std::vector<IssuedOp>& issued) {
    struct Pub {
        const TraceOp* op;
        std::int64_t gone = kNever;
    };
    struct Sub {
        const TraceOp* op;
        query::Query q;
        std::int64_t gone = kNever;
    };
    std::map<ObjectKey, Pub> pubs;
    std::map<std::pair<NodeId, std::uint32_t>, Sub> subs;
    for (const auto& i : issued) {
        if (!i.accepted) continue;
        const auto& o = *i.op;
        switch (o.kind) {
            case TraceOpKind::Pub: pubs.emplace(ObjectKey{o.id_obj, o.node}, Pub{&o}); break;
            case TraceOpKind::Unpub: {
                auto it = pubs.find(ObjectKey{o.id_obj, o.node});
                if (it != pubs.end()) it->second.gone = std::min(it->second.gone, o.time_ms);
                break;
            }
            case TraceOpKind::Sub:
                try {
                    subs.emplace(std::make_pair(o.node, o.id_sub), Sub{&o, query::parse(o.query)});
                } catch (const query::SyntaxError&) {
                }
                break;
            case TraceOpKind::Unsub: {
                auto it = subs.find({o.node, o.id_sub});
                if (it != subs.end()) it->second.gone = std::min(it->second.gone, o.time_ms);
                break;
            }
            case TraceOpKind::DownloadPolicy: break;
        }
    }

    std::vector<ExpectedPair> out;
    for (const auto& [sk, s] : subs) {
        const auto& so = *s.op;
        const auto lo = so.ts_start.as_start(), hi = so.ts_end.as_end();
        for (const auto& [key, p] : pubs) {
            const auto& po = *p.op;
            if (po.time_ms < lo || po.time_ms > hi) continue;
            const auto due = std::max(po.time_ms, so.time_ms);
            if (p.gone <= due || s.gone <= due) continue;
            if (!eval(s.q, po.tags)) continue;
            out.push_back({so.node, so.id_sub, key, due});
        }
    }
    return out;
}

NotifyStats notification_stats(const RunResult& r) {
    NotifyStats st;
    const auto expected = expected_pairs(r.issued);
    st.expected = expected.size();
    using Key = std::tuple<NodeId, std::uint32_t, ObjectKey>;
    std::map<Key, std::int64_t> due;
    for (const auto& e : expected) due.emplace(Key{e.subscriber, e.id_sub, e.key}, e.due_ms);
    std::set<Key> seen;
    double sum = 0;
    for (const auto& n : r.log.notifications()) {
        Key k{n.node, n.id_sub, n.key};
        if (!seen.insert(k).second) continue;
        auto it = due.find(k);
        if (it == due.end()) {
            ++st.spurious;
            continue;
        }
        ++st.delivered;
        const double lat = std::max(0.0, sim::to_seconds(n.t) - static_cast<double>(it->second) / 1000.0);
        sum += lat;
        st.latency_max = std::max(st.latency_max, lat);
    }
    if (st.delivered) st.latency_avg = sum / static_cast<double>(st.delivered);
    return st;
}

OpStats op_stats(const EventLog& log, OpType type) {
    OpStats st;
    double sum = 0;
    for (const auto& o : log.ops()) {
        if (o.type != type) continue;
        ++st.count;
        if (!o.ok || o.end < 0) continue;
        ++st.ok;
        const double lat = sim::to_seconds(o.end - o.begin);
        sum += lat;
        st.latency_max = std::max(st.latency_max, lat);
    }
    if (st.ok) st.latency_avg = sum / static_cast<double>(st.ok);
    return st;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const std::pair<const char*, OpType> kOps[] = {
    {"publish", OpType::Publish},   {"unpublish", OpType::Unpublish}, {"subscribe", OpType::Subscribe},
    {"unsubscribe", OpType::Unsubscribe}, {"download", OpType::Download}, {"fetch_more", OpType::FetchMore},
};

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

}  // namespace

const std::vector<std::string>& key_columns() {
    static const std::vector<std::string> k = {"materialization", "nodes", "churn", "churn_fraction", "mobility", "v_max"};
    return k;
}

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = key_columns();
        for (const char* s : {"topology", "run", "seed", "phy_tx_bytes_total", "data_bytes_total", "ctrl_bytes_total",
                              "retx_bytes_total", "fwd_bytes_total", "mac_retx_total", "mac_fail_total", "frames_total"})
            c.emplace_back(s);
        for (const auto& [name, t] : kOps)
            for (const char* s : {"_count", "_success_ratio", "_latency_avg", "_latency_max"})
                c.push_back(std::string(name) + s);
        for (const char* s : {"notify_expected", "notify_delivered", "notify_spurious", "notify_success_ratio",
                              "notify_latency_avg", "notify_latency_max", "download_hops_avg", "download_meters_avg",
                              "notifications_sent", "notifications_undeliverable", "nacks", "route_drops",
                              "moving_forwards", "skipped_ops", "events"})
            c.emplace_back(s);
        return c;
    }();
    return cols;
}

std::string csv_header() {
    std::string h;
    for (const auto& c : csv_columns()) {
        if (!h.empty()) h += ',';
        h += c;
    }
    return h;
}

MetricsRow collect_metrics(const RunResult& r) {
    const auto& c = r.cfg;
    std::vector<std::string> v;
    v.emplace_back(to_string(c.materialization));
    v.push_back(std::to_string(r.nodes));
    v.emplace_back(to_string(c.churn));
    v.push_back(num(c.churn == ChurnMode::None ? 0.0 : c.churn_fraction));
    v.emplace_back(c.mobility ? "rwp" : "off");
    v.push_back(num(c.mobility ? c.rwp.v_max : 0.0));
    v.push_back(std::to_string(c.topology));
    v.push_back(std::to_string(c.run));
    v.push_back(std::to_string(c.sim.seed));
    const auto& t = r.totals;
    for (auto x : {t.phy_tx_bytes, t.data_bytes, t.ctrl_bytes, t.retx_bytes, t.fwd_bytes, t.mac_retx, t.mac_failures,
                   t.frames})
        v.push_back(std::to_string(x));
    for (const auto& [name, type] : kOps) {
        const auto s = op_stats(r.log, type);
        v.push_back(std::to_string(s.count));
        v.push_back(num(s.success_ratio()));
        v.push_back(num(s.latency_avg));
        v.push_back(num(s.latency_max));
    }
    const auto n = notification_stats(r);
    v.push_back(std::to_string(n.expected));
    v.push_back(std::to_string(n.delivered));
    v.push_back(std::to_string(n.spurious));
    v.push_back(num(n.success_ratio()));
    v.push_back(num(n.latency_avg));
    v.push_back(num(n.latency_max));
    double hops = 0, meters = 0;
    std::size_t ok = 0;
    for (const auto& o : r.log.ops())
        if (o.type == OpType::Download && o.ok) {
            hops += o.hops;
            meters += o.meters;
            ++ok;
        }
    v.push_back(num(ok ? hops / static_cast<double>(ok) : 0.0));
    v.push_back(num(ok ? meters / static_cast<double>(ok) : 0.0));
    v.push_back(std::to_string(r.log.notifications_sent));
    v.push_back(std::to_string(r.log.notifications_undeliverable));
    v.push_back(std::to_string(r.log.nacks_received));
    v.push_back(std::to_string(r.route_drops));
    v.push_back(std::to_string(r.moving_forwards));
    v.push_back(std::to_string(r.skipped_ops));
    v.push_back(std::to_string(r.events));
    return MetricsRow{std::move(v)};
}

double MetricsRow::get(const std::string& column) const {
    const auto& cols = csv_columns();
    const auto it = std::find(cols.begin(), cols.end(), column);
    if (it == cols.end()) throw std::out_of_range("no column " + column);
    return std::stod(values.at(static_cast<std::size_t>(it - cols.begin())));
}

std::string to_csv(const MetricsRow& row) {
    std::string out;
    for (const auto& v : row.values) {
        if (!out.empty()) out += ',';
        out += v;
    }
    return out;
}

std::vector<std::map<std::string, std::string>> read_csv(std::istream& in) {
    std::vector<std::map<std::string, std::string>> rows;
    std::string line;
    std::vector<std::string> header;
    auto split = [](const std::string& l) {
        std::vector<std::string> f;
        std::stringstream ss(l);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (!l.empty() && l.back() == ',') f.emplace_back();
        return f;
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header.empty()) {
            header = split(line);
            continue;
        }
        const auto f = split(line);
        if (f.size() != header.size()) throw std::runtime_error("CSV row has " + std::to_string(f.size()) +
                                                                " fields, header has " + std::to_string(header.size()));
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < f.size(); ++i) row[header[i]] = f[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Aggregation

std::pair<double, double> mean_stddev(const std::vector<double>& v) {
    if (v.empty()) return {0, 0};
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() == 1) return {m, 0};
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::vector<Aggregate> aggregate(const std::vector<std::map<std::string, std::string>>& rows) {
    const auto& keys = key_columns();
    std::map<std::vector<std::string>, std::vector<const std::map<std::string, std::string>*>> groups;
    std::vector<std::vector<std::string>> order;
    for (const auto& r : rows) {
        std::vector<std::string> k;
        for (const auto& c : keys) {
            auto it = r.find(c);
            if (it == r.end()) throw std::runtime_error("CSV lacks key column " + c);
            k.push_back(it->second);
        }
        auto [it, fresh] = groups.try_emplace(k);
        if (fresh) order.push_back(k);
        it->second.push_back(&r);
    }
    std::vector<Aggregate> out;
    for (const auto& k : order) {
        const auto& g = groups[k];
        Aggregate a;
        a.key = k;
        a.runs = g.size();
        for (const auto& [col, val] : *g.front()) {
            if (std::find(keys.begin(), keys.end(), col) != keys.end()) continue;
            if (col == "topology" || col == "run" || col == "seed") continue;
            std::vector<double> xs;
            for (const auto* r : g) xs.push_back(std::stod(r->at(col)));
            a.stats[col] = mean_stddev(xs);
        }
        out.push_back(std::move(a));
    }
    return out;
}

void write_aggregate(std::ostream& out, const std::vector<Aggregate>& aggs) {
    if (aggs.empty()) return;
    // Measurement columns in CSV order.
    std::vector<std::string> cols;
    for (const auto& c : csv_columns())
        if (aggs.front().stats.count(c)) cols.push_back(c);
    for (const auto& k : key_columns()) out << k << ',';
    out << "runs";
    for (const auto& c : cols) out << ',' << c << "_mean," << c << "_std";
    out << '\n';
    for (const auto& a : aggs) {
        for (const auto& k : a.key) out << k << ',';
        out << a.runs;
        for (const auto& c : cols) {
            const auto it = a.stats.find(c);
            const auto ms = it == a.stats.end() ? std::pair<double, double>{0, 0} : it->second;
            out << ',' << num(ms.first) << ',' << num(ms.second);
        }
        out << '\n';
    }
}

void write_report(std::ostream& out, const std::vector<std::map<std::string, std::string>>& aggregated,
                  const std::string& x, const std::string& y, const std::string& series) {
    std::map<double, std::map<std::string, std::pair<std::string, std::string>>> table;
    std::set<std::string> names;
    for (const auto& r : aggregated) {
        auto xi = r.find(x), si = r.find(series), mi = r.find(y + "_mean"), di = r.find(y + "_std");
        if (xi == r.end() || si == r.end() || mi == r.end() || di == r.end())
            throw std::runtime_error("aggregated CSV lacks " + x + ", " + series + " or " + y + "_mean/_std");
        table[std::stod(xi->second)][si->second] = {mi->second, di->second};
        names.insert(si->second);
    }
    out << "# " << x;
    for (const auto& n : names) out << ' ' << n << "_mean " << n << "_std";
    out << '\n';
    for (const auto& [xv, row] : table) {
        out << num(xv);
        for (const auto& n : names) {
            auto it = row.find(n);
            if (it == row.end())
                out << " NaN NaN";
            else
                out << ' ' << it->second.first << ' ' << it->second.second;
        }
        out << '\n';
    }
}

}  // namespace thyme::harness
