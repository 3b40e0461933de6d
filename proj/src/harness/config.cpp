#include "thyme/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace thyme::harness {

const char* to_string(Materialization m) { return m == Materialization::Plsg ? "plsg" : "dcs"; }

const char* to_string(ChurnMode m) {
    switch (m) {
        case ChurnMode::None: return "none";
        case ChurnMode::Permanent: return "permanent";
        case ChurnMode::Transient: return "transient";
    }
    return "?";
}

std::pair<double, double> default_area(int nodes) {
    switch (nodes) {
        case 16: return {160, 80};
        case 36: return {240, 120};
        case 64: return {320, 160};
        case 100: return {400, 200};
        case 144: return {480, 240};
        case 196: return {560, 280};
    }
    // Same density for other sizes: 2:1 aspect, 800 m^2 per node.
    const double h = std::sqrt(nodes * 800.0 / 2);
    return {2 * h, h};
}

namespace {

double parse_double(const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("bad number '" + v + "'");
    return out;
}

std::int64_t parse_int(const std::string& v) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("bad integer '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("bad boolean '" + v + "'");
}

std::string fmt(double d) {
    std::ostringstream s;
    s << std::setprecision(12) << d;
    return s.str();
}

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <class T>
Field num(T& (*ref)(Config&)) {
    Field f;
    f.set = [ref](Config& c, const std::string& v) {
        if constexpr (std::is_floating_point_v<T>)
            ref(c) = parse_double(v);
        else {
            const auto i = parse_int(v);
            if (std::is_unsigned_v<T> && i < 0) throw ConfigError("must be non-negative");
            ref(c) = static_cast<T>(i);
        }
    };
    f.get = [ref](const Config& c) {
        const T v = ref(const_cast<Config&>(c));
        if constexpr (std::is_floating_point_v<T>)
            return fmt(v);
        else
            return std::to_string(v);
    };
    return f;
}

Field flag(bool& (*ref)(Config&)) {
    return {[ref](Config& c, const std::string& v) { ref(c) = parse_bool(v); },
            [ref](const Config& c) { return std::string(ref(const_cast<Config&>(c)) ? "true" : "false"); }};
}

#define K(name, expr) \
    { name, num(+[](Config& c) -> auto& { return expr; }) }
#define B(name, expr) \
    { name, flag(+[](Config& c) -> bool& { return expr; }) }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t = {
            K("seed", c.sim.seed),
            K("topology", c.topology),
            K("run", c.run),
            K("topologies", c.topologies),
            K("runs_per_topology", c.runs_per_topology),
            K("workers", c.workers),
            K("radio_range", c.sim.radio_range),
            K("p_loss", c.sim.p_loss),
            K("mac_retries", c.sim.mac_retries),
            K("hop_latency", c.sim.hop_latency),
            K("bandwidth_bps", c.sim.bandwidth_bps),
            K("frame_overhead", c.sim.frame_overhead),
            K("mtu", c.sim.mtu),
            K("phy_frame_time", c.sim.phy_frame_time),
            K("mac_jitter", c.sim.mac_jitter),
            K("congestion_factor", c.sim.congestion_factor),
            K("congestion_cap", c.sim.congestion_cap),
            K("duration", c.sim.duration),
            K("join_start", c.sim.join_start),
            K("join_length", c.sim.join_length),
            K("cooldown", c.sim.cooldown),
            K("churn_fraction", c.churn_fraction),
            K("crash_from", c.crash_from),
            K("crash_to", c.crash_to),
            K("transient_on", c.transient.on_period),
            K("transient_off", c.transient.off_period),
            K("transient_p_switch", c.transient.p_switch),
            K("transient_start", c.transient_start),
            B("mobility", c.mobility),
            K("v_max", c.rwp.v_max),
            K("p_move", c.rwp.p_move),
            K("pause", c.rwp.pause),
            K("mobile_fraction", c.mobile_fraction),
            K("cell_size", c.cell_size),
            K("batch_n", c.thyme.batch_n),
            K("op_timeout", c.thyme.op_timeout),
            K("op_retries", c.thyme.op_retries),
            K("p_reply", c.thyme.p_reply),
            K("reply_window", c.thyme.reply_window),
            K("nack_hold", c.thyme.nack_hold),
            K("beacon_wait", c.thyme.beacon_wait),
            K("max_clauses", c.thyme.max_clauses),
            K("expiry_sweep", c.thyme.expiry_sweep),
            K("dsdv_interval", c.dsdv.update_interval),
            K("dsdv_holdtime", c.dsdv.holdtime),
            K("dsdv_ttl", c.dsdv.ttl),
            K("beacon_interval", c.geo.beacon_interval),
            K("beacon_timeout", c.geo.beacon_timeout),
            K("stationary_after", c.geo.stationary_after),
            K("geo_max_hops", c.geo.max_hops),
            K("geo_reroutes", c.geo.reroutes),
            K("trace_seed", c.trace.seed),
            K("nodes", c.trace.nodes),
            K("tags", c.trace.tags),
            K("zipf_s", c.trace.zipf_s),
            K("tags_per_pub_max", c.trace.tags_per_pub_max),
            K("publisher_fraction", c.trace.publisher_fraction),
            K("sub_tag_fraction", c.trace.sub_tag_fraction),
            K("past_fraction", c.trace.past_fraction),
            B("multi_clause", c.trace.multi_clause),
            K("object_size", c.trace.object_size),
            K("pub_rate", c.trace.pub_rate),
            K("sub_rate_first", c.trace.sub_rate_first),
            K("sub_rate_second", c.trace.sub_rate_second),
            K("sub_scale", c.trace.sub_scale),
            K("unpub_rate", c.trace.unpub_rate),
            K("unsub_rate", c.trace.unsub_rate),
            K("unsub_scale", c.trace.unsub_scale),
            K("event_hours", c.trace.event_hours),
            K("compression", c.trace.compression),
            K("op_start", c.trace.op_start),
            K("download_probability", c.trace.download_probability),
        };
        t["area_width"] = {[](Config& c, const std::string& v) {
                               c.sim.area_width = parse_double(v);
                               c.area_explicit = true;
                           },
                           [](const Config& c) { return fmt(c.sim.area_width); }};
        t["area_height"] = {[](Config& c, const std::string& v) {
                                c.sim.area_height = parse_double(v);
                                c.area_explicit = true;
                            },
                            [](const Config& c) { return fmt(c.sim.area_height); }};
        t["materialization"] = {[](Config& c, const std::string& v) {
                                    if (v == "plsg") c.materialization = Materialization::Plsg;
                                    else if (v == "dcs") c.materialization = Materialization::Dcs;
                                    else throw ConfigError("materialization must be plsg or dcs");
                                },
                                [](const Config& c) { return std::string(to_string(c.materialization)); }};
        t["churn"] = {[](Config& c, const std::string& v) {
                          if (v == "none") c.churn = ChurnMode::None;
                          else if (v == "permanent") c.churn = ChurnMode::Permanent;
                          else if (v == "transient") c.churn = ChurnMode::Transient;
                          else throw ConfigError("churn must be none, permanent or transient");
                      },
                      [](const Config& c) { return std::string(to_string(c.churn)); }};
        t["download_mode"] = {[](Config& c, const std::string& v) {
                                  if (v == "immediate") c.trace.download_mode = DownloadMode::Immediate;
                                  else if (v == "discard") c.trace.download_mode = DownloadMode::Discard;
                                  else if (v == "store") c.trace.download_mode = DownloadMode::Store;
                                  else throw ConfigError("download_mode must be immediate, discard or store");
                              },
                              [](const Config& c) {
                                  switch (c.trace.download_mode) {
                                      case DownloadMode::Immediate: return std::string("immediate");
                                      case DownloadMode::Discard: return std::string("discard");
                                      case DownloadMode::Store: return std::string("store");
                                  }
                                  return std::string("?");
                              }};
        return t;
    }();
    return table;
}

#undef K
#undef B

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
    const auto& t = fields();
    auto it = t.find(key);
    if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
        it->second.set(*this, value);
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

void Config::load(std::istream& in) {
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    load(in);
}

void Config::write(std::ostream& out) const {
    for (const auto& [k, f] : fields()) out << k << " = " << f.get(*this) << '\n';
}

std::vector<std::string> Config::keys() {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
}

void Config::apply_defaults() {
    if (!area_explicit) std::tie(sim.area_width, sim.area_height) = default_area(trace.nodes);
    thyme.seed = sim.seed;
}

void TraceParams::validate() const {
    if (nodes <= 0) throw ConfigError("nodes must be positive");
    if (tags <= 0) throw ConfigError("tags must be positive");
    if (tags_per_pub_max < 1) throw ConfigError("tags_per_pub_max must be at least 1");
    if (publisher_fraction < 0 || publisher_fraction > 1) throw ConfigError("publisher_fraction outside [0,1]");
    if (sub_tag_fraction <= 0 || sub_tag_fraction > 1) throw ConfigError("sub_tag_fraction outside (0,1]");
    if (past_fraction < 0 || past_fraction > 1) throw ConfigError("past_fraction outside [0,1]");
    if (download_probability < 0 || download_probability > 1) throw ConfigError("download_probability outside [0,1]");
    for (double r : {pub_rate, sub_rate_first, sub_rate_second, sub_scale, unpub_rate, unsub_rate, unsub_scale})
        if (r < 0) throw ConfigError("rates must be non-negative");
    if (event_hours <= 0 || compression <= 0) throw ConfigError("event_hours and compression must be positive");
    if (op_start < 0) throw ConfigError("op_start must be non-negative");
}

void Config::validate() const {
    try {
        sim.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    trace.validate();
    if (topology < 0 || run < 0 || topologies < 1 || runs_per_topology < 1)
        throw ConfigError("topology/run indices out of range");
    if (churn_fraction < 0 || churn_fraction > 1) throw ConfigError("churn_fraction outside [0,1]");
    if (crash_from > crash_to) throw ConfigError("crash_from after crash_to");
    if (mobile_fraction < 0 || mobile_fraction > 1) throw ConfigError("mobile_fraction outside [0,1]");
    if (rwp.v_max <= 0) throw ConfigError("v_max must be positive");
    if (cell_size <= 0) throw ConfigError("cell_size must be positive");
    if (thyme.op_retries < 0 || thyme.op_timeout <= 0) throw ConfigError("bad operation retry settings");
    if (thyme.batch_n == 0) throw ConfigError("batch_n must be positive");
    if (trace.op_end() > sim.duration) throw ConfigError("operation window ends after the run");
}

}  // namespace thyme::harness
