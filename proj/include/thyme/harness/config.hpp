#pragma once

// Run configuration: one flat key=value namespace shared by config files and
// CLI flags. docs/formats.md lists every key.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "thyme/node.hpp"
#include "thyme/route_flood.hpp"
#include "thyme/route_geo.hpp"
#include "thyme/simnet.hpp"

namespace thyme::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Materialization : std::uint8_t { Plsg, Dcs };
enum class ChurnMode : std::uint8_t { None, Permanent, Transient };

const char* to_string(Materialization m);
const char* to_string(ChurnMode m);

struct TraceParams {
    std::uint64_t seed = 1;
    int nodes = 100;
    int tags = 200;
    double zipf_s = 1.0;
    int tags_per_pub_max = 3;
    double publisher_fraction = 0.4;
    double sub_tag_fraction = 0.6;  // subscriptions draw uniformly from this share of the most popular tags
    double past_fraction = 0.6;
    bool multi_clause = false;
    std::size_t object_size = 140;

    // Rates are per node per hour of uncompressed event time.
    double pub_rate = 37.9;
    double sub_rate_first = 3;
    double sub_rate_second = 1;
    double sub_scale = 1.461;
    double unpub_rate = 0.5;
    double unsub_rate = 0.2;
    double unsub_scale = 0.833;

    double event_hours = 3;
    double compression = 18;
    double op_start = 60;  // simulated seconds

    DownloadMode download_mode = DownloadMode::Immediate;
    double download_probability = 0.5;

    double op_end() const { return op_start + event_hours * 3600 / compression; }
    void validate() const;
};

struct Config {
    Materialization materialization = Materialization::Plsg;
    int topology = 0;
    int run = 0;
    int topologies = 5;
    int runs_per_topology = 3;
    int workers = 0;  // 0: hardware concurrency

    ChurnMode churn = ChurnMode::None;
    double churn_fraction = 0;
    double crash_from = 200;
    double crash_to = 300;
    sim::TransientChurn transient;
    double transient_start = 60;

    bool mobility = false;
    sim::MobilityParams rwp;
    double mobile_fraction = 0.6;

    double cell_size = 40;

    sim::SimConfig sim;
    ThymeParams thyme;
    route::DsdvParams dsdv;
    geo::GeoParams geo;
    TraceParams trace;

    /// Applies one key=value; throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    void load(std::istream& in);
    void load_file(const std::string& path);
    void write(std::ostream& out) const;
    void validate() const;

    /// Fills the area from the node count when not set explicitly.
    void apply_defaults();
    static std::vector<std::string> keys();

    bool area_explicit = false;
};

/// The node-count/area pairs of the evaluation (about two nodes per cell).
std::pair<double, double> default_area(int nodes);

}  // namespace thyme::harness
