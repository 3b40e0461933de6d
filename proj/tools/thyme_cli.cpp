#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "thyme/harness/config.hpp"
#include "thyme/harness/metrics.hpp"
#include "thyme/harness/scenario.hpp"
#include "thyme/harness/trace.hpp"

using namespace thyme::harness;

namespace {

struct Common {
    std::string config_file;
    std::map<std::string, std::optional<std::string>> keys;
    std::vector<std::string> sets;
};

void add_config_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_file, "key=value configuration file");
    cmd->add_option("--set", c.sets, "override as key=value (repeatable)");
    for (const auto& k : Config::keys()) {
        auto& slot = c.keys[k];
        std::string dashed = k;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        std::string names = "--" + k;
        if (dashed != k) names += ",--" + dashed;
        cmd->add_option_function<std::string>(names, [&slot](const std::string& v) { slot = v; }, "config key " + k)
            ->group("Config keys");
    }
}

Config build_config(const Common& c) {
    Config cfg;
    if (!c.config_file.empty()) cfg.load_file(c.config_file);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : c.keys)
        if (v) cfg.set(k, *v);
    cfg.apply_defaults();
    cfg.validate();
    return cfg;
}

Trace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TraceError("cannot open trace " + path);
    return Trace::read(in);
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw ConfigError("cannot write " + path);
    return file;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    for (std::string x; std::getline(ss, x, ',');) {
        if (x.empty()) continue;
        std::istringstream xs(x);
        T v;
        if (!(xs >> v) || !xs.eof()) throw ConfigError("bad list element '" + x + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::map<std::string, std::string>> load_csv(const std::string& path) {
    if (path.empty() || path == "-") return read_csv(std::cin);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return read_csv(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-aware pub/sub over simulated wireless edge networks"};
    app.require_subcommand(1);

    Common gen_c, run_c, sweep_c;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-trace", "generate an operation trace");
    gen->add_option("-o,--out", gen_out, "output file (default stdout)");
    add_config_flags(gen, gen_c);

    std::string run_trace, run_out;
    bool run_no_header = false;
    auto* run = app.add_subcommand("run", "run one scenario and print its CSV row");
    run->add_option("-t,--trace", run_trace, "trace file (default: generate from the config)");
    run->add_option("-o,--out", run_out, "output CSV (default stdout)");
    run->add_flag("--no-header", run_no_header, "omit the CSV header");
    add_config_flags(run, run_c);

    std::string sweep_nodes = "16,36,64,100", sweep_mats = "plsg,dcs", sweep_fracs, sweep_speeds, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "run the node-count x scenario grid, all topologies and runs");
    sweep->add_option("--node-counts", sweep_nodes, "comma-separated node counts")->capture_default_str();
    sweep->add_option("--materializations", sweep_mats, "comma-separated: plsg,dcs")->capture_default_str();
    sweep->add_option("--fractions", sweep_fracs, "comma-separated churn fractions (with --churn)");
    sweep->add_option("--speeds", sweep_speeds, "comma-separated v_max values (enables mobility)");
    sweep->add_option("-o,--out", sweep_out, "output CSV (default stdout)");
    add_config_flags(sweep, sweep_c);

    std::string agg_in, agg_out;
    auto* agg = app.add_subcommand("aggregate", "mean and stddev per data point");
    agg->add_option("-i,--in", agg_in, "run CSV (default stdin)");
    agg->add_option("-o,--out", agg_out, "output CSV (default stdout)");

    std::string rep_in, rep_x = "nodes", rep_y = "phy_tx_bytes_total", rep_series = "materialization";
    auto* rep = app.add_subcommand("report", "aggregated CSV to gnuplot columns");
    rep->add_option("-i,--in", rep_in, "aggregated CSV (default stdin)");
    rep->add_option("-x", rep_x, "x column")->capture_default_str();
    rep->add_option("-y", rep_y, "measured column")->capture_default_str();
    rep->add_option("--series", rep_series, "column splitting series")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            const auto cfg = build_config(gen_c);
            std::ofstream f;
            generate_trace(cfg.trace).write(open_out(gen_out, f));
        } else if (*run) {
            const auto cfg = build_config(run_c);
            const Trace trace = run_trace.empty() ? generate_trace(cfg.trace) : load_trace(run_trace);
            const auto res = run_scenario(cfg, trace);
            std::ofstream f;
            auto& out = open_out(run_out, f);
            if (!run_no_header) out << csv_header() << '\n';
            out << to_csv(collect_metrics(res)) << '\n';
        } else if (*sweep) {
            const auto base = build_config(sweep_c);
            const auto counts = parse_list<int>(sweep_nodes);
            std::vector<Materialization> mats;
            for (const auto& m : parse_list<std::string>(sweep_mats)) {
                Config tmp;
                tmp.set("materialization", m);
                mats.push_back(tmp.materialization);
            }
            auto fracs = parse_list<double>(sweep_fracs);
            if (fracs.empty()) fracs.push_back(base.churn_fraction);
            auto speeds = parse_list<double>(sweep_speeds);

            std::vector<Trace> traces;
            std::vector<Config> jobs;
            std::vector<std::size_t> job_trace;
            for (int n : counts) {
                Config c = base;
                c.trace.nodes = n;
                if (!base.area_explicit) std::tie(c.sim.area_width, c.sim.area_height) = default_area(n);
                traces.push_back(generate_trace(c.trace));
                for (double fr : fracs)
                    for (std::size_t s = 0; s < std::max<std::size_t>(1, speeds.size()); ++s)
                        for (auto m : mats)
                            for (int t = 0; t < base.topologies; ++t)
                                for (int r = 0; r < base.runs_per_topology; ++r) {
                                    Config j = c;
                                    j.churn_fraction = fr;
                                    if (!speeds.empty()) {
                                        j.mobility = true;
                                        j.rwp.v_max = speeds[s];
                                    }
                                    j.materialization = m;
                                    j.topology = t;
                                    j.run = r;
                                    j.area_explicit = true;
                                    j.validate();
                                    jobs.push_back(j);
                                    job_trace.push_back(traces.size() - 1);
                                }
            }

            std::vector<std::string> rows(jobs.size());
            std::atomic<std::size_t> next{0};
            std::mutex err_mu;
            std::exception_ptr err;
            const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
            const unsigned workers = base.workers > 0 ? static_cast<unsigned>(base.workers) : hw;
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < std::min<std::size_t>(workers, jobs.size()); ++w)
                pool.emplace_back([&] {
                    for (std::size_t i; (i = next++) < jobs.size();) {
                        try {
                            rows[i] = to_csv(collect_metrics(run_scenario(jobs[i], traces[job_trace[i]])));
                        } catch (...) {
                            std::lock_guard<std::mutex> lk(err_mu);
                            if (!err) err = std::current_exception();
                        }
                    }
                });
            for (auto& t : pool) t.join();
            if (err) std::rethrow_exception(err);

            std::ofstream f;
            auto& out = open_out(sweep_out, f);
            out << csv_header() << '\n';
            for (const auto& r : rows) out << r << '\n';
        } else if (*agg) {
            const auto rows = load_csv(agg_in);
            std::ofstream f;
            write_aggregate(open_out(agg_out, f), aggregate(rows));
        } else if (*rep) {
            write_report(std::cout, load_csv(rep_in), rep_x, rep_y, rep_series);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const TraceError& e) {
        std::cerr << "trace error: " << e.what() << '\n';
        return 1;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violated: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
