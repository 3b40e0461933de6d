#pragma once

// Metrics derived from a run's event log, the CSV row schema, and the
// aggregation of rows into mean/stddev per data point.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "thyme/harness/scenario.hpp"

namespace thyme::harness {

/// A (subscription, object) pair the workload implies must be notified.
struct ExpectedPair {
    NodeId subscriber;
    std::uint32_t id_sub;
    ObjectKey key;
    std::int64_t due_ms;  // when the match becomes detectable: max(publish, subscribe)
};

/// Ground truth from the issued ops alone: tag match, time frame, and
/// unpublish/unsubscribe ordering.
std::vector<ExpectedPair> expected_pairs(const std::vector<IssuedOp>& issued);

struct OpStats {
    std::size_t count = 0;
    std::size_t ok = 0;
    double latency_avg = 0;  // seconds, over successful ops
    double latency_max = 0;
    double success_ratio() const { return count ? static_cast<double>(ok) / static_cast<double>(count) : 1.0; }
};

struct NotifyStats {
    std::size_t expected = 0;
    std::size_t delivered = 0;
    std::size_t spurious = 0;  // first-time notifications outside the expected set
    double latency_avg = 0;
    double latency_max = 0;
    double success_ratio() const {
        return expected ? static_cast<double>(delivered) / static_cast<double>(expected) : 1.0;
    }
};

NotifyStats notification_stats(const RunResult& r);
OpStats op_stats(const EventLog& log, OpType type);

/// One CSV row: column order is csv_columns().
struct MetricsRow {
    std::vector<std::string> values;
    double get(const std::string& column) const;
};

const std::vector<std::string>& csv_columns();
/// Columns identifying the data point (everything else is a measurement).
const std::vector<std::string>& key_columns();
std::string csv_header();

MetricsRow collect_metrics(const RunResult& r);
std::string to_csv(const MetricsRow& row);

/// Parses a CSV produced by write_csv (header line plus rows).
std::vector<std::map<std::string, std::string>> read_csv(std::istream& in);

struct Aggregate {
    std::vector<std::string> key;  // values of key_columns()
    std::size_t runs = 0;
    std::map<std::string, std::pair<double, double>> stats;  // column -> (mean, sample stddev)
};

std::vector<Aggregate> aggregate(const std::vector<std::map<std::string, std::string>>& rows);
void write_aggregate(std::ostream& out, const std::vector<Aggregate>& aggs);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_stddev(const std::vector<double>& v);

/// gnuplot-style table: one line per x value, mean/stddev columns per series.
void write_report(std::ostream& out, const std::vector<std::map<std::string, std::string>>& aggregated,
                  const std::string& x, const std::string& y, const std::string& series);

}  // namespace thyme::harness
