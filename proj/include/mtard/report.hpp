#pragma once

#include <string>
#include <vector>

#include "mtard/metrics.hpp"

namespace mtard {

struct ChartSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Minimal line chart: axes, per-series polyline plus one circle marker per
/// sample point, legend in the top-right corner.
std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<ChartSeries>& series);

/// CSV with one row per record; NaN snapshot fields are left empty.
std::string metrics_to_csv(const std::vector<MetricRecord>& history);

/// Renders the standard chart set (losses, relative losses, entropies,
/// temperatures, weights, accuracy) for one or more labeled runs and writes
/// per-run CSV tables. Returns the list of files written (relative to out_dir).
std::vector<std::string> write_report(const std::vector<std::pair<std::string, std::vector<MetricRecord>>>& runs,
                                      const std::string& out_dir);

}  // namespace mtard
