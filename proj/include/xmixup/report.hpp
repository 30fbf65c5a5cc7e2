#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "xmixup/experiment.hpp"

namespace xmixup {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

struct StrategySummary {
  std::string strategy;
  std::size_t runs = 0;
  MeanStd accuracy;
  MeanStd forgetting_aux;
  MeanStd forgetting_aba;
  MeanStd spectrum_tail_mean;
};

/// One row per strategy, ordered by name.
std::vector<StrategySummary> summarize(const std::vector<RunMetrics>& runs);

/// `strategy,seed,accuracy,forgetting_aux,forgetting_aba,spectrum_tail_mean`,
/// rows ordered by (strategy, seed).
void write_comparison_csv(std::vector<RunMetrics> runs, std::ostream& out);
std::vector<RunMetrics> read_comparison_csv(std::istream& in);

void write_summary_csv(const std::vector<StrategySummary>& rows, std::ostream& out);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log2_x = false;
};

/// Minimal standalone SVG line chart. Output depends only on the inputs.
std::string line_chart(const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace xmixup
