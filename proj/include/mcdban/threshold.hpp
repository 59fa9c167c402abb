#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcdban {

enum class Metric { accuracy, precision, recall, f1 };

Metric metric_from_string(std::string_view name);
std::string to_string(Metric metric);

// Candidate decision thresholds lo, lo + step, ..., up to and including hi.
struct ThresholdGrid {
  double lo = 0.1;
  double hi = 0.9;
  double step = 0.001;

  void validate() const;
  // When 1/step and lo/step are integers (decimal grids such as 0.001), point
  // i is computed as (lo/step + i) / (1/step), which yields the double nearest
  // the decimal value instead of accumulating lo + i * step rounding error.
  std::vector<double> points() const;
};

struct MetricReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives
  double f1 = 0.0;         // 0 when precision + recall == 0

  std::size_t total() const { return tp + fp + tn + fn; }
  double value(Metric metric) const;
};

// Label 1 iff score >= t.
std::vector<int> apply_threshold(std::span<const double> scores, double t);

MetricReport metric_report(std::span<const int> predicted, std::span<const int> labels);
MetricReport metric_report(std::span<const double> scores, std::span<const int> labels, double t);

struct ThresholdChoice {
  double threshold = 0.5;
  double metric = 0.0;
};

// Exhaustive scan; the smallest grid threshold attaining the maximum wins.
ThresholdChoice search_threshold(std::span<const double> scores, std::span<const int> labels,
                                 Metric metric, const ThresholdGrid& grid = {});

struct SweepRow {
  double threshold = 0.0;
  MetricReport report;
};

std::vector<SweepRow> tradeoff_sweep(std::span<const double> scores, std::span<const int> labels,
                                     std::span<const double> thresholds);

// threshold,precision,accuracy,recall,f1
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace mcdban
