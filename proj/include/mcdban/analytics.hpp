#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mcdban/mcd.hpp"

namespace mcdban {

inline constexpr double kDefaultVarianceThreshold = 0.1;

struct CertaintyPartition {
  std::vector<std::uint64_t> certain;
  std::vector<std::uint64_t> uncertain;
};

// Uncertain iff variance > threshold (strict).
CertaintyPartition partition_by_variance(const DistributionSet& set,
                                         double threshold = kDefaultVarianceThreshold);

// For single-score models: the k instances whose score is farthest from both
// 0 and 1 (largest min(p, 1 - p)) are uncertain; ties go to the smaller id.
CertaintyPartition partition_point_estimates(std::span<const std::uint64_t> ids,
                                             std::span<const double> scores, std::size_t k);

// Correct/incorrect x certain/uncertain counts.
struct ContingencyTable {
  std::size_t certain_correct = 0;
  std::size_t certain_incorrect = 0;
  std::size_t uncertain_correct = 0;
  std::size_t uncertain_incorrect = 0;

  std::size_t total() const {
    return certain_correct + certain_incorrect + uncertain_correct + uncertain_incorrect;
  }
};

ContingencyTable contingency(std::span<const std::uint64_t> ids, std::span<const int> labels,
                             std::span<const int> predicted,
                             const std::unordered_set<std::uint64_t>& uncertain);

// Incorrect-to-correct count ratio within each group.
struct NyRatio {
  double certain = 0.0;
  double uncertain = 0.0;
};

NyRatio ny_ratio(const ContingencyTable& table);

struct ChiSquareResult {
  double statistic = 0.0;
  int degrees_of_freedom = 1;
  double p_value = 1.0;
  bool yates = true;
};

// Upper tail P(X > x) of the chi-square distribution with one degree of
// freedom, i.e. erfc(sqrt(x / 2)), evaluated as the regularized upper
// incomplete gamma Q(1/2, x/2) (series below x/2 = 1.5, Lentz continued
// fraction above).
double chi_square_df1_upper_tail(double x);

// Independence test on [[a, b], [c, d]]. With Yates the per-cell deviation is
// max(|O - E| - 0.5, 0). Throws "degenerate table" if a margin is zero.
ChiSquareResult chi_square(const std::array<std::array<double, 2>, 2>& observed, bool yates = true);
// Rows are certain/uncertain, columns correct/incorrect.
ChiSquareResult chi_square(const ContingencyTable& table, bool yates = true);

struct ReliabilityReport {
  std::string partition_method;  // "variance" or "point_estimate"
  double variance_threshold = kDefaultVarianceThreshold;
  double decision_threshold = 0.5;
  ContingencyTable table;
  std::optional<NyRatio> ratios;
  std::optional<ChiSquareResult> yates;
  std::optional<ChiSquareResult> pearson;
  // Set when a statistic could not be computed (e.g. an empty group).
  std::string note;
};

// MC distributions: predicted label = mean >= decision_threshold; uncertain
// when variance > variance_threshold.
ReliabilityReport analyze_distributions(const DistributionSet& set, double variance_threshold,
                                        double decision_threshold);
// Point estimates: uncertain group of size k chosen by distance from 0 and 1.
ReliabilityReport analyze_point_estimates(std::span<const std::uint64_t> ids, std::span<const double> scores,
                                          std::span<const int> labels, std::size_t k,
                                          double decision_threshold);

nlohmann::json to_json(const ReliabilityReport& report);
// Aligned text table: Correct Yes / No / N/Y Ratio rows by Certain / Uncertain
// columns, followed by both chi-square variants.
std::string render_table(const ReliabilityReport& report, const std::string& title);

}  // namespace mcdban
