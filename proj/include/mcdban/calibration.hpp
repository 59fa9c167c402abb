#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace mcdban {

// q = sigmoid(a * p + b), applied to the raw score p (no logit transform).
struct PlattParams {
  double a = 1.0;
  double b = 0.0;
};

struct PlattOptions {
  std::size_t max_iterations = 100;
  double gradient_tolerance = 1e-9;
  // Platt's smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2) instead of 0/1.
  bool smooth_targets = false;
};

// Minimizes mean binary cross-entropy by Newton's method with backtracking,
// starting from a = 1, b = 0. Requires both classes.
PlattParams fit_platt(std::span<const double> scores, std::span<const int> labels,
                      const PlattOptions& options = {});
double apply_platt(double score, const PlattParams& params);

// Non-decreasing step function fitted by pool-adjacent-violators. One entry
// per distinct training score.
struct IsotonicMap {
  std::vector<double> breakpoints;  // strictly ascending
  std::vector<double> values;       // non-decreasing
};

IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const double> targets);
IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const int> labels);
// Value of the last breakpoint <= score; the first value below the range.
double apply_isotonic(double score, const IsotonicMap& map);

enum class BinningMode {
  // Bin by positive-class score; bin accuracy is the positive-label fraction.
  positive_score,
  // Bin by confidence in the predicted label; accuracy is the fraction of
  // correct predictions.
  confidence,
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_score = 0.0;
  double accuracy = 0.0;
};

// M equal-width bins over [0, 1]; the last bin is closed on the right.
// Empty bins report count 0 and zero mean/accuracy.
std::vector<ReliabilityBin> reliability_curve(std::span<const double> scores, std::span<const int> labels,
                                              std::size_t bins = 10,
                                              BinningMode mode = BinningMode::positive_score,
                                              std::span<const int> predictions = {});

// Expected calibration error: sum over bins of |B|/n * |accuracy(B) - score(B)|.
// In confidence mode `predictions` defaults to score >= 0.5.
double ece(std::span<const double> scores, std::span<const int> labels, std::size_t bins = 10,
           BinningMode mode = BinningMode::positive_score, std::span<const int> predictions = {});

// bin_lo,bin_hi,count,mean_score,accuracy
std::string reliability_csv(std::span<const ReliabilityBin> bins);

struct IdentityCalibration {};
using CalibrationMap = std::variant<IdentityCalibration, PlattParams, IsotonicMap>;

double apply_calibration(double score, const CalibrationMap& map);
std::vector<double> apply_calibration(std::span<const double> scores, const CalibrationMap& map);

// {"type": "none" | "platt" | "isotonic", ...parameters}
nlohmann::json calibration_to_json(const CalibrationMap& map);
CalibrationMap calibration_from_json(const nlohmann::json& j);

}  // namespace mcdban
