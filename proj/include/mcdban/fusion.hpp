#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mcdban/matrix.hpp"
#include "mcdban/mcd.hpp"

namespace mcdban {

// Per-instance named side features, joined to predictions by id.
struct SideFeatureTable {
  std::vector<std::string> names;
  std::map<std::uint64_t, std::vector<double>> rows;
  // Values outside [-1, 1]; reported, not rejected.
  std::vector<std::string> warnings;
};

// CSV with header `id,<feature names...>`.
SideFeatureTable parse_side_features(std::string_view csv_text);
SideFeatureTable load_side_features(const std::filesystem::path& path);

// Rows are instances in prediction-file order: T sorted samples, then side
// features in declared column order.
struct FusionMatrix {
  std::vector<std::string> columns;
  std::vector<std::uint64_t> ids;
  std::vector<int> labels;
  std::size_t sample_columns = 0;
  Matrix X;
};

// side may be null for predictions-only features. Throws on an id missing
// from the side table, or when labels are unknown.
FusionMatrix build_features(const DistributionSet& set, const SideFeatureTable* side);

// Per-column z-scoring; a zero-spread column keeps scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& X, std::span<const std::size_t> rows);
  Matrix apply(const Matrix& X) const;
};

struct LinearOptions {
  double C = 1.0;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  LinearOptions options;

  double decision(std::span<const double> x) const;
  // 1 iff w.x + b >= 0.
  int predict(std::span<const double> x) const;
  std::vector<int> predict(const Matrix& X) const;
};

// Pegasos subgradient descent on the L2-regularized hinge loss with
// lambda = 1 / (C n) and step 1 / (lambda t), rows visited in a fresh
// shuffle each epoch. The weights returned are the mean of the last 10% of
// iterates; the intercept is then set to the exact minimizer of the hinge
// loss given those weights.
LinearModel train_linear(const Matrix& X, std::span<const int> y, const LinearOptions& options);

// Stratified fold index per row: each class is shuffled and dealt round
// robin, continuing where the previous class stopped.
std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

struct CvReport {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  LinearOptions options;
  std::size_t columns = 0;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over folds
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

// Standardization is refit on the training rows of each fold; fold f trains
// with seed derive_seed(seed, f). An explicit fold assignment replaces the
// stratified one.
CvReport kfold_cv(const Matrix& X, std::span<const int> y, std::size_t k, const LinearOptions& options,
                  std::uint64_t seed, std::optional<std::vector<std::size_t>> assignment = std::nullopt,
                  std::size_t threads = 1);

nlohmann::json to_json(const CvReport& report);

// Accuracy drop when one column is shuffled, averaged over repeats. This
// is a generic model-inspection aid for the linear model.
std::vector<double> permutation_importance(const LinearModel& model, const Matrix& X, std::span<const int> y,
                                           std::size_t repeats, std::uint64_t seed);

}  // namespace mcdban
