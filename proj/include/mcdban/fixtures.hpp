#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcdban/analytics.hpp"
#include "mcdban/mcd.hpp"

namespace mcdban {

// One block of the certain/uncertain reliability table: counts plus the
// published ratios and p-value.
struct ReferenceTable {
  std::string language;  // ENG, CRO, SLO
  std::string model;     // BERT, MCD BERT
  ContingencyTable table;
  double printed_ratio_certain = 0.0;
  double printed_ratio_uncertain = 0.0;
  double printed_p = 0.0;
};

const std::vector<ReferenceTable>& reference_tables();
const ReferenceTable& reference_table(const std::string& language, const std::string& model);

// Predictions reproducing a contingency table under the default analysis
// (variance threshold 0.1, decision threshold 0.5). Certain instances have
// tightly clustered samples; uncertain ones are split between 0.02 and 0.98.
DistributionSet reference_predictions(const ContingencyTable& table, std::size_t T = 20);

// Two classes with disjoint content vocabularies plus shared filler words;
// balanced, header id,text,label.
std::string synthetic_corpus_csv(std::size_t n = 200, std::uint64_t seed = 7);

// Points around (-2, 0) labeled 0 and (2, 0) labeled 1 with sd sigma.
struct GaussianBlobs {
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;
};
GaussianBlobs two_gaussians(std::size_t n = 200, double sigma = 0.5, std::uint64_t seed = 11);

// Scores uniform on (0, 1); label ~ Bernoulli(f(score)) where f is the
// identity, or sigmoid(a s + b) for Platt-shaped data.
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};
ScoredLabels bernoulli_calibrated(std::size_t n, std::uint64_t seed);
ScoredLabels platt_shaped(std::size_t n, double a, double b, std::uint64_t seed);

// Two planted groups: certain (low variance, near 0 or 1) and uncertain
// (high variance, spread around 0.5).
DistributionSet planted_clusters(std::size_t per_cluster, std::size_t T, std::uint64_t seed);

// Four bounded affective columns for the given ids.
std::string side_features_csv(const std::vector<std::uint64_t>& ids, std::uint64_t seed);

}  // namespace mcdban
