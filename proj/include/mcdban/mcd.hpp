#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcdban/attention_net.hpp"
#include "mcdban/corpus.hpp"

namespace mcdban {

inline constexpr std::size_t kDefaultMcSamples = 1000;

// Scores of T stochastic forward passes for one instance, in draw order.
struct PredictionDistribution {
  std::uint64_t id = 0;
  std::optional<int> label;
  std::vector<double> samples;
  double mean = 0.0;
  double variance = 0.0;  // population variance (divides by T)

  std::size_t T() const { return samples.size(); }
  static PredictionDistribution from_samples(std::uint64_t id, std::optional<int> label,
                                             std::vector<double> samples);
};

struct DistributionSet {
  std::vector<PredictionDistribution> items;
  std::uint64_t seed = 0;
  std::string model_fingerprint;

  std::size_t size() const { return items.size(); }
  std::size_t T() const { return items.empty() ? 0 : items.front().T(); }
  std::vector<double> means() const;
  std::vector<double> variances() const;
  std::vector<std::uint64_t> ids() const;
  // Labels of all items; throws if any item has none.
  std::vector<int> labels() const;
  bool has_labels() const;
};

struct DistributionSummary {
  double mean = 0.0;
  double variance = 0.0;
  double min = 0.0;
  double max = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

// Linear interpolation between order statistics at position q * (n - 1).
double quantile(std::span<const double> sorted, double q);
DistributionSummary summarize(std::span<const double> samples);
inline DistributionSummary summarize(const PredictionDistribution& d) { return summarize(d.samples); }

// T stochastic passes; the dropout stream is derived from (seed, id) only, so
// the result does not depend on which other instances are predicted or in
// what order.
PredictionDistribution mc_predict(const BanModel& model, const TokenSequence& seq, std::uint64_t id,
                                  std::size_t T, std::uint64_t seed, std::optional<int> label = std::nullopt);

struct PredictOptions {
  std::size_t T = kDefaultMcSamples;
  std::uint64_t seed = 0;
  // Dropout off: every sample equals the deterministic score.
  bool deterministic = false;
  std::size_t threads = 1;
};

DistributionSet predict_dataset(const BanModel& model, const LabeledCorpus& corpus,
                                const PredictOptions& options);

// Loose sanity envelope: the deterministic score should lie within 0.25 of
// the sampled range. Not a theorem, so callers treat false as a warning.
bool within_envelope(double deterministic_score, const PredictionDistribution& dist);

// One JSON object per line: id, label (omitted when unknown), T, samples,
// mean, variance.
std::string to_jsonl(const DistributionSet& set);
DistributionSet parse_jsonl(std::string_view text);
void save_predictions(const DistributionSet& set, const std::filesystem::path& path);
DistributionSet load_predictions(const std::filesystem::path& path);

}  // namespace mcdban
