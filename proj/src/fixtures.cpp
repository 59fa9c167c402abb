#include "mcdban/fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "mcdban/error.hpp"
#include "mcdban/format.hpp"
#include "mcdban/matrix.hpp"
#include "mcdban/rng.hpp"

namespace mcdban {

const std::vector<ReferenceTable>& reference_tables() {
  static const std::vector<ReferenceTable> entries = {
      {"ENG", "BERT", {880, 71, 31, 18}, 0.08, 0.58, 1.384e-11},
      {"ENG", "MCD BERT", {891, 62, 24, 23}, 0.06, 0.95, 2.2e-16},
      {"CRO", "BERT", {1176, 461, 35, 14}, 0.39, 0.40, 1.0},
      {"CRO", "MCD BERT", {1053, 336, 152, 139}, 0.31, 0.91, 8.348e-16},
      {"SLO", "BERT", {576, 241, 28, 27}, 0.42, 0.96, 0.0037},
      {"SLO", "MCD BERT", {537, 229, 55, 51}, 0.42, 0.92, 0.0002},
  };
  return entries;
}

const ReferenceTable& reference_table(const std::string& language, const std::string& model) {
  for (const auto& e : reference_tables()) {
    if (e.language == language && e.model == model) return e;
  }
  throw ValidationError("no fixture for " + language + " / " + model);
}

DistributionSet reference_predictions(const ContingencyTable& table, std::size_t T) {
  if (T < 2) throw ValidationError("reference fixture: T must be >= 2");
  DistributionSet set;
  std::uint64_t id = 0;
  // Certain: samples evenly spread over [c - 0.03, c + 0.03].
  auto certain = [&](std::size_t count, bool correct) {
    for (std::size_t i = 0; i < count; ++i) {
      const int label = static_cast<int>(i % 2);
      const bool high = correct ? label == 1 : label == 0;
      const double centre = high ? 0.9 : 0.1;
      std::vector<double> s(T);
      for (std::size_t t = 0; t < T; ++t) {
        s[t] = centre - 0.03 + 0.06 * static_cast<double>(t) / static_cast<double>(T - 1);
      }
      set.items.push_back(PredictionDistribution::from_samples(id++, label, std::move(s)));
    }
  };
  // Uncertain: half the samples at 0.02, half at 0.98 (mean 0.5, predicted 1).
  auto uncertain = [&](std::size_t count, bool correct) {
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<double> s(T);
      for (std::size_t t = 0; t < T; ++t) s[t] = t % 2 ? 0.98 : 0.02;
      if (T % 2) s.back() = 0.5;
      set.items.push_back(PredictionDistribution::from_samples(id++, correct ? 1 : 0, std::move(s)));
    }
  };
  certain(table.certain_correct, true);
  certain(table.certain_incorrect, false);
  uncertain(table.uncertain_correct, true);
  uncertain(table.uncertain_incorrect, false);
  return set;
}

std::string synthetic_corpus_csv(std::size_t n, std::uint64_t seed) {
  static const char* const filler[] = {"the", "a", "and", "of", "to", "is", "it", "this", "that", "on"};
  Rng rng(seed);
  std::string out = "id,text,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const std::string stem = label ? "pos" : "neg";
    const std::size_t length = 6 + rng.below(7);
    std::string text;
    for (std::size_t w = 0; w < length; ++w) {
      if (!text.empty()) text += ' ';
      // At least three content words per document; the rest mixed.
      if (w < 3 || rng.uniform() < 0.5) {
        const auto k = rng.below(30);
        text += stem + (k < 10 ? "0" : "") + std::to_string(k);
      } else {
        text += filler[rng.below(std::size(filler))];
      }
    }
    out += std::to_string(i) + "," + text + "," + std::to_string(label) + "\n";
  }
  return out;
}

GaussianBlobs two_gaussians(std::size_t n, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  GaussianBlobs g;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label ? 2.0 : -2.0;
    g.points.push_back({cx + sigma * rng.normal(), sigma * rng.normal()});
    g.labels.push_back(label);
  }
  return g;
}

ScoredLabels bernoulli_calibrated(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ScoredLabels d;
  d.scores.reserve(n);
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform();
    d.scores.push_back(s);
    d.labels.push_back(rng.bernoulli(s) ? 1 : 0);
  }
  return d;
}

ScoredLabels platt_shaped(std::size_t n, double a, double b, std::uint64_t seed) {
  Rng rng(seed);
  ScoredLabels d;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform();
    d.scores.push_back(s);
    d.labels.push_back(rng.bernoulli(sigmoid(a * s + b)) ? 1 : 0);
  }
  return d;
}

DistributionSet planted_clusters(std::size_t per_cluster, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  DistributionSet set;
  set.seed = seed;
  std::uint64_t id = 0;
  for (std::size_t i = 0; i < per_cluster; ++i) {
    const bool high = i % 2 == 1;
    std::vector<double> s(T);
    for (auto& x : s) {
      const double base = high ? 0.97 : 0.03;
      x = std::clamp(base + 0.02 * rng.normal(), 0.0, 1.0);
    }
    set.items.push_back(PredictionDistribution::from_samples(id++, high ? 1 : 0, std::move(s)));
  }
  for (std::size_t i = 0; i < per_cluster; ++i) {
    std::vector<double> s(T);
    for (auto& x : s) x = rng.bernoulli(0.5) ? rng.uniform(0.0, 0.15) : rng.uniform(0.85, 1.0);
    set.items.push_back(PredictionDistribution::from_samples(id++, static_cast<int>(i % 2), std::move(s)));
  }
  return set;
}

std::string side_features_csv(const std::vector<std::uint64_t>& ids, std::uint64_t seed) {
  Rng rng(seed);
  std::string out = "id,pleasantness,attention,sensitivity,aptitude\n";
  for (auto id : ids) {
    out += std::to_string(id);
    for (int c = 0; c < 4; ++c) out += "," + fmt_fixed(rng.uniform(-1.0, 1.0), 4);
    out += "\n";
  }
  return out;
}

}  // namespace mcdban
