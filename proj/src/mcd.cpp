#include "mcdban/mcd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"
#include "mcdban/rng.hpp"

namespace mcdban {

namespace {

// shifted by the first sample so constant inputs give exactly zero variance
std::pair<double, double> mean_variance(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double x0 = xs.front();
  double shift = 0.0;
  for (const double x : xs) shift += x - x0;
  shift /= n;
  double var = 0.0;
  for (const double x : xs) var += (x - x0 - shift) * (x - x0 - shift);
  return {x0 + shift, var / n};
}

}  // namespace

PredictionDistribution PredictionDistribution::from_samples(std::uint64_t id, std::optional<int> label,
                                                            std::vector<double> samples) {
  if (samples.empty()) throw ValidationError("prediction distribution needs at least one sample");
  PredictionDistribution d;
  d.id = id;
  d.label = label;
  d.samples = std::move(samples);
  std::tie(d.mean, d.variance) = mean_variance(d.samples);
  return d;
}

std::vector<double> DistributionSet::means() const {
  std::vector<double> out;
  for (const auto& d : items) out.push_back(d.mean);
  return out;
}

std::vector<double> DistributionSet::variances() const {
  std::vector<double> out;
  for (const auto& d : items) out.push_back(d.variance);
  return out;
}

std::vector<std::uint64_t> DistributionSet::ids() const {
  std::vector<std::uint64_t> out;
  for (const auto& d : items) out.push_back(d.id);
  return out;
}

bool DistributionSet::has_labels() const {
  return std::all_of(items.begin(), items.end(), [](const auto& d) { return d.label.has_value(); });
}

std::vector<int> DistributionSet::labels() const {
  std::vector<int> out;
  for (const auto& d : items) {
    if (!d.label) throw ValidationError("prediction for id " + std::to_string(d.id) + " has no label");
    out.push_back(*d.label);
  }
  return out;
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

DistributionSummary summarize(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("summarize: empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  DistributionSummary s;
  std::tie(s.mean, s.variance) = mean_variance(samples);
  s.min = sorted.front();
  s.max = sorted.back();
  s.q05 = quantile(sorted, 0.05);
  s.q50 = quantile(sorted, 0.5);
  s.q95 = quantile(sorted, 0.95);
  return s;
}

PredictionDistribution mc_predict(const BanModel& model, const TokenSequence& seq, std::uint64_t id,
                                  std::size_t T, std::uint64_t seed, std::optional<int> label) {
  if (T < 1) throw ValidationError("mc_predict: T must be >= 1");
  Rng rng(derive_seed(seed, id));
  std::vector<double> samples;
  samples.reserve(T);
  for (std::size_t t = 0; t < T; ++t) samples.push_back(model.score(seq, ForwardMode::stochastic, &rng));
  return PredictionDistribution::from_samples(id, label, std::move(samples));
}

DistributionSet predict_dataset(const BanModel& model, const LabeledCorpus& corpus,
                                const PredictOptions& options) {
  if (options.T < 1) throw ValidationError("predict: T must be >= 1");
  DistributionSet set;
  set.seed = options.seed;
  set.model_fingerprint = model.fingerprint();
  set.items.resize(corpus.size());

  auto work = [&](std::size_t i) {
    const auto& ex = corpus.examples[i];
    const TokenSequence seq = model.encode(ex.text);
    if (options.deterministic) {
      const double s = model.score(seq, ForwardMode::deterministic, nullptr);
      set.items[i] = PredictionDistribution::from_samples(ex.id, ex.label, std::vector<double>(options.T, s));
    } else {
      set.items[i] = mc_predict(model, seq, ex.id, options.T, options.seed, ex.label);
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, corpus.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) work(i);
    return set;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < corpus.size(); i += threads) work(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return set;
}

bool within_envelope(double deterministic_score, const PredictionDistribution& dist) {
  const auto [lo, hi] = std::minmax_element(dist.samples.begin(), dist.samples.end());
  return deterministic_score >= *lo - 0.25 && deterministic_score <= *hi + 0.25;
}

std::string to_jsonl(const DistributionSet& set) {
  std::string out;
  for (const auto& d : set.items) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    if (d.label) j["label"] = *d.label;
    j["T"] = d.T();
    j["samples"] = d.samples;
    j["mean"] = d.mean;
    j["variance"] = d.variance;
    out += j.dump();
    out += '\n';
  }
  return out;
}

DistributionSet parse_jsonl(std::string_view text) {
  DistributionSet set;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "predictions line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + e.what());
    }
    try {
      std::optional<int> label;
      if (j.contains("label") && !j["label"].is_null()) {
        label = j["label"].get<int>();
        if (*label != 0 && *label != 1) throw ValidationError(where + "label must be 0 or 1");
      }
      auto samples = j.at("samples").get<std::vector<double>>();
      for (const double s : samples) {
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError(where + "sample outside [0, 1]");
      }
      auto d = PredictionDistribution::from_samples(j.at("id").get<std::uint64_t>(), label, std::move(samples));
      if (j.contains("T") && j["T"].get<std::size_t>() != d.T()) {
        throw ValidationError(where + "T does not match the number of samples");
      }
      if (j.contains("mean") && std::abs(j["mean"].get<double>() - d.mean) > 1e-9) {
        throw ValidationError(where + "stored mean disagrees with samples");
      }
      if (j.contains("variance") && std::abs(j["variance"].get<double>() - d.variance) > 1e-9) {
        throw ValidationError(where + "stored variance disagrees with samples");
      }
      if (!set.items.empty() && set.items.front().T() != d.T()) {
        throw ValidationError(where + "all records must share the same T");
      }
      set.items.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + e.what());
    }
  }
  return set;
}

void save_predictions(const DistributionSet& set, const std::filesystem::path& path) {
  write_text_file(path, to_jsonl(set));
}

DistributionSet load_predictions(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("predictions file not found: " + path.string());
  auto set = parse_jsonl(read_text_file(path));
  if (set.items.empty()) throw ValidationError("predictions file is empty: " + path.string());
  return set;
}

}  // namespace mcdban
