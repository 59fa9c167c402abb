#include "mcdban/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mcdban/error.hpp"
#include "mcdban/format.hpp"
#include "mcdban/matrix.hpp"

namespace mcdban {

namespace {

void require_aligned(const char* op, std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError(std::string(op) + ": inputs differ in length");
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

PlattParams fit_platt(std::span<const double> scores, std::span<const int> labels, const PlattOptions& options) {
  require_aligned("fit_platt", scores.size(), labels.size());
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValidationError("fit_platt: calibration set must contain both classes");
  }
  const double hi_target =
      options.smooth_targets ? (static_cast<double>(positives) + 1.0) / (static_cast<double>(positives) + 2.0) : 1.0;
  const double lo_target = options.smooth_targets ? 1.0 / (static_cast<double>(negatives) + 2.0) : 0.0;
  std::vector<double> targets;
  targets.reserve(labels.size());
  for (const int y : labels) targets.push_back(y == 1 ? hi_target : lo_target);
  const auto n = static_cast<double>(scores.size());

  auto objective = [&](double a, double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = a * scores[i] + b;
      total += softplus(z) - targets[i] * z;
    }
    return total / n;
  };

  PlattParams p;
  double f = objective(p.a, p.b);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      const double q = sigmoid(p.a * s + p.b);
      const double r = q - targets[i];
      const double w = q * (1.0 - q);
      ga += r * s;
      gb += r;
      haa += w * s * s;
      hab += w * s;
      hbb += w;
    }
    ga /= n;
    gb /= n;
    haa /= n;
    hab /= n;
    hbb /= n;
    if (std::max(std::abs(ga), std::abs(gb)) < options.gradient_tolerance) break;

    // Small ridge keeps the 2x2 system solvable when the Hessian degenerates.
    const double ridge = 1e-12;
    haa += ridge;
    hbb += ridge;
    const double det = haa * hbb - hab * hab;
    double da = -(hbb * ga - hab * gb) / det;
    double db = -(haa * gb - hab * ga) / det;
    if (!std::isfinite(da) || !std::isfinite(db)) {
      da = -ga;
      db = -gb;
    }
    double step = 1.0;
    const double slope = ga * da + gb * db;
    bool accepted = false;
    while (step > 1e-10) {
      const double na = p.a + step * da;
      const double nb = p.b + step * db;
      const double nf = objective(na, nb);
      if (nf <= f + 1e-4 * step * slope) {
        p = {na, nb};
        f = nf;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  if (!std::isfinite(p.a) || !std::isfinite(p.b)) throw NumericalError("fit_platt: parameters diverged");
  return p;
}

double apply_platt(double score, const PlattParams& params) { return sigmoid(params.a * score + params.b); }

IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const double> targets) {
  require_aligned("fit_isotonic", scores.size(), targets.size());
  if (scores.empty()) throw ValidationError("fit_isotonic: empty input");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  // Tied scores start pooled in one block.
  struct Block {
    double sum;
    double weight;
    std::size_t first_group;
    std::size_t last_group;
    double mean() const { return sum / weight; }
  };
  std::vector<double> breakpoints;
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double s = scores[order[k]];
    const double y = targets[order[k]];
    if (!breakpoints.empty() && breakpoints.back() == s) {
      blocks.back().sum += y;
      blocks.back().weight += 1.0;
      continue;
    }
    breakpoints.push_back(s);
    blocks.push_back({y, 1.0, breakpoints.size() - 1, breakpoints.size() - 1});
  }

  std::vector<Block> stack;
  for (const auto& b : blocks) {
    stack.push_back(b);
    while (stack.size() > 1 && stack[stack.size() - 2].mean() > stack.back().mean()) {
      Block top = stack.back();
      stack.pop_back();
      stack.back().sum += top.sum;
      stack.back().weight += top.weight;
      stack.back().last_group = top.last_group;
    }
  }

  IsotonicMap map;
  map.breakpoints = std::move(breakpoints);
  map.values.resize(map.breakpoints.size());
  for (const auto& b : stack) {
    for (std::size_t g = b.first_group; g <= b.last_group; ++g) map.values[g] = b.mean();
  }
  return map;
}

IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> targets(labels.begin(), labels.end());
  return fit_isotonic(scores, std::span<const double>(targets));
}

double apply_isotonic(double score, const IsotonicMap& map) {
  if (map.breakpoints.empty()) throw ValidationError("apply_isotonic: empty map");
  const auto it = std::upper_bound(map.breakpoints.begin(), map.breakpoints.end(), score);
  if (it == map.breakpoints.begin()) return map.values.front();
  return map.values[static_cast<std::size_t>(it - map.breakpoints.begin()) - 1];
}

namespace {

struct BinSums {
  std::vector<std::size_t> count;
  std::vector<long double> score;
  std::vector<long double> hits;
};

BinSums bin_sums(std::span<const double> scores, std::span<const int> labels, std::size_t bins, BinningMode mode,
                 std::span<const int> predictions, const char* who) {
  require_aligned(who, scores.size(), labels.size());
  if (bins < 1) throw ValidationError(std::string(who) + ": need at least one bin");
  if (!predictions.empty()) require_aligned(who, scores.size(), predictions.size());
  BinSums s{std::vector<std::size_t>(bins, 0), std::vector<long double>(bins, 0.0L),
            std::vector<long double>(bins, 0.0L)};
  const auto m = static_cast<double>(bins);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double value = scores[i];
    bool hit = labels[i] == 1;
    if (mode == BinningMode::confidence) {
      const int predicted = predictions.empty() ? (scores[i] >= 0.5 ? 1 : 0) : predictions[i];
      value = predicted == 1 ? scores[i] : 1.0 - scores[i];
      hit = predicted == labels[i];
    }
    const auto raw = static_cast<long long>(std::floor(value * m));
    const auto b = static_cast<std::size_t>(std::clamp<long long>(raw, 0, static_cast<long long>(bins) - 1));
    ++s.count[b];
    s.score[b] += value;
    s.hits[b] += hit ? 1.0L : 0.0L;
  }
  return s;
}

}  // namespace

std::vector<ReliabilityBin> reliability_curve(std::span<const double> scores, std::span<const int> labels,
                                              std::size_t bins, BinningMode mode,
                                              std::span<const int> predictions) {
  const BinSums s = bin_sums(scores, labels, bins, mode, predictions, "reliability_curve");
  std::vector<ReliabilityBin> out(bins);
  const auto m = static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = static_cast<double>(b) / m;
    out[b].hi = static_cast<double>(b + 1) / m;
    out[b].count = s.count[b];
    if (s.count[b] == 0) continue;
    const auto c = static_cast<long double>(s.count[b]);
    out[b].mean_score = static_cast<double>(s.score[b] / c);
    out[b].accuracy = static_cast<double>(s.hits[b] / c);
  }
  return out;
}

// sum over bins of |hits - score mass|, divided by n
double ece(std::span<const double> scores, std::span<const int> labels, std::size_t bins, BinningMode mode,
           std::span<const int> predictions) {
  const BinSums s = bin_sums(scores, labels, bins, mode, predictions, "ece");
  if (scores.empty()) return 0.0;
  long double total = 0.0L;
  for (std::size_t b = 0; b < bins; ++b) total += std::fabs(s.hits[b] - s.score[b]);
  return static_cast<double>(total / static_cast<long double>(scores.size()));
}

std::string reliability_csv(std::span<const ReliabilityBin> bins) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count,mean_score,accuracy\n";
  for (const auto& b : bins) {
    out << fmt_num(b.lo) << ',' << fmt_num(b.hi) << ',' << b.count << ',' << fmt_num(b.mean_score) << ','
        << fmt_num(b.accuracy) << '\n';
  }
  return out.str();
}

double apply_calibration(double score, const CalibrationMap& map) {
  struct Visitor {
    double score;
    double operator()(const IdentityCalibration&) const { return score; }
    double operator()(const PlattParams& p) const { return apply_platt(score, p); }
    double operator()(const IsotonicMap& m) const { return apply_isotonic(score, m); }
  };
  return std::visit(Visitor{score}, map);
}

std::vector<double> apply_calibration(std::span<const double> scores, const CalibrationMap& map) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const double s : scores) out.push_back(apply_calibration(s, map));
  return out;
}

nlohmann::json calibration_to_json(const CalibrationMap& map) {
  if (std::holds_alternative<PlattParams>(map)) {
    const auto& p = std::get<PlattParams>(map);
    return {{"type", "platt"}, {"a", p.a}, {"b", p.b}};
  }
  if (std::holds_alternative<IsotonicMap>(map)) {
    const auto& m = std::get<IsotonicMap>(map);
    return {{"type", "isotonic"}, {"breakpoints", m.breakpoints}, {"values", m.values}};
  }
  return {{"type", "none"}};
}

CalibrationMap calibration_from_json(const nlohmann::json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "none") return IdentityCalibration{};
    if (type == "platt") return PlattParams{j.at("a").get<double>(), j.at("b").get<double>()};
    if (type == "isotonic") {
      IsotonicMap m{j.at("breakpoints").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
      if (m.breakpoints.empty() || m.breakpoints.size() != m.values.size()) {
        throw ValidationError("isotonic map: breakpoints and values must be non-empty and aligned");
      }
      for (std::size_t i = 1; i < m.breakpoints.size(); ++i) {
        if (!(m.breakpoints[i - 1] < m.breakpoints[i]) || m.values[i - 1] > m.values[i]) {
          throw ValidationError("isotonic map: breakpoints must ascend and values must not decrease");
        }
      }
      return m;
    }
    throw ValidationError("unknown calibration type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("calibration map: ") + e.what());
  }
}

}  // namespace mcdban
