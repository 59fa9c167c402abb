#include "mcdban/threshold.hpp"

#include <cmath>
#include <sstream>

#include "mcdban/error.hpp"
#include "mcdban/format.hpp"

namespace mcdban {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void derive_rates(MetricReport& r) {
  r.accuracy = ratio(r.tp + r.tn, r.total());
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
}

}  // namespace

Metric metric_from_string(std::string_view name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "precision") return Metric::precision;
  if (name == "recall") return Metric::recall;
  if (name == "f1") return Metric::f1;
  throw ValidationError("unknown metric '" + std::string(name) + "'");
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::precision: return "precision";
    case Metric::recall: return "recall";
    case Metric::f1: return "f1";
  }
  return "accuracy";
}

void ThresholdGrid::validate() const {
  if (!(lo < hi) || !(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValidationError("threshold grid requires lo < hi and step > 0");
  }
}

std::vector<double> ThresholdGrid::points() const {
  validate();
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  const double per_unit = 1.0 / step;
  const double lo_units = lo * per_unit;
  const bool decimal = std::abs(per_unit - std::round(per_unit)) < 1e-9 * per_unit &&
                       std::abs(lo_units - std::round(lo_units)) < 1e-6;
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(decimal ? (std::round(lo_units) + static_cast<double>(i)) / std::round(per_unit)
                          : lo + static_cast<double>(i) * step);
  }
  return out;
}

double MetricReport::value(Metric metric) const {
  switch (metric) {
    case Metric::accuracy: return accuracy;
    case Metric::precision: return precision;
    case Metric::recall: return recall;
    case Metric::f1: return f1;
  }
  return accuracy;
}

std::vector<int> apply_threshold(std::span<const double> scores, double t) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (const double s : scores) out.push_back(s >= t ? 1 : 0);
  return out;
}

MetricReport metric_report(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) {
    throw ValidationError("metric_report: predictions and labels differ in length");
  }
  MetricReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == 1) {
      ++(labels[i] == 1 ? r.tp : r.fp);
    } else {
      ++(labels[i] == 1 ? r.fn : r.tn);
    }
  }
  derive_rates(r);
  return r;
}

MetricReport metric_report(std::span<const double> scores, std::span<const int> labels, double t) {
  if (scores.size() != labels.size()) {
    throw ValidationError("metric_report: scores and labels differ in length");
  }
  MetricReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (scores[i] >= t) {
      ++(labels[i] == 1 ? r.tp : r.fp);
    } else {
      ++(labels[i] == 1 ? r.fn : r.tn);
    }
  }
  derive_rates(r);
  return r;
}

ThresholdChoice search_threshold(std::span<const double> scores, std::span<const int> labels,
                                 Metric metric, const ThresholdGrid& grid) {
  if (scores.empty()) throw ValidationError("search_threshold: empty input");
  if (scores.size() != labels.size()) {
    throw ValidationError("search_threshold: scores and labels differ in length");
  }
  ThresholdChoice best{0.0, -1.0};
  for (const double t : grid.points()) {
    const double m = metric_report(scores, labels, t).value(metric);
    if (m > best.metric) best = {t, m};
  }
  return best;
}

std::vector<SweepRow> tradeoff_sweep(std::span<const double> scores, std::span<const int> labels,
                                     std::span<const double> thresholds) {
  std::vector<SweepRow> rows;
  rows.reserve(thresholds.size());
  for (const double t : thresholds) rows.push_back({t, metric_report(scores, labels, t)});
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "threshold,precision,accuracy,recall,f1\n";
  for (const auto& r : rows) {
    out << fmt_num(r.threshold) << ',' << fmt_num(r.report.precision) << ','
        << fmt_num(r.report.accuracy) << ',' << fmt_num(r.report.recall) << ','
        << fmt_num(r.report.f1) << '\n';
  }
  return out.str();
}

}  // namespace mcdban
