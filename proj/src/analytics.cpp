#include "mcdban/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mcdban/error.hpp"
#include "mcdban/format.hpp"

namespace mcdban {

CertaintyPartition partition_by_variance(const DistributionSet& set, double threshold) {
  CertaintyPartition p;
  for (const auto& d : set.items) (d.variance > threshold ? p.uncertain : p.certain).push_back(d.id);
  return p;
}

CertaintyPartition partition_point_estimates(std::span<const std::uint64_t> ids, std::span<const double> scores,
                                             std::size_t k) {
  if (ids.size() != scores.size()) throw ValidationError("partition_point_estimates: inputs differ in length");
  if (k > ids.size()) {
    throw ValidationError("partition_point_estimates: k = " + std::to_string(k) + " exceeds n = " +
                          std::to_string(ids.size()));
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) { return std::min(scores[i], 1.0 - scores[i]); };
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const double ki = key(i);
    const double kj = key(j);
    if (ki != kj) return ki > kj;
    return ids[i] < ids[j];
  });
  std::vector<bool> uncertain(ids.size(), false);
  for (std::size_t r = 0; r < k; ++r) uncertain[order[r]] = true;
  CertaintyPartition p;
  for (std::size_t i = 0; i < ids.size(); ++i) (uncertain[i] ? p.uncertain : p.certain).push_back(ids[i]);
  return p;
}

ContingencyTable contingency(std::span<const std::uint64_t> ids, std::span<const int> labels,
                             std::span<const int> predicted, const std::unordered_set<std::uint64_t>& uncertain) {
  if (ids.size() != labels.size() || labels.size() != predicted.size()) {
    throw ValidationError("contingency: inputs differ in length");
  }
  ContingencyTable t;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool correct = predicted[i] == labels[i];
    if (uncertain.contains(ids[i])) {
      ++(correct ? t.uncertain_correct : t.uncertain_incorrect);
    } else {
      ++(correct ? t.certain_correct : t.certain_incorrect);
    }
  }
  return t;
}

NyRatio ny_ratio(const ContingencyTable& table) {
  if (table.certain_correct == 0 || table.uncertain_correct == 0) {
    throw ValidationError("ny_ratio: a group has no correct predictions");
  }
  return {static_cast<double>(table.certain_incorrect) / static_cast<double>(table.certain_correct),
          static_cast<double>(table.uncertain_incorrect) / static_cast<double>(table.uncertain_correct)};
}

double chi_square_df1_upper_tail(double x) {
  if (std::isnan(x)) throw NumericalError("chi-square tail of NaN");
  if (x <= 0.0) return 1.0;
  constexpr double a = 0.5;
  const double z = 0.5 * x;
  // log of z^a e^{-z} / Gamma(a), with Gamma(1/2) = sqrt(pi).
  const double log_prefix = a * std::log(z) - z - 0.5 * std::log(std::numbers::pi);

  if (z < 1.5) {
    // P(a, z) = z^a e^-z / Gamma(a) * sum_n z^n / (a (a+1) ... (a+n)).
    double term = 1.0 / a;
    double total = term;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      total += term;
      if (std::abs(term) < std::abs(total) * 1e-17) break;
    }
    return 1.0 - std::exp(log_prefix) * total;
  }

  // Q(a, z) = z^a e^-z / Gamma(a) * 1 / (z + 1 - a - 1(1-a)/(z + 3 - a - ...)),
  // evaluated with the modified Lentz method.
  constexpr double tiny = 1e-300;
  double b = z + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_prefix) * h;
}

ChiSquareResult chi_square(const std::array<std::array<double, 2>, 2>& observed, bool yates) {
  const std::array<double, 2> rows{observed[0][0] + observed[0][1], observed[1][0] + observed[1][1]};
  const std::array<double, 2> cols{observed[0][0] + observed[1][0], observed[0][1] + observed[1][1]};
  const double n = rows[0] + rows[1];
  if (rows[0] <= 0.0 || rows[1] <= 0.0 || cols[0] <= 0.0 || cols[1] <= 0.0) {
    throw ValidationError("chi_square: degenerate table (a row or column sum is zero)");
  }
  ChiSquareResult r;
  r.yates = yates;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / n;
      double dev = std::abs(observed[i][j] - expected);
      if (yates) dev = std::max(dev - 0.5, 0.0);
      r.statistic += dev * dev / expected;
    }
  }
  r.p_value = chi_square_df1_upper_tail(r.statistic);
  return r;
}

ChiSquareResult chi_square(const ContingencyTable& table, bool yates) {
  return chi_square({{{static_cast<double>(table.certain_correct), static_cast<double>(table.certain_incorrect)},
                      {static_cast<double>(table.uncertain_correct), static_cast<double>(table.uncertain_incorrect)}}},
                    yates);
}

namespace {

void fill_statistics(ReliabilityReport& report) {
  try {
    report.ratios = ny_ratio(report.table);
  } catch (const ValidationError& e) {
    report.note = e.what();
  }
  try {
    report.yates = chi_square(report.table, true);
    report.pearson = chi_square(report.table, false);
  } catch (const ValidationError& e) {
    report.note = report.note.empty() ? e.what() : report.note + "; " + e.what();
  }
}

}  // namespace

ReliabilityReport analyze_distributions(const DistributionSet& set, double variance_threshold,
                                        double decision_threshold) {
  ReliabilityReport report;
  report.partition_method = "variance";
  report.variance_threshold = variance_threshold;
  report.decision_threshold = decision_threshold;
  const auto part = partition_by_variance(set, variance_threshold);
  const std::unordered_set<std::uint64_t> uncertain(part.uncertain.begin(), part.uncertain.end());
  const auto means = set.means();
  report.table = contingency(set.ids(), set.labels(), apply_threshold(means, decision_threshold), uncertain);
  fill_statistics(report);
  return report;
}

ReliabilityReport analyze_point_estimates(std::span<const std::uint64_t> ids, std::span<const double> scores,
                                          std::span<const int> labels, std::size_t k, double decision_threshold) {
  ReliabilityReport report;
  report.partition_method = "point_estimate";
  report.decision_threshold = decision_threshold;
  const auto part = partition_point_estimates(ids, scores, k);
  const std::unordered_set<std::uint64_t> uncertain(part.uncertain.begin(), part.uncertain.end());
  report.table = contingency(ids, labels, apply_threshold(scores, decision_threshold), uncertain);
  fill_statistics(report);
  return report;
}

nlohmann::json to_json(const ReliabilityReport& report) {
  nlohmann::json j;
  j["partition_method"] = report.partition_method;
  if (report.partition_method == "variance") j["variance_threshold"] = report.variance_threshold;
  j["decision_threshold"] = report.decision_threshold;
  j["table"] = {{"certain", {{"correct", report.table.certain_correct}, {"incorrect", report.table.certain_incorrect}}},
                {"uncertain",
                 {{"correct", report.table.uncertain_correct}, {"incorrect", report.table.uncertain_incorrect}}},
                {"total", report.table.total()}};
  if (report.ratios) {
    j["ny_ratio"] = {{"certain", report.ratios->certain}, {"uncertain", report.ratios->uncertain}};
  }
  auto chi = [](const ChiSquareResult& r) {
    return nlohmann::json{{"statistic", r.statistic}, {"df", r.degrees_of_freedom}, {"p_value", r.p_value}};
  };
  if (report.yates) j["chi_square_yates"] = chi(*report.yates);
  if (report.pearson) j["chi_square_pearson"] = chi(*report.pearson);
  if (!report.note.empty()) j["note"] = report.note;
  return j;
}

std::string render_table(const ReliabilityReport& report, const std::string& title) {
  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
  };
  auto left = [](std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
  };
  const auto& t = report.table;
  std::ostringstream out;
  out << title << '\n';
  out << left("", 22) << pad("Certain", 10) << pad("Uncertain", 12) << '\n';
  out << left("Correct  Yes", 22) << pad(std::to_string(t.certain_correct), 10)
      << pad(std::to_string(t.uncertain_correct), 12) << '\n';
  out << left("         No", 22) << pad(std::to_string(t.certain_incorrect), 10)
      << pad(std::to_string(t.uncertain_incorrect), 12) << '\n';
  if (report.ratios) {
    out << left("N/Y Ratio", 22) << pad(fmt_fixed(report.ratios->certain, 2), 10)
        << pad(fmt_fixed(report.ratios->uncertain, 2), 12) << '\n';
  }
  auto sci = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };
  if (report.yates) {
    out << "Chi-square (Yates):   statistic " << fmt_fixed(report.yates->statistic, 3) << ", p = "
        << sci(report.yates->p_value) << '\n';
  }
  if (report.pearson) {
    out << "Chi-square (Pearson): statistic " << fmt_fixed(report.pearson->statistic, 3) << ", p = "
        << sci(report.pearson->p_value) << '\n';
  }
  if (!report.note.empty()) out << "Note: " << report.note << '\n';
  return out.str();
}

}  // namespace mcdban
