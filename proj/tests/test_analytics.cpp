#include <doctest.h>

#include <cmath>
#include <unordered_set>

#include "mcdban/analytics.hpp"
#include "mcdban/error.hpp"
#include "mcdban/fixtures.hpp"
#include "mcdban/rng.hpp"

using namespace mcdban;

namespace {

using Table = std::array<std::array<double, 2>, 2>;

// closed form n (|ad - bc| - n/2)^2 / (r1 r2 c1 c2), valid when |ad - bc| > n/2
double yates_closed_form(const Table& t) {
  const double a = t[0][0], b = t[0][1], c = t[1][0], d = t[1][1];
  const double n = a + b + c + d;
  const double dev = std::max(std::abs(a * d - b * c) - n / 2.0, 0.0);
  return n * dev * dev / ((a + b) * (c + d) * (a + c) * (b + d));
}

double pearson_closed_form(const Table& t) {
  const double a = t[0][0], b = t[0][1], c = t[1][0], d = t[1][1];
  const double n = a + b + c + d;
  const double dev = a * d - b * c;
  return n * dev * dev / ((a + b) * (c + d) * (a + c) * (b + d));
}

double df1_tail_oracle(double x) { return std::erfc(std::sqrt(x / 2.0)); }

Table as_table(const ContingencyTable& t) {
  return {{{static_cast<double>(t.certain_correct), static_cast<double>(t.certain_incorrect)},
           {static_cast<double>(t.uncertain_correct), static_cast<double>(t.uncertain_incorrect)}}};
}

}  // namespace

TEST_CASE("chi-square tail probability") {
  CHECK(chi_square_df1_upper_tail(1.0) == doctest::Approx(0.3173105).epsilon(1e-6));
  CHECK(std::abs(chi_square_df1_upper_tail(4.0) - 0.0455003) <= 1e-6);
  CHECK(std::abs(chi_square_df1_upper_tail(10.0) - 0.001565402) <= 1e-6);
  CHECK(chi_square_df1_upper_tail(0.0) == 1.0);
  double worst = 0.0;
  for (double x = 1e-6; x <= 200.0; x *= 1.07) {
    const double rel = std::abs(chi_square_df1_upper_tail(x) - df1_tail_oracle(x)) / df1_tail_oracle(x);
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-12);
  CHECK(chi_square_df1_upper_tail(-1.0) == 1.0);
  CHECK_THROWS_AS(chi_square_df1_upper_tail(std::nan("")), NumericalError);
}

TEST_CASE("english bert table") {
  const Table t = {{{880, 71}, {31, 18}}};
  const auto r = chi_square(t);
  CHECK(r.yates);
  CHECK(r.degrees_of_freedom == 1);
  CHECK(r.statistic == doctest::Approx(yates_closed_form(t)).epsilon(1e-12));
  CHECK(r.statistic == doctest::Approx(45.6919).epsilon(1e-5));
  CHECK(r.p_value >= 1.0e-11);
  CHECK(r.p_value <= 1.8e-11);
  CHECK(r.p_value == doctest::Approx(df1_tail_oracle(yates_closed_form(t))).epsilon(1e-10));
  const auto p = chi_square(t, false);
  CHECK(p.statistic == doctest::Approx(pearson_closed_form(t)).epsilon(1e-12));
  CHECK(p.p_value < r.p_value);
}

TEST_CASE("croatian mcd table within a factor of two") {
  const Table t = {{{1053, 336}, {152, 139}}};
  const double p = chi_square(t).p_value;
  CHECK(p >= 8.348e-16 / 2.0);
  CHECK(p <= 8.348e-16 * 2.0);
}

TEST_CASE("all printed reliability blocks") {
  for (const auto& e : reference_tables()) {
    CAPTURE(e.language);
    CAPTURE(e.model);
    const auto ratios = ny_ratio(e.table);
    CHECK(std::abs(ratios.certain - e.printed_ratio_certain) <= 0.01);
    CHECK(std::abs(ratios.uncertain - e.printed_ratio_uncertain) <= 0.01);
    CHECK(ratios.certain ==
          doctest::Approx(static_cast<double>(e.table.certain_incorrect) / e.table.certain_correct));
    const auto r = chi_square(e.table);
    CHECK(r.statistic == doctest::Approx(yates_closed_form(as_table(e.table))).epsilon(1e-12));
  }
  CHECK(chi_square(reference_table("ENG", "MCD BERT").table).p_value < 2.2e-16);
  CHECK(chi_square(reference_table("CRO", "BERT").table).p_value > 0.99);
  CHECK(chi_square(reference_table("SLO", "BERT").table).p_value == doctest::Approx(0.0037).epsilon(0.03));
  CHECK_THROWS_AS(reference_table("GER", "BERT"), ValidationError);
}

TEST_CASE("chi-square properties") {
  const Table flat = {{{10, 10}, {10, 10}}};
  CHECK(chi_square(flat).statistic == 0.0);
  CHECK(chi_square(flat).p_value == 1.0);

  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    Table t;
    for (auto& row : t) {
      for (auto& v : row) v = static_cast<double>(1 + rng.below(200));
    }
    const Table transposed = {{{t[0][0], t[1][0]}, {t[0][1], t[1][1]}}};
    const Table swapped = {{{t[1][0], t[1][1]}, {t[0][0], t[0][1]}}};
    for (bool yates : {true, false}) {
      const auto r = chi_square(t, yates);
      CHECK(chi_square(transposed, yates).statistic == doctest::Approx(r.statistic).epsilon(1e-12));
      CHECK(chi_square(swapped, yates).statistic == doctest::Approx(r.statistic).epsilon(1e-12));
      CHECK(r.p_value >= 0.0);
      CHECK(r.p_value <= 1.0);
    }
    CHECK(chi_square(t, true).statistic <= chi_square(t, false).statistic + 1e-12);
    CHECK(chi_square(t, false).statistic == doctest::Approx(pearson_closed_form(t)).epsilon(1e-10));
    CHECK(chi_square(t, true).statistic == doctest::Approx(yates_closed_form(t)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(chi_square(Table{{{0, 0}, {3, 4}}}), ValidationError);
  CHECK_THROWS_AS(chi_square(Table{{{5, 0}, {3, 0}}}), ValidationError);
}

TEST_CASE("expected counts follow the margins") {
  // a Yates-free check: the Pearson statistic equals sum (O - E)^2 / E
  const Table t = {{{880, 71}, {31, 18}}};
  const double n = 1000.0;
  double stat = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double e = (t[i][0] + t[i][1]) * (t[0][j] + t[1][j]) / n;
      stat += (t[i][j] - e) * (t[i][j] - e) / e;
    }
  }
  CHECK(chi_square(t, false).statistic == doctest::Approx(stat).epsilon(1e-12));
  CHECK((911.0 * 951.0 / n) == doctest::Approx(866.361));
}

TEST_CASE("variance partition is strict") {
  DistributionSet set;
  set.items.push_back(PredictionDistribution::from_samples(1, 1, {0.2, 0.8}));    // variance 0.09
  set.items.push_back(PredictionDistribution::from_samples(2, 1, {0.0, 1.0}));    // 0.25
  set.items.push_back(PredictionDistribution::from_samples(3, 0, {0.5, 0.5}));    // 0
  set.items.push_back(PredictionDistribution::from_samples(4, 0, {0.05, 0.95}));  // 0.2025
  auto p = partition_by_variance(set);
  CHECK(p.certain == std::vector<std::uint64_t>{1, 3});
  CHECK(p.uncertain == std::vector<std::uint64_t>{2, 4});
  p = partition_by_variance(set, 0.25);
  CHECK(p.uncertain.empty());
  p = partition_by_variance(set, 0.09 - 1e-12);
  CHECK(p.uncertain.size() == 3);
}

TEST_CASE("point estimate partition") {
  const std::vector<std::uint64_t> ids = {10, 11, 12, 13, 14};
  const std::vector<double> scores = {0.95, 0.45, 0.6, 0.4, 0.05};
  auto p = partition_point_estimates(ids, scores, 2);
  CHECK(p.uncertain == std::vector<std::uint64_t>{11, 12});
  CHECK(p.certain == std::vector<std::uint64_t>{10, 13, 14});
  // 0.25 and 0.75 are equally far from the ends; the smaller id wins
  p = partition_point_estimates(ids, std::vector<double>{0.75, 0.9, 0.1, 0.25, 0.99}, 1);
  CHECK(p.uncertain == std::vector<std::uint64_t>{10});
  CHECK(partition_point_estimates(ids, scores, 0).uncertain.empty());
  CHECK_THROWS_AS(partition_point_estimates(ids, scores, 6), ValidationError);
}

TEST_CASE("contingency and ratio") {
  const std::vector<std::uint64_t> ids = {1, 2, 3, 4, 5, 6};
  const std::vector<int> labels = {1, 0, 1, 0, 1, 1};
  const std::vector<int> predicted = {1, 0, 0, 0, 0, 1};
  const auto t = contingency(ids, labels, predicted, {3, 4, 5});
  CHECK(t.certain_correct == 3);
  CHECK(t.certain_incorrect == 0);
  CHECK(t.uncertain_correct == 1);
  CHECK(t.uncertain_incorrect == 2);
  CHECK(t.total() == 6);
  const auto r = ny_ratio(t);
  CHECK(r.certain == 0.0);
  CHECK(r.uncertain == 2.0);
  CHECK_THROWS_AS(ny_ratio(ContingencyTable{0, 3, 2, 2}), ValidationError);
}

TEST_CASE("fixture predictions reproduce every block") {
  for (const auto& e : reference_tables()) {
    const auto set = reference_predictions(e.table);
    CHECK(set.size() == e.table.total());
    const auto report = analyze_distributions(set, 0.1, 0.5);
    CHECK(report.partition_method == "variance");
    CHECK(report.table.certain_correct == e.table.certain_correct);
    CHECK(report.table.certain_incorrect == e.table.certain_incorrect);
    CHECK(report.table.uncertain_correct == e.table.uncertain_correct);
    CHECK(report.table.uncertain_incorrect == e.table.uncertain_incorrect);
    REQUIRE(report.yates);
    CHECK(report.yates->p_value == chi_square(e.table).p_value);
    REQUIRE(report.pearson);
    CHECK_FALSE(report.pearson->yates);
  }
}

TEST_CASE("point estimate analysis") {
  const std::vector<std::uint64_t> ids = {1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> scores = {0.99, 0.02, 0.55, 0.45, 0.97, 0.6, 0.03, 0.98};
  const std::vector<int> labels = {1, 0, 0, 0, 1, 1, 0, 0};
  const auto r = analyze_point_estimates(ids, scores, labels, 3, 0.5);
  CHECK(r.partition_method == "point_estimate");
  // uncertain: 3 (wrong), 4 (right), 6 (right); certain: 8 wrong, others right
  CHECK(r.table.uncertain_correct == 2);
  CHECK(r.table.uncertain_incorrect == 1);
  CHECK(r.table.certain_correct == 4);
  CHECK(r.table.certain_incorrect == 1);
}

TEST_CASE("report when a group is empty") {
  DistributionSet set;
  for (std::uint64_t i = 0; i < 6; ++i) {
    set.items.push_back(PredictionDistribution::from_samples(i, static_cast<int>(i % 2), {0.1 + 0.8 * (i % 2)}));
  }
  const auto r = analyze_distributions(set, 0.1, 0.5);
  CHECK(r.table.uncertain_correct + r.table.uncertain_incorrect == 0);
  CHECK_FALSE(r.yates);
  CHECK_FALSE(r.note.empty());
  CHECK(render_table(r, "t").find("Note:") != std::string::npos);
}

TEST_CASE("rendered table") {
  const auto& e = reference_table("ENG", "BERT");
  const auto report = analyze_distributions(reference_predictions(e.table), 0.1, 0.5);
  const auto text = render_table(report, "English BERT");
  CHECK(text.rfind("English BERT\n", 0) == 0);
  CHECK(text.find("Certain") != std::string::npos);
  CHECK(text.find("880") != std::string::npos);
  CHECK(text.find("N/Y Ratio") != std::string::npos);
  CHECK(text.find("0.08") != std::string::npos);
  CHECK(text.find("0.58") != std::string::npos);
  CHECK(text.find("p = 1.384e-11") != std::string::npos);
  const auto j = to_json(report);
  CHECK(j["table"]["certain"]["correct"] == 880);
  CHECK(j["table"]["total"] == 1000);
  CHECK(j["chi_square_yates"]["p_value"].get<double>() == report.yates->p_value);
}
