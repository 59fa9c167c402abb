#include "mcdban/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"
#include "mcdban/rng.hpp"
#include "mcdban/threshold.hpp"

namespace mcdban {

SideFeatureTable parse_side_features(std::string_view csv_text) {
  const CsvTable csv = parse_csv(csv_text);
  if (csv.header.empty() || csv.header.front() != "id") {
    throw ValidationError("side features: first column must be 'id'");
  }
  if (csv.header.size() < 2) throw ValidationError("side features: no feature columns");
  SideFeatureTable table;
  table.names.assign(csv.header.begin() + 1, csv.header.end());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string where = "side features line " + std::to_string(csv.lines[r]);
    if (row.size() != csv.header.size()) throw ValidationError(where + ": wrong number of fields");
    std::uint64_t id = 0;
    const auto& f = row.front();
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), id);
    if (ec != std::errc() || p != f.data() + f.size()) throw ValidationError(where + ": bad id '" + f + "'");
    std::vector<double> values;
    for (std::size_t c = 1; c < row.size(); ++c) {
      double v = 0.0;
      const auto& s = row[c];
      auto [q, ec2] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec2 != std::errc() || q != s.data() + s.size() || !std::isfinite(v)) {
        throw ValidationError(where + ": bad value '" + s + "' for " + table.names[c - 1]);
      }
      if (v < -1.0 || v > 1.0) {
        table.warnings.push_back(where + ": " + table.names[c - 1] + " = " + s + " is outside [-1, 1]");
      }
      values.push_back(v);
    }
    if (!table.rows.emplace(id, std::move(values)).second) {
      throw ValidationError(where + ": duplicate id " + std::to_string(id));
    }
  }
  return table;
}

SideFeatureTable load_side_features(const std::filesystem::path& path) {
  return parse_side_features(read_text_file(path));
}

FusionMatrix build_features(const DistributionSet& set, const SideFeatureTable* side) {
  if (set.size() == 0) throw ValidationError("build_features: no predictions");
  const std::size_t T = set.T();
  for (const auto& d : set.items) {
    if (d.T() != T) throw ValidationError("build_features: instances differ in T");
  }
  const std::size_t s = side ? side->names.size() : 0;
  FusionMatrix fm;
  fm.sample_columns = T;
  for (std::size_t j = 0; j < T; ++j) fm.columns.push_back("sample_" + std::to_string(j));
  if (side) fm.columns.insert(fm.columns.end(), side->names.begin(), side->names.end());
  fm.ids = set.ids();
  fm.labels = set.labels();
  fm.X = Matrix(set.size(), T + s);
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto row = fm.X.row(i);
    std::vector<double> sorted = set.items[i].samples;
    std::sort(sorted.begin(), sorted.end());
    std::copy(sorted.begin(), sorted.end(), row.begin());
    if (side) {
      auto it = side->rows.find(fm.ids[i]);
      if (it == side->rows.end()) {
        throw ValidationError("build_features: id " + std::to_string(fm.ids[i]) + " missing from side features");
      }
      std::copy(it->second.begin(), it->second.end(), row.begin() + static_cast<std::ptrdiff_t>(T));
    }
  }
  return fm;
}

Standardizer Standardizer::fit(const Matrix& X, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("standardizer: no rows");
  Standardizer st;
  st.mean.assign(X.cols(), 0.0);
  st.scale.assign(X.cols(), 1.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < X.cols(); ++c) st.mean[c] += X(r, c);
  }
  for (auto& m : st.mean) m /= n;
  std::vector<double> ss(X.cols(), 0.0);
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < X.cols(); ++c) {
      const double d = X(r, c) - st.mean[c];
      ss[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < X.cols(); ++c) {
    const double sd = std::sqrt(ss[c] / n);
    st.scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  return st;
}

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) throw ValidationError("standardizer: column count mismatch");
  Matrix out(X.rows(), X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t c = 0; c < X.cols(); ++c) out(r, c) = (X(r, c) - mean[c]) / scale[c];
  }
  return out;
}

double LinearModel::decision(std::span<const double> x) const {
  if (x.size() != weights.size()) throw ValidationError("linear model: dimension mismatch");
  double z = bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

int LinearModel::predict(std::span<const double> x) const { return decision(x) >= 0.0 ? 1 : 0; }

std::vector<int> LinearModel::predict(const Matrix& X) const {
  std::vector<int> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) out[r] = predict(X.row(r));
  return out;
}

namespace {

// argmin_b sum_i max(0, 1 - y_i (s_i + b)) with y in {-1, +1}. The loss is
// convex and piecewise linear; the midpoint of the minimizing interval is
// returned.
double best_intercept(std::span<const double> s, std::span<const double> y) {
  const std::size_t n = s.size();
  std::vector<double> knots(n);
  for (std::size_t i = 0; i < n; ++i) knots[i] = y[i] - s[i];
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  auto loss = [&](double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::max(0.0, 1.0 - y[i] * (s[i] + b));
    return total;
  };
  // Positives contribute slope -1 while b < knot, negatives +1 once b > knot.
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < n; ++i) (y[i] > 0 ? pos : neg).push_back(y[i] - s[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  std::vector<double> values(knots.size());
  values[0] = loss(knots[0]);
  std::size_t pos_le = 0;  // positives with knot <= current b
  std::size_t neg_le = 0;
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    while (pos_le < pos.size() && pos[pos_le] <= knots[j]) ++pos_le;
    while (neg_le < neg.size() && neg[neg_le] <= knots[j]) ++neg_le;
    const double slope = static_cast<double>(neg_le) - static_cast<double>(pos.size() - pos_le);
    values[j + 1] = values[j] + slope * (knots[j + 1] - knots[j]);
  }
  const double best = *std::min_element(values.begin(), values.end());
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  std::size_t first = knots.size();
  std::size_t last = 0;
  for (std::size_t j = 0; j < knots.size(); ++j) {
    if (values[j] <= best + tol) {
      first = std::min(first, j);
      last = j;
    }
  }
  return 0.5 * (knots[first] + knots[last]);
}

}  // namespace

LinearModel train_linear(const Matrix& X, std::span<const int> y, const LinearOptions& options) {
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  if (y.size() != n) throw ValidationError("train_linear: X and y differ in length");
  if (n == 0) throw ValidationError("train_linear: no rows");
  if (!(options.C > 0.0) || !std::isfinite(options.C)) throw ValidationError("train_linear: C must be > 0");
  if (options.epochs < 1) throw ValidationError("train_linear: epochs must be >= 1");
  std::size_t positives = 0;
  for (int label : y) {
    if (label != 0 && label != 1) throw ValidationError("train_linear: labels must be 0/1");
    positives += static_cast<std::size_t>(label);
  }
  if (positives == 0 || positives == n) throw ValidationError("train_linear: both classes are required");

  const double lambda = 1.0 / (options.C * static_cast<double>(n));
  const std::size_t total_steps = options.epochs * n;
  const std::size_t tail = std::max<std::size_t>(1, (total_steps + 9) / 10);
  const std::size_t tail_start = total_steps - tail;

  // The intercept rides along as an extra constant feature during descent.
  std::vector<double> w(d + 1, 0.0);
  std::vector<double> avg(d + 1, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double yi = y[i] == 1 ? 1.0 : -1.0;
      const auto x = X.row(i);
      double margin = w[d];
      for (std::size_t j = 0; j < d; ++j) margin += w[j] * x[j];
      margin *= yi;
      const double shrink = 1.0 - eta * lambda;
      for (auto& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] += eta * yi * x[j];
        w[d] += eta * yi;
      }
      if (t > tail_start) {
        for (std::size_t j = 0; j <= d; ++j) avg[j] += w[j];
      }
    }
  }
  LinearModel model;
  model.options = options;
  model.weights.assign(avg.begin(), avg.begin() + static_cast<std::ptrdiff_t>(d));
  for (auto& v : model.weights) v /= static_cast<double>(tail);
  for (double v : model.weights) {
    if (!std::isfinite(v)) throw NumericalError("train_linear: non-finite weights");
  }
  std::vector<double> s(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    const auto x = X.row(i);
    for (std::size_t j = 0; j < d; ++j) z += model.weights[j] * x[j];
    s[i] = z;
    ys[i] = y[i] == 1 ? 1.0 : -1.0;
  }
  model.bias = best_intercept(s, ys);
  return model;
}

std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("kfold: k must be >= 2");
  if (labels.size() < k) throw ValidationError("kfold: fewer rows than folds");
  std::vector<std::size_t> fold(labels.size(), 0);
  Rng rng(derive_seed(seed, 0xf01d));
  std::size_t next = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    rng.shuffle(members);
    for (std::size_t i : members) {
      fold[i] = next;
      next = (next + 1) % k;
    }
  }
  return fold;
}

namespace {

FoldResult run_fold(const Matrix& X, std::span<const int> y, std::span<const std::size_t> assignment,
                    std::size_t f, const LinearOptions& base, std::uint64_t seed) {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) (assignment[i] == f ? test_rows : train_rows).push_back(i);
  if (test_rows.empty()) throw ValidationError("kfold: fold " + std::to_string(f) + " is empty");
  std::size_t pos = 0;
  for (std::size_t i : train_rows) pos += static_cast<std::size_t>(y[i] == 1);
  if (pos == 0 || pos == train_rows.size()) {
    throw ValidationError("kfold: a class is absent from the training part of fold " + std::to_string(f));
  }
  const Standardizer st = Standardizer::fit(X, train_rows);
  auto take = [&](const std::vector<std::size_t>& rows, Matrix& out, std::vector<int>& labels) {
    out = Matrix(rows.size(), X.cols());
    labels.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < X.cols(); ++c) out(r, c) = (X(rows[r], c) - st.mean[c]) / st.scale[c];
      labels[r] = y[rows[r]];
    }
  };
  Matrix Xtr;
  Matrix Xte;
  std::vector<int> ytr;
  std::vector<int> yte;
  take(train_rows, Xtr, ytr);
  take(test_rows, Xte, yte);
  LinearOptions opts = base;
  opts.seed = derive_seed(seed, f);
  const LinearModel model = train_linear(Xtr, ytr, opts);
  const MetricReport m = metric_report(model.predict(Xte), yte);
  return {f, train_rows.size(), test_rows.size(), m.accuracy, m.f1};
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace

CvReport kfold_cv(const Matrix& X, std::span<const int> y, std::size_t k, const LinearOptions& options,
                  std::uint64_t seed, std::optional<std::vector<std::size_t>> assignment, std::size_t threads) {
  if (y.size() != X.rows()) throw ValidationError("kfold: X and y differ in length");
  std::vector<std::size_t> folds;
  if (assignment) {
    if (assignment->size() != y.size()) throw ValidationError("kfold: fold assignment length mismatch");
    if (k < 2) throw ValidationError("kfold: k must be >= 2");
    for (std::size_t f : *assignment) {
      if (f >= k) throw ValidationError("kfold: fold index out of range");
    }
    folds = std::move(*assignment);
  } else {
    folds = stratified_folds(y, k, seed);
  }

  CvReport report;
  report.k = k;
  report.seed = seed;
  report.options = options;
  report.columns = X.cols();
  report.folds.resize(k);
  std::vector<std::exception_ptr> errors(k);
  auto work = [&](std::size_t f) {
    try {
      report.folds[f] = run_fold(X, y, folds, f, options, seed);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };
  if (threads <= 1) {
    for (std::size_t f = 0; f < k; ++f) work(f);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(threads, k); ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t f = w; f < k; f += threads) work(f);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<double> acc;
  std::vector<double> f1;
  for (const auto& r : report.folds) {
    acc.push_back(r.accuracy);
    f1.push_back(r.f1);
  }
  std::tie(report.mean_accuracy, report.std_accuracy) = mean_std(acc);
  std::tie(report.mean_f1, report.std_f1) = mean_std(f1);
  return report;
}

nlohmann::json to_json(const CvReport& report) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["C"] = report.options.C;
  j["epochs"] = report.options.epochs;
  j["columns"] = report.columns;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) {
    j["folds"].push_back({{"fold", f.fold},
                          {"train_size", f.train_size},
                          {"test_size", f.test_size},
                          {"accuracy", f.accuracy},
                          {"f1", f.f1}});
  }
  j["accuracy"] = {{"mean", report.mean_accuracy}, {"std", report.std_accuracy}};
  j["f1"] = {{"mean", report.mean_f1}, {"std", report.std_f1}};
  return nlohmann::json::parse(j.dump());
}

std::vector<double> permutation_importance(const LinearModel& model, const Matrix& X, std::span<const int> y,
                                           std::size_t repeats, std::uint64_t seed) {
  if (y.size() != X.rows()) throw ValidationError("permutation_importance: X and y differ in length");
  if (repeats < 1) throw ValidationError("permutation_importance: repeats must be >= 1");
  const double base = metric_report(model.predict(X), y).accuracy;
  std::vector<double> drop(X.cols(), 0.0);
  Matrix work = X;
  std::vector<double> column(X.rows());
  for (std::size_t c = 0; c < X.cols(); ++c) {
    Rng rng(derive_seed(seed, c));
    for (std::size_t r = 0; r < repeats; ++r) {
      for (std::size_t i = 0; i < X.rows(); ++i) column[i] = X(i, c);
      rng.shuffle(column);
      for (std::size_t i = 0; i < X.rows(); ++i) work(i, c) = column[i];
      drop[c] += base - metric_report(model.predict(work), y).accuracy;
    }
    for (std::size_t i = 0; i < X.rows(); ++i) work(i, c) = X(i, c);
    drop[c] /= static_cast<double>(repeats);
  }
  return drop;
}

}  // namespace mcdban
