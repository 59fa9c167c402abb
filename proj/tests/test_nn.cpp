#include <doctest.h>

#include <cmath>

#include "mcdban/error.hpp"
#include "mcdban/matrix.hpp"
#include "mcdban/optim.hpp"
#include "mcdban/rng.hpp"
#include "mcdban/tape.hpp"

using namespace mcdban;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) { return Matrix::uniform(r, c, -2.0, 2.0, rng); }

constexpr double kGradTol = 1e-4;

}  // namespace

TEST_CASE("matmul variants agree with the naive product") {
  Rng rng(1);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(4, 2, rng);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  const Matrix tn = matmul_tn(transpose(a), b);
  const Matrix nt = matmul_nt(a, transpose(b));
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(tn[i] == doctest::Approx(c[i]).epsilon(1e-14));
    CHECK(nt[i] == doctest::Approx(c[i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(matmul(a, a), ValidationError);
  CHECK(matmul(Matrix::identity(3), a) == a);
}

TEST_CASE("checked matrices reject non-finite values") {
  CHECK_THROWS_AS(Matrix::checked(1, 2, {1.0, NAN}), ValidationError);
  CHECK_THROWS_AS(Matrix::checked(1, 1, {INFINITY}), ValidationError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = random_matrix(4, 6, rng);
    const Matrix s = softmax_rows(m);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (double v : s.row(r)) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-12);
      const double shift = rng.uniform(-50.0, 50.0);
      for (auto& v : m.row(r)) v += shift;
    }
    const Matrix shifted = softmax_rows(m);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(shifted[i] - s[i]) <= 1e-12);
  }
  const Matrix big{{1000.0, 0.0}};
  CHECK(softmax_rows(big)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("sigmoid and bce") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(kBceClamp)));
  CHECK(bce_logit_gradient(0.8, 1) == doctest::Approx(-0.2));
  CHECK(bce_logit_gradient(0.8, 0) == doctest::Approx(0.8));
}

TEST_CASE("dropout mask zero fraction matches the rate") {
  constexpr std::size_t N = 100000;
  for (double rate : {0.1, 0.3, 0.5}) {
    Rng rng(7);
    const Matrix m = dropout_mask(1, N, rate, rng);
    std::size_t zeros = 0;
    for (double v : m.values()) {
      if (v == 0.0) {
        ++zeros;
      } else {
        CHECK(v == doctest::Approx(1.0 / (1.0 - rate)));
      }
    }
    const double frac = static_cast<double>(zeros) / N;
    CHECK(std::abs(frac - rate) <= 4.0 * std::sqrt(rate * (1.0 - rate) / N));
  }
  Rng rng(1);
  const Matrix none = dropout_mask(3, 3, 0.0, rng);
  for (double v : none.values()) CHECK(v == 1.0);
  CHECK_THROWS_AS(dropout_mask(1, 1, 1.0, rng), ValidationError);
  CHECK_THROWS_AS(dropout_mask(1, 1, -0.1, rng), ValidationError);
}

TEST_CASE("every tape primitive passes the gradient check") {
  Rng rng(3);
  using Fn = std::function<Var(Tape&, std::span<const Var>)>;
  struct Case {
    const char* name;
    Fn fn;
    std::vector<Matrix> points;
  };
  const Matrix w = random_matrix(3, 4, rng);
  const Matrix mask = random_matrix(3, 4, rng);
  std::vector<Case> cases;
  cases.push_back({"matmul", [](Tape& t, std::span<const Var> v) { return t.sum(t.matmul(v[0], v[1])); },
                   {random_matrix(3, 4, rng), random_matrix(4, 2, rng)}});
  cases.push_back({"add", [&](Tape& t, std::span<const Var> v) { return t.sum(t.mul_const(t.add(v[0], v[1]), mask)); },
                   {random_matrix(3, 4, rng), random_matrix(3, 4, rng)}});
  cases.push_back({"add_row", [&](Tape& t, std::span<const Var> v) { return t.sum(t.mul_const(t.add_row(v[0], v[1]), mask)); },
                   {random_matrix(3, 4, rng), random_matrix(1, 4, rng)}});
  cases.push_back({"add_const", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.mul_const(t.add_const(v[0], w), mask));
                   }, {random_matrix(3, 4, rng)}});
  cases.push_back({"scale", [&](Tape& t, std::span<const Var> v) { return t.sum(t.mul_const(t.scale(v[0], -1.7), mask)); },
                   {random_matrix(3, 4, rng)}});
  cases.push_back({"transpose", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.matmul(t.transpose(v[0]), v[1]));
                   }, {random_matrix(3, 4, rng), random_matrix(3, 2, rng)}});
  cases.push_back({"softmax_rows", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.mul_const(t.softmax_rows(v[0]), mask));
                   }, {random_matrix(3, 4, rng)}});
  cases.push_back({"relu", [&](Tape& t, std::span<const Var> v) { return t.sum(t.mul_const(t.relu(v[0]), mask)); },
                   {Matrix{{1.3, -0.7, 0.4, -1.9}, {0.2, 1.1, -0.3, 0.8}, {-1.2, 0.6, 1.7, -0.5}}}});
  cases.push_back({"sigmoid", [&](Tape& t, std::span<const Var> v) { return t.sum(t.mul_const(t.sigmoid(v[0]), mask)); },
                   {random_matrix(3, 4, rng)}});
  cases.push_back({"layer_norm", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.mul_const(t.layer_norm(v[0], v[1], v[2]), mask));
                   }, {random_matrix(3, 4, rng), random_matrix(1, 4, rng), random_matrix(1, 4, rng)}});
  cases.push_back({"weighted_row_sum", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.matmul(t.weighted_row_sum(v[0], {0.5, -1.0, 2.0}), v[1]));
                   }, {random_matrix(3, 4, rng), random_matrix(4, 1, rng)}});
  cases.push_back({"gather_rows", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.mul_const(t.gather_rows(v[0], {2, 0, 2}), mask));
                   }, {random_matrix(4, 4, rng)}});
  cases.push_back({"slice_rows", [&](Tape& t, std::span<const Var> v) {
                     return t.sum(t.matmul(t.slice_rows(v[0], 1, 2), v[1]));
                   }, {random_matrix(4, 3, rng), random_matrix(3, 2, rng)}});
  cases.push_back({"concat_cols", [&](Tape& t, std::span<const Var> v) {
                     const Var parts[] = {v[0], v[1]};
                     return t.sum(t.mul_const(t.concat_cols(parts), mask));
                   }, {random_matrix(3, 1, rng), random_matrix(3, 3, rng)}});
  cases.push_back({"mean_scalars", [&](Tape& t, std::span<const Var> v) {
                     const Var parts[] = {t.sum(v[0]), t.sum(t.relu(v[1])), t.sum(v[0])};
                     return t.mean_scalars(parts);
                   }, {random_matrix(2, 2, rng), Matrix{{0.5, -0.3}}}});
  cases.push_back({"bce_with_logits y=1", [&](Tape& t, std::span<const Var> v) { return t.bce_with_logits(t.sum(v[0]), 1); },
                   {random_matrix(1, 3, rng)}});
  cases.push_back({"bce_with_logits y=0", [&](Tape& t, std::span<const Var> v) { return t.bce_with_logits(t.sum(v[0]), 0); },
                   {random_matrix(1, 3, rng)}});
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_check(c.fn, c.points) < kGradTol);
  }
}

TEST_CASE("tape reuse: fan-out accumulates gradient") {
  Tape t;
  const Var x = t.leaf(Matrix{{3.0}});
  const Var y = t.matmul(x, x);  // x^2
  const Var z = t.add(y, x);     // x^2 + x
  t.backward(t.sum(z));
  CHECK(t.grad(x)[0] == doctest::Approx(7.0));
  // reverse record order
  const auto& order = t.backward_order();
  REQUIRE(!order.empty());
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i] < order[i - 1]);
}

TEST_CASE("replay recomputes bit-identically and tracks leaf changes") {
  Rng rng(4);
  Tape t;
  const Var a = t.leaf(random_matrix(3, 3, rng));
  const Var b = t.leaf(random_matrix(1, 3, rng));
  const Var out = t.sum(t.softmax_rows(t.add_row(t.matmul(a, a), b)));
  const double before = t.value(out)[0];
  CHECK(t.replay());
  CHECK(t.value(out)[0] == before);
  t.set_value(b, Matrix(1, 3, 100.0));
  t.replay();
  CHECK(t.value(out)[0] == doctest::Approx(3.0));
  CHECK_THROWS_AS(t.set_value(out, Matrix(1, 1)), ValidationError);
  CHECK_THROWS_AS(t.backward(t.matmul(a, a)), ValidationError);
}

TEST_CASE("adamax follows the recurrence exactly") {
  Matrix p{{1.0, -2.0}};
  Matrix* params[] = {&p};
  AdamaxState st;
  st.lr = 0.1;
  double m0 = 0, m1 = 0, u0 = 0, u1 = 0, p0 = 1.0, p1 = -2.0;
  const std::vector<std::pair<double, double>> grads = {{0.5, -1.0}, {-0.25, 2.0}, {1.0, 0.0}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const auto [g0, g1] = grads[t - 1];
    const std::vector<Matrix> g = {Matrix{{g0, g1}}};
    adamax_step(params, g, st);
    m0 = 0.9 * m0 + 0.1 * g0;
    m1 = 0.9 * m1 + 0.1 * g1;
    u0 = std::max(0.999 * u0, std::abs(g0));
    u1 = std::max(0.999 * u1, std::abs(g1));
    const double step = 0.1 / (1.0 - std::pow(0.9, static_cast<double>(t)));
    p0 -= step * m0 / (u0 + 1e-8);
    p1 -= step * m1 / (u1 + 1e-8);
    CHECK(p(0, 0) == doctest::Approx(p0).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(p1).epsilon(1e-14));
  }
  CHECK(st.t == 3);
}

TEST_CASE("adamax is deterministic") {
  Rng rng(9);
  const Matrix init = random_matrix(4, 4, rng);
  const Matrix g = random_matrix(4, 4, rng);
  Matrix a = init;
  Matrix b = init;
  AdamaxState sa;
  AdamaxState sb;
  Matrix* pa[] = {&a};
  Matrix* pb[] = {&b};
  const std::vector<Matrix> grads = {g};
  for (int i = 0; i < 5; ++i) {
    adamax_step(pa, grads, sa);
    adamax_step(pb, grads, sb);
  }
  CHECK(a == b);
  const std::vector<Matrix> wrong = {Matrix(2, 2)};
  CHECK_THROWS_AS(adamax_step(pa, wrong, sa), ValidationError);
}

TEST_CASE("rng streams") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  Rng a(5);
  Rng b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng r(6);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / 10000 == doctest::Approx(0.5).epsilon(0.03));
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}
