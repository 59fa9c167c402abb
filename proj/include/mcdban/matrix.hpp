#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mcdban {

class Rng;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  // Same as the (rows, cols, values) constructor but rejects NaN/Inf.
  static Matrix checked(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Matrix identity(std::size_t n);
  static Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b and a * b^T without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& m);

// Logistic function, stable for large |x|.
double sigmoid(double x);

// Inverted-dropout mask: each entry is 0 with probability rate, otherwise
// 1/(1-rate). Entries are drawn in row-major order.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

inline constexpr double kBceClamp = 1e-12;

// Binary cross-entropy of a probability against a {0,1} label; the score is
// clamped to [kBceClamp, 1 - kBceClamp].
double bce_loss(double score, int label);
// Derivative of bce_loss(sigmoid(z), label) with respect to z.
double bce_logit_gradient(double score, int label);

}  // namespace mcdban
