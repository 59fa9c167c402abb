#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "mcdban/matrix.hpp"

namespace mcdban {

// Handle to a node on a Tape.
struct Var {
  std::size_t index = std::numeric_limits<std::size_t>::max();
};

// Reverse-mode differentiation record. Nodes are appended in evaluation
// order, which is a topological order of the computation; backward() walks
// it in reverse. Every node keeps both its forward rule and its derivative
// rule so the whole record can be replayed after leaf values change.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.index].value; }
  // Gradient of the last backward() output with respect to v. Zero-filled
  // when v does not influence the output.
  const Matrix& grad(Var v);
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(output)/d(output) = 1; output must be 1x1.
  void backward(Var output);
  // Node indices in the order the last backward() visited them.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

  // Overwrites a leaf or constant; call replay() to propagate.
  void set_value(Var v, Matrix value);
  // Recomputes every derived node from its parents in record order. Returns
  // true when all recomputed values are bit-identical to the stored ones.
  bool replay();

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // a (r x c) + bias (1 x c) broadcast over rows.
  Var add_row(Var a, Var bias);
  Var add_const(Var a, const Matrix& c);
  // Elementwise product with a constant (dropout masks).
  Var mul_const(Var a, const Matrix& c);
  Var scale(Var a, double s);
  Var transpose(Var a);
  Var softmax_rows(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  // Row-wise normalization to zero mean / unit variance, then gain and bias
  // (both 1 x c).
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
  // 1 x c row: sum_i weights[i] * a.row(i).
  Var weighted_row_sum(Var a, std::vector<double> weights);
  // Rows of `table` picked by ids, in order.
  Var gather_rows(Var table, std::vector<int> ids);
  // Rows [begin, begin + count) of a.
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  // 1 x 1 sum of all entries.
  Var sum(Var a);
  // 1 x 1 arithmetic mean of 1 x 1 inputs.
  Var mean_scalars(std::span<const Var> scalars);
  // 1 x 1 binary cross-entropy of sigmoid(logit) against label.
  Var bce_with_logits(Var logit, int label);

 private:
  using Forward = std::function<Matrix(const Tape&)>;
  using Backward = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Matrix value;
    Matrix grad;
    Forward forward;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(std::initializer_list<Var> parents, Forward forward, Backward backward);
  Var push(std::span<const Var> parents, Forward forward, Backward backward);
  void accumulate(std::size_t index, const Matrix& g);
  Node& node(std::size_t i) { return nodes_[i]; }

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

// Maximum relative error between the tape gradient of fn at `points` and
// central differences (f(x+h) - f(x-h)) / 2h, taken over every coordinate of
// every input. fn must build its graph from the given leaves and return a
// 1 x 1 node. Relative error is |a - n| / max(|a|, |n|, floor).
double grad_check(const std::function<Var(Tape&, std::span<const Var>)>& fn,
                  const std::vector<Matrix>& points, double h = 1e-5, double floor = 1e-6);

}  // namespace mcdban
