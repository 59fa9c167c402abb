#include "mcdban/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mcdban/error.hpp"

namespace mcdban {

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::grad(Var v) {
  auto& n = nodes_[v.index];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::push(std::initializer_list<Var> parents, Forward forward, Backward backward) {
  return push(std::span<const Var>(parents.begin(), parents.size()), std::move(forward),
              std::move(backward));
}

Var Tape::push(std::span<const Var> parents, Forward forward, Backward backward) {
  bool requires_grad = false;
  for (const auto p : parents) requires_grad = requires_grad || nodes_[p.index].requires_grad;
  Matrix value = forward(*this);
  nodes_.push_back(Node{std::move(value), {}, std::move(forward), std::move(backward), requires_grad});
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(std::size_t index, const Matrix& g) {
  auto& n = nodes_[index];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.values();
  const auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var output) {
  const auto& out = nodes_[output.index].value;
  if (out.rows() != 1 || out.cols() != 1) throw ValidationError("backward: output must be 1x1");
  for (auto& n : nodes_) n.grad = Matrix();
  backward_order_.clear();
  nodes_[output.index].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = output.index + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || !n.requires_grad || n.grad.empty()) continue;
    backward_order_.push_back(i);
    n.backward(*this, i);
  }
}

void Tape::set_value(Var v, Matrix value) {
  auto& n = nodes_[v.index];
  if (n.forward) throw ValidationError("set_value: only leaves and constants can be overwritten");
  require_same_shape("set_value", n.value, value);
  n.value = std::move(value);
}

bool Tape::replay() {
  bool identical = true;
  for (auto& n : nodes_) {
    if (!n.forward) continue;
    Matrix v = n.forward(*this);
    identical = identical && bit_identical(v, n.value);
    n.value = std::move(v);
  }
  return identical;
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) {
    (void)mcdban::matmul(value(a), value(b));  // throws with shapes
  }
  return push(
      {a, b}, [=](const Tape& t) { return mcdban::matmul(t.value(a), t.value(b)); },
      [=](Tape& t, std::size_t self) {
        const Matrix& g = t.node(self).grad;
        if (t.node(a.index).requires_grad) t.accumulate(a.index, matmul_nt(g, t.value(b)));
        if (t.node(b.index).requires_grad) t.accumulate(b.index, matmul_tn(t.value(a), g));
      });
}

Var Tape::add(Var a, Var b) {
  require_same_shape("add", value(a), value(b));
  return push(
      {a, b},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        const auto src = t.value(b).values();
        auto dst = out.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        return out;
      },
      [=](Tape& t, std::size_t self) {
        const Matrix g = t.node(self).grad;
        t.accumulate(a.index, g);
        t.accumulate(b.index, g);
      });
}

Var Tape::add_row(Var a, Var bias) {
  if (value(bias).rows() != 1 || value(bias).cols() != value(a).cols()) {
    require_same_shape("add_row", Matrix(1, value(a).cols()), value(bias));
  }
  return push(
      {a, bias},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        const auto b = t.value(bias).row(0);
        for (std::size_t i = 0; i < out.rows(); ++i) {
          auto r = out.row(i);
          for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
        }
        return out;
      },
      [=](Tape& t, std::size_t self) {
        const Matrix g = t.node(self).grad;
        t.accumulate(a.index, g);
        Matrix gb(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
        }
        t.accumulate(bias.index, gb);
      });
}

Var Tape::add_const(Var a, const Matrix& c) {
  require_same_shape("add_const", value(a), c);
  return push(
      {a},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
        return out;
      },
      [=](Tape& t, std::size_t self) { t.accumulate(a.index, t.node(self).grad); });
}

Var Tape::mul_const(Var a, const Matrix& c) {
  require_same_shape("mul_const", value(a), c);
  return push(
      {a},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
        return out;
      },
      [=](Tape& t, std::size_t self) {
        Matrix g = t.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= c[i];
        t.accumulate(a.index, g);
      });
}

Var Tape::scale(Var a, double s) {
  return push(
      {a},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        for (auto& v : out.values()) v *= s;
        return out;
      },
      [=](Tape& t, std::size_t self) {
        Matrix g = t.node(self).grad;
        for (auto& v : g.values()) v *= s;
        t.accumulate(a.index, g);
      });
}

Var Tape::transpose(Var a) {
  return push(
      {a}, [=](const Tape& t) { return mcdban::transpose(t.value(a)); },
      [=](Tape& t, std::size_t self) {
        t.accumulate(a.index, mcdban::transpose(t.node(self).grad));
      });
}

Var Tape::softmax_rows(Var a) {
  return push(
      {a}, [=](const Tape& t) { return mcdban::softmax_rows(t.value(a)); },
      [=](Tape& t, std::size_t self) {
        const Matrix& y = t.node(self).value;
        const Matrix& g = t.node(self).grad;
        Matrix ga(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
        }
        t.accumulate(a.index, ga);
      });
}

Var Tape::relu(Var a) {
  return push(
      {a},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
        return out;
      },
      [=](Tape& t, std::size_t self) {
        Matrix g = t.node(self).grad;
        const Matrix& x = t.value(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!(x[i] > 0.0)) g[i] = 0.0;
        }
        t.accumulate(a.index, g);
      });
}

Var Tape::sigmoid(Var a) {
  return push(
      {a},
      [=](const Tape& t) {
        Matrix out = t.value(a);
        for (auto& v : out.values()) v = mcdban::sigmoid(v);
        return out;
      },
      [=](Tape& t, std::size_t self) {
        Matrix g = t.node(self).grad;
        const Matrix& y = t.node(self).value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
        t.accumulate(a.index, g);
      });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const std::size_t cols = value(a).cols();
  require_same_shape("layer_norm", Matrix(1, cols), value(gain));
  require_same_shape("layer_norm", Matrix(1, cols), value(bias));
  return push(
      {a, gain, bias},
      [=](const Tape& t) {
        const Matrix& x = t.value(a);
        const auto gm = t.value(gain).row(0);
        const auto bs = t.value(bias).row(0);
        Matrix out(x.rows(), x.cols());
        const auto n = static_cast<double>(x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          const auto r = x.row(i);
          double mean = 0.0;
          for (const double v : r) mean += v;
          mean /= n;
          double var = 0.0;
          for (const double v : r) var += (v - mean) * (v - mean);
          var /= n;
          const double inv = 1.0 / std::sqrt(var + eps);
          for (std::size_t j = 0; j < r.size(); ++j) out(i, j) = gm[j] * (r[j] - mean) * inv + bs[j];
        }
        return out;
      },
      [=](Tape& t, std::size_t self) {
        const Matrix& x = t.value(a);
        const auto gm = t.value(gain).row(0);
        const Matrix& g = t.node(self).grad;
        const auto n = static_cast<double>(x.cols());
        Matrix gx(x.rows(), x.cols());
        Matrix ggain(1, x.cols());
        Matrix gbias(1, x.cols());
        std::vector<double> xhat(x.cols());
        std::vector<double> dxhat(x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          const auto r = x.row(i);
          double mean = 0.0;
          for (const double v : r) mean += v;
          mean /= n;
          double var = 0.0;
          for (const double v : r) var += (v - mean) * (v - mean);
          var /= n;
          const double inv = 1.0 / std::sqrt(var + eps);
          double sum_d = 0.0;
          double sum_dx = 0.0;
          for (std::size_t j = 0; j < r.size(); ++j) {
            xhat[j] = (r[j] - mean) * inv;
            dxhat[j] = g(i, j) * gm[j];
            ggain(0, j) += g(i, j) * xhat[j];
            gbias(0, j) += g(i, j);
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xhat[j];
          }
          for (std::size_t j = 0; j < r.size(); ++j) {
            gx(i, j) = inv * (dxhat[j] - sum_d / n - xhat[j] * sum_dx / n);
          }
        }
        t.accumulate(a.index, gx);
        t.accumulate(gain.index, ggain);
        t.accumulate(bias.index, gbias);
      });
}

Var Tape::weighted_row_sum(Var a, std::vector<double> weights) {
  if (weights.size() != value(a).rows()) {
    throw ValidationError("weighted_row_sum: weight count does not match row count");
  }
  return push(
      {a},
      [=](const Tape& t) {
        const Matrix& x = t.value(a);
        Matrix out(1, x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += weights[i] * x(i, j);
        }
        return out;
      },
      [=](Tape& t, std::size_t self) {
        const Matrix& g = t.node(self).grad;
        Matrix ga(weights.size(), g.cols());
        for (std::size_t i = 0; i < weights.size(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) = weights[i] * g(0, j);
        }
        t.accumulate(a.index, ga);
      });
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
  const std::size_t n_rows = value(table).rows();
  for (const int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= n_rows) {
      throw ValidationError("gather_rows: id " + std::to_string(id) + " out of range");
    }
  }
  return push(
      {table},
      [=](const Tape& t) {
        const Matrix& tb = t.value(table);
        Matrix out(ids.size(), tb.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto src = tb.row(static_cast<std::size_t>(ids[i]));
          std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
      },
      [=](Tape& t, std::size_t self) {
        const Matrix& g = t.node(self).grad;
        Matrix gt(n_rows, g.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto dst = gt.row(static_cast<std::size_t>(ids[i]));
          const auto src = g.row(i);
          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        }
        t.accumulate(table.index, gt);
      });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const std::size_t rows = value(a).rows();
  if (begin + count > rows) throw ValidationError("slice_rows: range out of bounds");
  return push(
      {a},
      [=](const Tape& t) {
        const Matrix& m = t.value(a);
        const auto first = m.values().begin() + static_cast<std::ptrdiff_t>(begin * m.cols());
        return Matrix(count, m.cols(),
                      std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * m.cols())));
      },
      [=](Tape& t, std::size_t self) {
        const Matrix& g = t.node(self).grad;
        Matrix ga(rows, g.cols());
        std::copy(g.values().begin(), g.values().end(),
                  ga.values().begin() + static_cast<std::ptrdiff_t>(begin * g.cols()));
        t.accumulate(a.index, ga);
      });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  for (const auto p : parts) {
    if (value(p).rows() != rows) throw ValidationError("concat_cols: row count mismatch");
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(
      parts,
      [=](const Tape& t) {
        std::size_t cols = 0;
        for (const auto p : inputs) cols += t.value(p).cols();
        Matrix out(rows, cols);
        std::size_t offset = 0;
        for (const auto p : inputs) {
          const Matrix& m = t.value(p);
          for (std::size_t i = 0; i < rows; ++i) {
            std::copy(m.row(i).begin(), m.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
          }
          offset += m.cols();
        }
        return out;
      },
      [=](Tape& t, std::size_t self) {
        const Matrix g = t.node(self).grad;
        std::size_t offset = 0;
        for (const auto p : inputs) {
          const std::size_t cols = t.value(p).cols();
          Matrix gp(rows, cols);
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) gp(i, j) = g(i, offset + j);
          }
          t.accumulate(p.index, gp);
          offset += cols;
        }
      });
}

Var Tape::sum(Var a) {
  return push(
      {a},
      [=](const Tape& t) {
        double s = 0.0;
        for (const double v : t.value(a).values()) s += v;
        return Matrix(1, 1, s);
      },
      [=](Tape& t, std::size_t self) {
        const Matrix& x = t.value(a);
        t.accumulate(a.index, Matrix(x.rows(), x.cols(), t.node(self).grad[0]));
      });
}

Var Tape::mean_scalars(std::span<const Var> scalars) {
  if (scalars.empty()) throw ValidationError("mean_scalars: no inputs");
  for (const auto s : scalars) {
    if (value(s).size() != 1) throw ValidationError("mean_scalars: inputs must be 1x1");
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  return push(
      scalars,
      [=](const Tape& t) {
        double s = 0.0;
        for (const auto v : inputs) s += t.value(v)[0];
        return Matrix(1, 1, s * inv_n);
      },
      [=](Tape& t, std::size_t self) {
        const double g = t.node(self).grad[0] * inv_n;
        for (const auto v : inputs) t.accumulate(v.index, Matrix(1, 1, g));
      });
}

Var Tape::bce_with_logits(Var logit, int label) {
  if (value(logit).size() != 1) throw ValidationError("bce_with_logits: logit must be 1x1");
  return push(
      {logit},
      [=](const Tape& t) { return Matrix(1, 1, bce_loss(mcdban::sigmoid(t.value(logit)[0]), label)); },
      [=](Tape& t, std::size_t self) {
        const double p = mcdban::sigmoid(t.value(logit)[0]);
        t.accumulate(logit.index, Matrix(1, 1, t.node(self).grad[0] * bce_logit_gradient(p, label)));
      });
}

double grad_check(const std::function<Var(Tape&, std::span<const Var>)>& fn,
                  const std::vector<Matrix>& points, double h, double floor) {
  auto evaluate = [&](const std::vector<Matrix>& at) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& m : at) leaves.push_back(t.leaf(m));
    return t.value(fn(t, leaves))[0];
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : points) leaves.push_back(tape.leaf(m));
  tape.backward(fn(tape, leaves));

  double worst = 0.0;
  std::vector<Matrix> probe = points;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Matrix analytic = tape.grad(leaves[p]);
    for (std::size_t i = 0; i < points[p].size(); ++i) {
      const double x = points[p][i];
      probe[p][i] = x + h;
      const double up = evaluate(probe);
      probe[p][i] = x - h;
      const double down = evaluate(probe);
      probe[p][i] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace mcdban
