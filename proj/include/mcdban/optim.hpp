#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcdban/matrix.hpp"

namespace mcdban {

// Adamax: Adam with the second moment replaced by an exponentially weighted
// infinity norm.
struct AdamaxState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  // Per-parameter first moment and infinity-norm accumulator; allocated on
  // the first step.
  std::vector<Matrix> m;
  std::vector<Matrix> u;
};

// One update, in place:
//   m <- b1 m + (1 - b1) g
//   u <- max(b2 u, |g|)
//   p <- p - lr / (1 - b1^t) * m / (u + eps)
void adamax_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamaxState& state);

}  // namespace mcdban
