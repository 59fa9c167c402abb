#include "mcdban/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mcdban/error.hpp"

namespace mcdban {

void adamax_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamaxState& state) {
  if (params.size() != grads.size()) {
    throw ValidationError("adamax_step: parameter and gradient counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw ValidationError("adamax_step: gradient shape mismatch for parameter " + std::to_string(i));
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.u.emplace_back(p->rows(), p->cols());
    }
  } else if (state.m.size() != params.size()) {
    throw ValidationError("adamax_step: state was created for a different parameter set");
  }

  ++state.t;
  const double step = state.lr / (1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i].values();
    auto m = state.m[i].values();
    auto u = state.u[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      u[k] = std::max(state.beta2 * u[k], std::abs(g[k]));
      p[k] -= step * m[k] / (u[k] + state.eps);
    }
  }
}

}  // namespace mcdban
