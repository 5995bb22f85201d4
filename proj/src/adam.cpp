#include "spoa/adam.hpp"

#include <cmath>
#include <string>

#include "spoa/errors.hpp"

namespace spoa {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ValidationError("adam_step: layout mismatch (params " + std::to_string(params.size()) + ", grads " +
                          std::to_string(grads.size()) + ", moments " + std::to_string(state.first_moment.size()) +
                          ")");
  }
  if (!(lr > 0.0)) throw ValidationError("adam_step: learning rate must be positive");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace spoa
