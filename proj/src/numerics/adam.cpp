#include "assg/adam.hpp"

#include <cmath>

namespace assg {

AdamState make_adam(std::span<const Matrix> params, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.rows(), p.cols());
    state.second_moment.emplace_back(p.rows(), p.cols());
  }
  return state;
}

void adam_update(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_update: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " +
                         std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k], grads[k], "adam_update grad");
    require_same_shape(params[k], state.first_moment[k], "adam_update moment");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);

  // Locals keep the loop free of aliasing with the state's own doubles.
  const double b1 = state.beta1, b2 = state.beta2, lr = state.learning_rate, eps = state.epsilon;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace assg
