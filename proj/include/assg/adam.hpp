#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "assg/matrix.hpp"

namespace assg {

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Zero moments shaped like `params`.
AdamState make_adam(std::span<const Matrix> params, double learning_rate);

/// One bias-corrected Adam step in place. Increments state.step by one.
void adam_update(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state);

}  // namespace assg
