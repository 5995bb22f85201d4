#pragma once

#include <cstddef>

#include "spoa/tensor.hpp"

namespace spoa {

/// Initial state (bicubic-upsampled LR patch) and goal state (HR patch).
struct StatePair {
  Tensor s0;
  Tensor s_star;
  std::size_t id = 0;
};

}  // namespace spoa
