#pragma once

#include <stdexcept>
#include <string>

namespace spoa {

// Bad arguments, shapes, configs or malformed input files.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A NaN or Inf escaped from a computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spoa
