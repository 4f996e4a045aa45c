#pragma once

#include <stdexcept>
#include <string>

namespace ggpfn {

// Base class for all library failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched or invalid tensor extents.
struct ShapeError : Error {
  using Error::Error;
};

// Bad hyperparameter, config key, or config value.
struct ConfigError : Error {
  using Error::Error;
};

// File parsing and persistence problems.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ggpfn
