#pragma once

#include <stdexcept>
#include <string>

namespace microlaser {

/// Invalid parameters or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation could not produce a trustworthy result (divergence,
/// truncation leak, non-convergence, grid overflow). Maps to exit code 3.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace microlaser
