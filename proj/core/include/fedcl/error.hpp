#pragma once

#include <stdexcept>
#include <string>

namespace fedcl {

/// Tensor or layer shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid experiment or partition configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file; the message carries the path and line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An object used out of order, e.g. backward() without a cached forward().
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A loss or parameter became NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedcl
