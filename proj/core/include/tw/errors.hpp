#pragma once

#include <stdexcept>
#include <string>

namespace tw {

/// Bad caller input: shape mismatches, out-of-range arguments, malformed files.
class InvalidArgument : public std::invalid_argument {
public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

/// A structural invariant was broken (non-monotone warp, degenerate range, ...).
class InvariantViolation : public std::logic_error {
public:
  explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

/// Numeric failure at runtime: NaN/Inf values, diverging optimization.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem-level failure: unreadable input, unwritable output directory.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tw
