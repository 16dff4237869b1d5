#pragma once

#include <stdexcept>
#include <string>

namespace critpt {

/// Shape mismatch between operands (non-square eigensolve, bad matmul, ...).
class dimension_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input violates a documented precondition (NaN entries, bad spectrum, ...).
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problem size exceeds a configured cap.
class size_error : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace critpt
