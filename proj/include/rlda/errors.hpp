#pragma once

#include <stdexcept>
#include <string>

namespace rlda {

// Each error class maps onto one CLI exit code (see tools/rlda.cpp).

/// File could not be opened, read, or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input or configuration outside the documented domain.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A maintained invariant (cache, count table, container) no longer holds.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace rlda
