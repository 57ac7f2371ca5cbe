#pragma once

#include <stdexcept>
#include <string>

namespace epicode {

/// Malformed input, invariant violation, or structurally incompatible data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced (or would produce) a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace epicode
