// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dp3df {

/// A caller broke a precondition (shape, extent, parameter range).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace dp3df
