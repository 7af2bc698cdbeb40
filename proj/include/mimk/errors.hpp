// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mimk {

/// Violated precondition of a public operation.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that do not fit together.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Bad command-line arguments or configuration entries.
class UsageError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Malformed file contents (checkpoints, grids, manifests, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during optimization (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mimk
