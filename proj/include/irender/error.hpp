// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace irender {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (files, flags, shapes). CLI exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or divergence during optimization. CLI exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace irender
