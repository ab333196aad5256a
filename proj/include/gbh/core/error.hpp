// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gbh {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extent mismatch between tensors. `axis()` names the offending axis
// ("channels", "height", ...).
class DimensionError : public Error {
 public:
  DimensionError(std::string op, std::string axis, const std::string& detail)
      : Error(op + ": dimension mismatch on axis '" + axis + "': " + detail),
        op_(std::move(op)),
        axis_(std::move(axis)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string op_;
  std::string axis_;
};

// Invalid block or model configuration.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Caller violated an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by an op (debug builds only).
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string file, std::string element, const std::string& detail)
      : Error(file + ": <" + element + ">: " + detail),
        file_(std::move(file)),
        element_(std::move(element)) {}

  const std::string& file() const noexcept { return file_; }
  const std::string& element() const noexcept { return element_; }

 private:
  std::string file_;
  std::string element_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gbh
