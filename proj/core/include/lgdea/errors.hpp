// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lgdea {

/// Shape disagreement between matrix operands.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// A scalar parameter (temperature, step size, ...) outside its valid range.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// Invalid generation/training configuration (counts, ratios, pool sizes).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or truncated on-disk artifact (corpus, checkpoint, config).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad runtime input to an operation (empty token sequence, degenerate vector, ...).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// External evidence-extraction backend failed; carries the raw response.
class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(const std::string& what, std::string raw_response)
      : std::runtime_error(what), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const { return raw_response_; }

 private:
  std::string raw_response_;
};

/// Non-finite loss or other numeric failure detected mid-run.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lgdea
