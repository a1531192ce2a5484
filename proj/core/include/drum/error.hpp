// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drum {

enum class ErrorCategory {
  io,          // filesystem failures
  format,      // bad magic, version, or malformed payload
  truncated,   // payload shorter than its header claims
  validation,  // invariant violated (NaN, duplicate ids, bad dimensions)
  dimension,   // shape mismatch between operands
  degenerate,  // mathematically undefined input (zero norm, zero preference mass)
  config,      // out-of-range configuration value
  numeric,     // non-finite value produced during computation
};

std::string_view category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define DRUM_DEFINE_ERROR(Name, Category)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(Category, message) {} \
  }

DRUM_DEFINE_ERROR(IoError, ErrorCategory::io);
DRUM_DEFINE_ERROR(FormatError, ErrorCategory::format);
DRUM_DEFINE_ERROR(TruncatedError, ErrorCategory::truncated);
DRUM_DEFINE_ERROR(ValidationError, ErrorCategory::validation);
DRUM_DEFINE_ERROR(DimensionError, ErrorCategory::dimension);
DRUM_DEFINE_ERROR(DegenerateError, ErrorCategory::degenerate);
DRUM_DEFINE_ERROR(ConfigError, ErrorCategory::config);
DRUM_DEFINE_ERROR(NumericError, ErrorCategory::numeric);

#undef DRUM_DEFINE_ERROR

}  // namespace drum
