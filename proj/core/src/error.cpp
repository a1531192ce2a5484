// SPDX-License-Identifier: Apache-2.0
#include "drum/error.hpp"

namespace drum {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::truncated: return "truncated";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::degenerate: return "degenerate";
    case ErrorCategory::config: return "config";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace drum
