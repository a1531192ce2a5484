// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "drum/adapter.hpp"

namespace drum {

/// Reverse pass through run_adapter. Adds d loss / d params to `grads`
/// (same architecture as `params`) given d loss / d output.
void backward(const AdapterParams& params, const AdapterTape& tape, const Matrix& grad_output, AdapterParams& grads);

}  // namespace drum
