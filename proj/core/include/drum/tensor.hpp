// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

namespace drum {

using Index = Eigen::Index;

/// Dense row-major matrix; one token (or one sample) per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

}  // namespace drum
