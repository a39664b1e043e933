#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string_view>

namespace facediff {

// Row-major dense matrix. Rows are frames (or tokens), columns are channels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

// Throws DimensionError when the two shapes differ.
void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what);

bool all_finite(const Matrix& m);

}  // namespace facediff
