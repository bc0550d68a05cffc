#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace lgdist {

/// Compute-side matrix. Row-major so a row is a contiguous token or spot.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Storage-side matrices, matching the on-disk payloads.
using ExpressionMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace lgdist
