#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace scsd {

#ifdef SCSD_REAL_FLOAT
using Real = float;
inline constexpr const char* kPrecisionName = "f32";
#else
using Real = double;
inline constexpr const char* kPrecisionName = "f64";
#endif

using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

/// Binary indicator matrix (views, labels, masks). Entries are 0 or 1.
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using IndexList = std::vector<std::size_t>;

}  // namespace scsd
