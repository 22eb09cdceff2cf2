#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace tabpc {

/// Per-variable evidence flag.
enum class Evidence : std::uint8_t { marginalized = 0, observed = 1 };

/// Row-major matrix of Evidence flags stored as bytes (1 = observed).
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major real matrix; circuit inputs use one row per record and store
/// categorical codes as exact small integers.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline MaskMatrix all_observed(Eigen::Index rows, Eigen::Index cols) {
  return MaskMatrix::Constant(rows, cols, static_cast<std::uint8_t>(Evidence::observed));
}

inline MaskMatrix all_marginalized(Eigen::Index rows, Eigen::Index cols) {
  return MaskMatrix::Constant(rows, cols, static_cast<std::uint8_t>(Evidence::marginalized));
}

}  // namespace tabpc
