#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tabpc {

/// Upper edges of equal-frequency bins: values are ranked, a value's bin is
/// min(bins - 1, first_rank * bins / n), and ties always share a bin.  One
/// edge per non-empty bin (the largest value it holds), ascending.
std::vector<double> equal_frequency_edges(std::span<const double> values, std::size_t bins);

/// Bin index of every value under the given edges; values above the last
/// edge fall in the last bin.
std::vector<std::int32_t> apply_bins(std::span<const double> values, std::span<const double> edges);

/// apply_bins(values, equal_frequency_edges(values, bins)).
std::vector<std::int32_t> equal_frequency_bins(std::span<const double> values, std::size_t bins);

struct Information {
  double mi = 0.0;  // nats, clamped at 0
  double hx = 0.0;
  double hy = 0.0;
};

/// Plug-in estimates from the joint contingency counts of two code columns.
Information plugin_information(std::span<const std::int32_t> x, std::size_t nx,
                               std::span<const std::int32_t> y, std::size_t ny);

/// Entropy in nats of a code column.
double plugin_entropy(std::span<const std::int32_t> x, std::size_t nx);

/// 2 I / (H_x + H_y), with 0 / 0 taken as 0.
double normalized_mi(const Information& info);

}  // namespace tabpc
