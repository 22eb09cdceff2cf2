#include "tabpc/information.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabpc/error.hpp"

namespace tabpc {

std::vector<double> equal_frequency_edges(std::span<const double> values, std::size_t bins) {
  if (bins < 1) fail(ErrorKind::domain, "bin count must be positive");
  std::vector<double> sorted(values.begin(), values.end());
  std::ranges::sort(sorted);
  const std::size_t n = sorted.size();
  std::vector<double> edges;
  std::size_t current = 0;
  bool open = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      edges.back() = sorted[i];
      continue;
    }
    const std::size_t bin = std::min(bins - 1, i * bins / n);
    if (!open || bin != current) {
      edges.push_back(sorted[i]);
      current = bin;
      open = true;
    } else {
      edges.back() = sorted[i];
    }
  }
  return edges;
}

std::vector<std::int32_t> apply_bins(std::span<const double> values, std::span<const double> edges) {
  std::vector<std::int32_t> out(values.size(), 0);
  if (edges.empty()) return out;
  const auto last = static_cast<std::int32_t>(edges.size() - 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), values[i]);
    out[i] = std::min(last, static_cast<std::int32_t>(it - edges.begin()));
  }
  return out;
}

std::vector<std::int32_t> equal_frequency_bins(std::span<const double> values, std::size_t bins) {
  const auto edges = equal_frequency_edges(values, bins);
  return apply_bins(values, edges);
}

namespace {

double entropy_of(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

}  // namespace

double plugin_entropy(std::span<const std::int32_t> x, std::size_t nx) {
  if (x.empty()) return 0.0;
  std::vector<double> counts(nx, 0.0);
  for (auto c : x) counts.at(static_cast<std::size_t>(c)) += 1.0;
  return entropy_of(counts, static_cast<double>(x.size()));
}

Information plugin_information(std::span<const std::int32_t> x, std::size_t nx,
                               std::span<const std::int32_t> y, std::size_t ny) {
  if (x.size() != y.size()) fail(ErrorKind::domain, "columns differ in length");
  Information info;
  if (x.empty()) return info;
  const double n = static_cast<double>(x.size());
  std::vector<double> joint(nx * ny, 0.0), px(nx, 0.0), py(ny, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto a = static_cast<std::size_t>(x[i]);
    const auto b = static_cast<std::size_t>(y[i]);
    joint.at(a * ny + b) += 1.0;
    px[a] += 1.0;
    py[b] += 1.0;
  }
  info.hx = entropy_of(px, n);
  info.hy = entropy_of(py, n);
  double mi = 0.0;
  for (std::size_t a = 0; a < nx; ++a) {
    for (std::size_t b = 0; b < ny; ++b) {
      const double c = joint[a * ny + b];
      if (c > 0.0) mi += (c / n) * std::log(c * n / (px[a] * py[b]));
    }
  }
  info.mi = std::max(0.0, mi);
  return info;
}

double normalized_mi(const Information& info) {
  const double denom = info.hx + info.hy;
  if (denom <= 0.0) return 0.0;
  return std::clamp(2.0 * info.mi / denom, 0.0, 1.0);
}

}  // namespace tabpc
