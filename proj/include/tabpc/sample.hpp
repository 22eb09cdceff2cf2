#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "tabpc/circuit.hpp"
#include "tabpc/dataset.hpp"
#include "tabpc/mask.hpp"
#include "tabpc/model.hpp"

namespace tabpc {

/// Roots whose log value falls below this are treated as zero probability.
inline constexpr double kImpossibleLogEvidence = -700.0;

/// n circuit-space rows drawn top-down.  Row i uses Rng::stream(seed, i).
Matrix ancestral_sample(const Circuit& circuit, std::size_t n, std::uint64_t seed);

/// Completes every row of `evidence` given its mask: observed cells are
/// copied, the rest are drawn from the exact conditional.  Row i uses
/// Rng::stream(seed, i).
Matrix conditional_sample(const Circuit& circuit, const Matrix& evidence, const MaskMatrix& mask,
                          std::uint64_t seed);

/// Single-row form (stream 0).
Eigen::RowVectorXd conditional_sample(const Circuit& circuit, std::span<const double> evidence,
                                      std::span<const std::uint8_t> mask, std::uint64_t seed);

struct SampleRequest {
  std::size_t n_rows = 0;
  std::uint64_t seed = 0;
  /// Raw-space evidence (schema order) and per-cell flags, 1 = observed.
  /// When present, one completed row is produced per evidence row.
  std::optional<Table> evidence;
  std::optional<MaskMatrix> evidence_mask;
};

/// Samples in circuit space and maps back to raw rows.  Observed raw cells
/// are copied through unchanged.
Table generate_dataset(const ModelBundle& bundle, const SampleRequest& request);

}  // namespace tabpc
