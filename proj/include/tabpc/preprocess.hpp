#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tabpc/dataset.hpp"
#include "tabpc/mask.hpp"

namespace tabpc {

/// Label given to the category that absorbs missing categorical cells.
inline constexpr const char* kMissingCategory = "<missing>";

/// Replaces numerical missings by the column mean and maps categorical
/// missings to a dedicated category appended to the schema.  Throws a
/// degenerate-column error for a fully missing numerical column.
Table impute_missing(const Table& table);

/// Monotone map from a numerical column to standard-normal scores through
/// its piecewise-linear empirical CDF.
class QuantileTransform {
 public:
  /// Level clipping applied before the normal quantile function.
  static constexpr double kClip = 1e-7;

  QuantileTransform() = default;
  QuantileTransform(std::vector<double> knots, std::vector<double> levels, std::size_t n_quantiles);

  /// Knots are the empirical quantiles at `n_quantiles` equispaced levels in
  /// [0, 1]; repeated knots are merged and their levels averaged.  Needs at
  /// least two distinct values.
  static QuantileTransform fit(std::span<const double> column, std::size_t n_quantiles);

  double forward(double x) const;
  double inverse(double z) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& levels() const { return levels_; }
  std::size_t n_quantiles() const { return n_quantiles_; }

  nlohmann::json to_json() const;
  static QuantileTransform from_json(const nlohmann::json& doc);

 private:
  std::vector<double> knots_;
  std::vector<double> levels_;
  std::size_t n_quantiles_ = 0;
};

/// Adds independent uniform noise in [-q/2, q/2] to every non-missing value.
std::vector<double> dequantize(std::span<const double> column, double q, std::uint64_t seed);

/// Snaps values to anchor + k q, ties rounding up.  When `upper` is given,
/// results are clamped to [anchor, upper].
std::vector<double> requantize(std::span<const double> column, double q, double anchor,
                               std::optional<double> upper = std::nullopt);

enum class ColumnTransform { identity, quantile, categorical_passthrough };

struct ColumnPlan {
  ColumnTransform transform = ColumnTransform::identity;
  std::optional<QuantileTransform> quantile;
  std::optional<double> quantization_step;
  double grid_anchor = 0.0;  // minimum non-inflated training value
  double grid_max = 0.0;     // maximum non-inflated training value
  std::vector<double> inflated_values;
  /// Index of the companion indicator column in the encoded table.
  std::optional<std::size_t> companion;
  /// Replacement for missing numerical cells.
  double impute_value = 0.0;
  /// Code used for missing categorical cells, if the training data had any.
  std::optional<std::int32_t> missing_code;
};

struct PlanOptions {
  bool quantile_normalize = true;
  bool handle_inflated = true;
  bool dequantize = true;
  /// Grid size is min(max_quantiles, rows).
  std::size_t max_quantiles = 1000;
  std::uint64_t seed = 0;
};

/// Fitted preprocessing: how each raw column maps into the circuit's
/// variable space, and back.  Companion columns follow the raw columns in
/// the encoded layout, in the order of their numerical columns.
struct PreprocessPlan {
  Schema raw_schema;      // after imputation (missing categories appended)
  Schema encoded_schema;  // circuit variables
  std::vector<ColumnPlan> columns;
  std::string fingerprint;  // schema_fingerprint(raw_schema)

  std::size_t n_encoded() const { return encoded_schema.size(); }

  nlohmann::json to_json() const;
  static PreprocessPlan from_json(const nlohmann::json& doc);
};

/// Circuit-space data: encoded table plus the evidence mask (inflated cells
/// are marginalized).
struct EncodedTable {
  Table table;
  MaskMatrix mask;
};

PreprocessPlan fit_plan(const Table& train, const PlanOptions& options = {});

/// Companion-indicator step on its own.  Codes are 0 for "not inflated" and
/// 1 + i for the i-th inflated value; the returned mask flags numerical cells
/// that held an inflated value.  The table returned still has raw values in
/// the numerical columns.
EncodedTable encode_inflated(const Table& table, const PreprocessPlan& plan);

struct ApplyOptions {
  /// Add dequantization noise (training data) or not (evidence, evaluation).
  bool dequantize = false;
  std::uint64_t seed = 0;
};

EncodedTable apply_plan(const PreprocessPlan& plan, const Table& raw, const ApplyOptions& options = {});

/// Maps circuit-space values back to raw space: inflated indicators restore
/// the inflated value, other numerical cells go through the inverse quantile
/// map and requantization.
Table invert_plan(const PreprocessPlan& plan, const Table& encoded);

/// Per raw column observed/marginalized flags → circuit-variable mask.
/// `encoded` must be the apply_plan output for the same rows (its mask marks
/// inflated cells, which stay marginalized on the numerical side).
MaskMatrix encode_evidence_mask(const PreprocessPlan& plan, const MaskMatrix& raw_mask,
                                const MaskMatrix& inflated_mask);

}  // namespace tabpc

namespace tabpc {

/// Circuit-space table as a dense matrix (categorical codes widened).
Matrix to_matrix(const Table& table);

/// Inverse of to_matrix; categorical entries must be exact codes.
Table from_matrix(const Schema& schema, const Matrix& x);

}  // namespace tabpc
