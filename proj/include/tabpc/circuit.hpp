#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tabpc/mask.hpp"

namespace tabpc {

enum class LayerKind { input_gaussian, input_categorical, cp_sum_product };
enum class VariableKind { numerical, categorical };

inline constexpr double kMinLogStd = -7.0;
inline constexpr double kMaxLogStd = 7.0;

struct CpChild {
  std::size_t layer = 0;
  /// false: the child passes through unit-for-unit (requires equal widths
  /// and carries no weights).
  bool mixing = true;
};

struct Layer {
  LayerKind kind = LayerKind::input_gaussian;
  std::vector<std::size_t> scope;  // sorted variable indices
  std::size_t width = 1;

  std::size_t variable = 0;      // input layers
  std::size_t n_categories = 0;  // categorical inputs

  std::vector<CpChild> children;  // cp layers
  /// Weight parameters are logits normalized by a per-row softmax.  When
  /// false they are used as log-weights directly, which lets hand-built
  /// circuits hold arbitrary (possibly unnormalized) weights.
  bool softmax_weights = true;

  std::size_t offset = 0;  // first parameter in the circuit's flat array
  std::size_t n_params = 0;
};

/// Layered smooth and decomposable circuit.  Layers are topologically
/// ordered; the last layer is the root and must have width 1.
///
/// Parameter layout per layer, starting at `offset`:
///   gaussian     K means, then K log standard deviations
///   categorical  K x C logits, row-major
///   cp           one K x K_child logit matrix per mixing child, row-major
class Circuit {
 public:
  Circuit() = default;
  Circuit(std::vector<Layer> layers, std::vector<VariableKind> kinds,
          std::vector<std::size_t> cardinalities);

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t n_layers() const { return layers_.size(); }
  std::size_t root() const { return layers_.size() - 1; }
  std::size_t n_variables() const { return kinds_.size(); }
  const std::vector<VariableKind>& variable_kinds() const { return kinds_; }
  const std::vector<std::size_t>& cardinalities() const { return cardinalities_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::size_t n_params() const { return params_.size(); }
  void set_params(std::span<const double> values);

  const std::string& fingerprint() const { return fingerprint_; }
  void set_fingerprint(std::string fp) { fingerprint_ = std::move(fp); }

  using ParamMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstParamMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  /// Raw parameter block of a layer: gaussian 2 x K (means row, log-std
  /// row), categorical K x C, cp K x K_child for the given mixing child.
  ParamMap block(std::size_t layer, std::size_t child = 0);
  ConstParamMap block(std::size_t layer, std::size_t child = 0) const;

  /// Normalized weights exp(log W) of a mixing child, K x K_child.
  Matrix weights(std::size_t layer, std::size_t child) const;
  /// Log-weights of a mixing child.
  Matrix log_weights(std::size_t layer, std::size_t child) const;

  /// Index of the unique parent of every layer (root: itself).  Throws a
  /// graph error if some layer has more than one parent.
  std::vector<std::size_t> parents() const;

 private:
  std::size_t child_offset(std::size_t layer, std::size_t child) const;

  std::vector<Layer> layers_;
  std::vector<VariableKind> kinds_;
  std::vector<std::size_t> cardinalities_;  // 0 for numerical variables
  std::vector<double> params_;
  std::string fingerprint_;
};

/// Incremental construction; scopes are derived from the children.
class CircuitBuilder {
 public:
  CircuitBuilder(std::vector<VariableKind> kinds, std::vector<std::size_t> cardinalities);

  std::size_t add_gaussian(std::size_t variable, std::size_t width);
  std::size_t add_categorical(std::size_t variable, std::size_t width);
  std::size_t add_cp(std::vector<CpChild> children, std::size_t width, bool softmax_weights = true);

  /// Parameters start at zero.
  Circuit finish() &&;

 private:
  std::vector<VariableKind> kinds_;
  std::vector<std::size_t> cardinalities_;
  std::vector<Layer> layers_;
};

/// Per-layer log values of a batch, each B x width.
struct ForwardPass {
  std::vector<Matrix> values;
  Eigen::VectorXd root() const { return values.back().col(0); }
};

/// Rows hold circuit-space values (categoricals as exact integer codes).
/// Marginalized cells contribute log 1 = 0 at their input layers.
ForwardPass forward(const Circuit& circuit, const Matrix& x, const MaskMatrix& mask);

/// log c(x) per row; parallel over fixed-size row chunks.
Eigen::VectorXd log_likelihoods(const Circuit& circuit, const Matrix& x, const MaskMatrix& mask);

double log_density(const Circuit& circuit, std::span<const double> row,
                   std::span<const std::uint8_t> mask);

/// One cp layer on single-row child log values.
Eigen::RowVectorXd cp_layer_forward(const Circuit& circuit, std::size_t layer,
                                    const std::vector<Eigen::RowVectorXd>& child_log_values);

/// Accumulates d(sum_b weight * log c(x_b)) / d(params) into `grad`.
/// Returns the sum of the row log-likelihoods.
double accumulate_gradient(const Circuit& circuit, const Matrix& x, const MaskMatrix& mask,
                           double weight, std::span<double> grad);

enum class ViolationKind { order, scope, decomposability, width, normalization, root };

struct Violation {
  ViolationKind kind;
  std::size_t layer;
  std::string message;
};

std::vector<Violation> validate_structure(const Circuit& circuit);

/// Total mass of the circuit by enumerating categorical states and Simpson
/// integration (n_grid points over ±8σ of every unit) on numerical ones.
/// Variables listed in `marginalized` are masked instead of summed over.
/// At most 3 integrated numerical variables.
double normalization_probe(const Circuit& circuit, std::size_t n_grid,
                           std::span<const std::size_t> marginalized = {});

}  // namespace tabpc
