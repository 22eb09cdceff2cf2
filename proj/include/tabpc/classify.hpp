#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tabpc/dataset.hpp"
#include "tabpc/mask.hpp"

namespace tabpc {

struct FeatureBlock {
  std::size_t source = 0;  // table column
  std::size_t first = 0;   // first output column
  std::size_t width = 1;
  bool one_hot = false;
};

/// Dense design matrix: numerical columns copied, categorical columns
/// expanded to one-hot blocks.
struct FeatureMatrix {
  Matrix x;
  std::vector<FeatureBlock> blocks;
  std::size_t n_features() const { return static_cast<std::size_t>(x.cols()); }
};

FeatureMatrix encode_features(const Table& table);

struct LogisticOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // on the gradient norm of the mean NLL
};

struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Iteration cap hit without convergence (typically separable data).
  bool separated = false;

  Eigen::VectorXd decision(const Matrix& x) const;
  Eigen::VectorXd predict_proba(const Matrix& x) const;
};

/// Unregularized maximum likelihood by damped Newton iterations on
/// internally standardized features; weights are reported on the original
/// scale.
LogisticModel fit_logistic(const Matrix& x, std::span<const double> y, const LogisticOptions& options = {});

/// Gradient of the mean logistic NLL with respect to (weights, bias); the
/// bias entry comes last.
Eigen::VectorXd logistic_gradient(const Matrix& x, std::span<const double> y, const Eigen::VectorXd& weights,
                                  double bias);

enum class GbtLoss { logistic, squared };

struct GbtConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 6;
  double learning_rate = 0.1;
  std::size_t n_bins = 256;
  std::size_t min_leaf = 20;
  double lambda = 1.0;
  GbtLoss loss = GbtLoss::logistic;
};

struct GbtNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // go left when x <= threshold
  int left = -1, right = -1;
  double value = 0.0;
};

struct GbtModel {
  GbtLoss loss = GbtLoss::logistic;
  double base_score = 0.0;
  std::vector<std::vector<GbtNode>> trees;
  /// Mean training loss before any tree and after each tree.
  std::vector<double> train_loss;

  /// Raw additive score (log-odds for the logistic loss).
  Eigen::VectorXd decision(const Matrix& x) const;
  /// Probabilities (logistic) or regression values (squared).
  Eigen::VectorXd predict(const Matrix& x) const;
};

GbtModel fit_gbt(const Matrix& x, std::span<const double> y, const GbtConfig& cfg = {});

/// Mann-Whitney AUROC with average ranks for tied scores.
double auroc(std::span<const double> scores, std::span<const double> labels);

}  // namespace tabpc
