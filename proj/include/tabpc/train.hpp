#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "json.hpp"

#include "tabpc/circuit.hpp"
#include "tabpc/error.hpp"
#include "tabpc/mask.hpp"

namespace tabpc {

struct TrainConfig {
  std::size_t batch_size = 512;
  double learning_rate = 0.1;
  double scheduler_factor = 0.85;
  std::size_t patience_epochs = 10;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  /// Relative validation-NLL decrease below which the learning rate decays.
  double plateau_tolerance = 1e-4;
  double clip_norm = 100.0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the initial model
  double train_nll = 0.0;
  double val_nll = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;

  /// Columns: epoch, train_nll, val_nll, lr.
  void write_csv(std::ostream& out) const;
};

/// Circuit-space rows with their evidence masks.
struct Batch {
  Matrix x;
  MaskMatrix mask;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  static Batch all_observed(Matrix x);
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, TrainHistory history)
      : Error(ErrorKind::divergence, message), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

/// Gradient of the mean log-likelihood over the batch; row chunks are
/// processed in parallel and reduced in a fixed order.
std::vector<double> gradient(const Circuit& circuit, const Batch& batch);

/// Mean negative log-likelihood in nats per row.
double mean_nll(const Circuit& circuit, const Batch& data);

/// Bits per dimension: mean NLL / (ln 2 * D).
double bpd(const Circuit& circuit, const Batch& data);

/// Adaptive-moment optimizer with rectified variance warmup, minimizing.
class RAdam {
 public:
  RAdam(std::size_t n_params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad, double lr);

 private:
  double beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct TrainResult {
  Circuit circuit;  // best-validation snapshot
  TrainHistory history;
};

/// Mini-batch maximum likelihood.  Throws DivergenceError when the
/// validation NLL becomes non-finite or exceeds
/// initial + 9 * max(|initial|, 1).
TrainResult fit(Circuit circuit, const Batch& train, const Batch& val, const TrainConfig& cfg);

}  // namespace tabpc
