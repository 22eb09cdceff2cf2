#include "tabpc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "tabpc/dataset.hpp"
#include "tabpc/parallel.hpp"
#include "tabpc/random.hpp"

namespace tabpc {

namespace {

constexpr std::size_t kRowChunk = 256;

Batch gather(const Batch& data, std::span<const std::size_t> rows) {
  Batch out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, data.x.cols());
  out.mask.resize(n, data.mask.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.x.row(i) = data.x.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
    out.mask.row(i) = data.mask.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::usage, "batch_size must be at least 1");
  if (!(learning_rate > 0.0)) fail(ErrorKind::usage, "learning_rate must be positive");
  if (!(scheduler_factor > 0.0 && scheduler_factor < 1.0)) fail(ErrorKind::usage, "scheduler_factor must lie in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"scheduler_factor", scheduler_factor},
          {"patience_epochs", patience_epochs},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"plateau_tolerance", plateau_tolerance},
          {"clip_norm", clip_norm}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig cfg;
  try {
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.scheduler_factor = doc.value("scheduler_factor", cfg.scheduler_factor);
    cfg.patience_epochs = doc.value("patience_epochs", cfg.patience_epochs);
    cfg.max_epochs = doc.value("max_epochs", cfg.max_epochs);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.plateau_tolerance = doc.value("plateau_tolerance", cfg.plateau_tolerance);
    cfg.clip_norm = doc.value("clip_norm", cfg.clip_norm);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed training config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_nll,val_nll,lr\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_number(e.train_nll) << ',' << format_number(e.val_nll) << ','
        << format_number(e.learning_rate) << '\n';
  }
}

Batch Batch::all_observed(Matrix x) {
  Batch b;
  b.mask = tabpc::all_observed(x.rows(), x.cols());
  b.x = std::move(x);
  return b;
}

std::vector<double> gradient(const Circuit& circuit, const Batch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) fail(ErrorKind::domain, "gradient of an empty batch");
  const std::size_t chunks = chunk_count(n, kRowChunk);
  std::vector<std::vector<double>> partial(chunks);
  const double weight = 1.0 / static_cast<double>(n);
  parallel_chunks(n, kRowChunk, [&](std::size_t begin, std::size_t end, std::size_t idx) {
    partial[idx].assign(circuit.n_params(), 0.0);
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    try {
      accumulate_gradient(circuit, batch.x.middleRows(b, len), batch.mask.middleRows(b, len), weight, partial[idx]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      fail(ErrorKind::numeric, std::string(e.what()) + " (chunk starting at row " + std::to_string(begin) + ")");
    }
  });
  std::vector<double> grad = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += partial[c][i];
  }
  return grad;
}

double mean_nll(const Circuit& circuit, const Batch& data) {
  if (data.size() == 0) fail(ErrorKind::domain, "NLL of an empty table");
  return -log_likelihoods(circuit, data.x, data.mask).mean();
}

double bpd(const Circuit& circuit, const Batch& data) {
  return mean_nll(circuit, data) / (std::numbers::ln2 * static_cast<double>(circuit.n_variables()));
}

RAdam::RAdam(std::size_t n_params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params, 0.0), v_(n_params, 0.0) {}

void RAdam::step(std::span<double> params, std::span<const double> grad, double lr) {
  ++t_;
  const double t = static_cast<double>(t_);
  const double b1t = std::pow(beta1_, t);
  const double b2t = std::pow(beta2_, t);
  const double rho_inf = 2.0 / (1.0 - beta2_) - 1.0;
  const double rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
  double rect = 0.0;
  if (rho_t > 5.0) {
    rect = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / (1.0 - b1t);
    if (rho_t > 5.0) {
      const double adaptive = std::sqrt(1.0 - b2t) / (std::sqrt(v_[i]) + eps_);
      params[i] -= lr * m_hat * rect * adaptive;
    } else {
      params[i] -= lr * m_hat;
    }
  }
}

TrainResult fit(Circuit circuit, const Batch& train, const Batch& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) fail(ErrorKind::domain, "training and validation data must be nonempty");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  TrainHistory history;
  double lr = cfg.learning_rate;
  const double initial = mean_nll(circuit, val);
  history.epochs.push_back({0, mean_nll(circuit, train), initial, lr});
  if (!std::isfinite(initial)) {
    history.seconds = elapsed();
    throw DivergenceError("initial validation NLL is not finite", std::move(history));
  }
  const double ceiling = initial + 9.0 * std::max(std::abs(initial), 1.0);

  std::vector<double> best(circuit.params().begin(), circuit.params().end());
  double best_val = initial;
  double prev_val = initial;
  std::size_t since_best = 0;
  RAdam opt(circuit.n_params());
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(cfg.seed, epoch);
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const Batch batch = gather(train, std::span(order).subspan(b, e - b));
      std::vector<double> g = gradient(circuit, batch);
      double norm = 0.0;
      for (double& v : g) {
        v = -v;  // descend on the NLL
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (!std::isfinite(norm)) {
        // parameters have already blown up; report it as divergence
        auto nll_or_nan = [&](const Batch& data) {
          try {
            return mean_nll(circuit, data);
          } catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
          }
        };
        history.epochs.push_back({epoch, nll_or_nan(train), nll_or_nan(val), lr});
        history.stopping_epoch = epoch;
        history.seconds = elapsed();
        throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch), std::move(history));
      }
      if (norm > cfg.clip_norm) {
        for (double& v : g) v *= cfg.clip_norm / norm;
      }
      opt.step(circuit.params(), g, lr);
    }

    double val_nll = std::numeric_limits<double>::quiet_NaN();
    double train_nll = val_nll;
    try {
      val_nll = mean_nll(circuit, val);
      train_nll = mean_nll(circuit, train);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
    }
    history.epochs.push_back({epoch, train_nll, val_nll, lr});
    history.stopping_epoch = epoch;
    if (!std::isfinite(val_nll) || val_nll > ceiling) {
      history.seconds = elapsed();
      throw DivergenceError("validation NLL diverged at epoch " + std::to_string(epoch), std::move(history));
    }
    if (val_nll < best_val) {
      best_val = val_nll;
      history.best_epoch = epoch;
      std::ranges::copy(circuit.params(), best.begin());
      since_best = 0;
    } else {
      ++since_best;
    }
    if (prev_val - val_nll < cfg.plateau_tolerance * std::abs(prev_val)) lr *= cfg.scheduler_factor;
    prev_val = val_nll;
    if (since_best >= cfg.patience_epochs) break;
  }
  circuit.set_params(best);
  history.seconds = elapsed();
  return {std::move(circuit), std::move(history)};
}

}  // namespace tabpc
