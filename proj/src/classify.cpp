#include "tabpc/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "tabpc/error.hpp"
#include "tabpc/parallel.hpp"

namespace tabpc {

FeatureMatrix encode_features(const Table& table) {
  FeatureMatrix fm;
  std::size_t p = 0;
  for (std::size_t c = 0; c < table.n_cols(); ++c) {
    const auto& col = table.column_schema(c);
    FeatureBlock block{c, p, col.is_categorical() ? col.cardinality() : 1, col.is_categorical()};
    p += block.width;
    fm.blocks.push_back(block);
  }
  const auto n = static_cast<Eigen::Index>(table.n_rows());
  fm.x = Matrix::Zero(n, static_cast<Eigen::Index>(p));
  for (const auto& block : fm.blocks) {
    const auto first = static_cast<Eigen::Index>(block.first);
    if (block.one_hot) {
      const auto codes = table.codes(block.source);
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto code = codes[static_cast<std::size_t>(r)];
        if (code != kMissingCode) fm.x(r, first + code) = 1.0;
      }
    } else {
      const auto values = table.values(block.source);
      for (Eigen::Index r = 0; r < n; ++r) fm.x(r, first) = values[static_cast<std::size_t>(r)];
    }
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
double sigmoid(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

Eigen::VectorXd as_vector(std::span<const double> y) {
  return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

void check_binary(std::span<const double> y, std::size_t n) {
  if (y.size() != n) fail(ErrorKind::domain, "label count does not match the row count");
  bool pos = false, neg = false;
  for (double v : y) {
    if (v == 1.0) {
      pos = true;
    } else if (v == 0.0) {
      neg = true;
    } else {
      fail(ErrorKind::domain, "labels must be 0 or 1");
    }
  }
  if (!pos || !neg) fail(ErrorKind::degenerate_target, "both classes must be present");
}

}  // namespace

Eigen::VectorXd LogisticModel::decision(const Matrix& x) const { return (x * weights).array() + bias; }

Eigen::VectorXd LogisticModel::predict_proba(const Matrix& x) const {
  return decision(x).unaryExpr([](double t) { return sigmoid(t); });
}

Eigen::VectorXd logistic_gradient(const Matrix& x, std::span<const double> y, const Eigen::VectorXd& weights,
                                  double bias) {
  if (y.size() != static_cast<std::size_t>(x.rows())) fail(ErrorKind::domain, "label count does not match the row count");
  const Eigen::VectorXd eta = (x * weights).array() + bias;
  const Eigen::VectorXd r = eta.unaryExpr([](double t) { return sigmoid(t); }) - as_vector(y);
  Eigen::VectorXd g(x.cols() + 1);
  const double n = static_cast<double>(x.rows());
  g.head(x.cols()) = x.transpose() * r / n;
  g(x.cols()) = r.sum() / n;
  return g;
}

LogisticModel fit_logistic(const Matrix& x, std::span<const double> y, const LogisticOptions& options) {
  const auto n = x.rows();
  const auto p = x.cols();
  check_binary(y, static_cast<std::size_t>(n));
  const Eigen::VectorXd yv = as_vector(y);

  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd scale = ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
  }
  Matrix z(n, p + 1);
  z.leftCols(p) = (x.rowwise() - mean).array().rowwise() / scale.array();
  z.col(p).setOnes();

  auto nll = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd eta = z * theta;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += softplus(eta(i)) - yv(i) * eta(i);
    return s / static_cast<double>(n);
  };

  LogisticModel model;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  double f = nll(theta);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd eta = z * theta;
    const Eigen::VectorXd prob = eta.unaryExpr([](double t) { return sigmoid(t); });
    const Eigen::VectorXd g = z.transpose() * (prob - yv) / static_cast<double>(n);
    model.iterations = it;
    if (g.norm() <= options.tolerance) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd d_weight = (prob.array() * (1.0 - prob.array())).matrix();
    Matrix h = z.transpose() * d_weight.asDiagonal() * z / static_cast<double>(n);
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = -h.ldlt().solve(g);
    const double slope = g.dot(step);
    double t = 1.0;
    double f_new = nll(theta + step);
    while (!(f_new <= f + 1e-4 * t * slope) && t > 1e-12) {
      t *= 0.5;
      f_new = nll(theta + t * step);
    }
    if (!(f_new < f)) break;  // no further progress in floating point
    theta += t * step;
    f = f_new;
    model.iterations = it + 1;
  }
  if (!model.converged) {
    const Eigen::VectorXd prob = (z * theta).unaryExpr([](double t) { return sigmoid(t); });
    model.converged = (z.transpose() * (prob - yv) / static_cast<double>(n)).norm() <= options.tolerance;
  }
  // A fit that classifies every training row strictly correctly certifies
  // linear separability, in which case no finite maximizer exists.
  {
    const Eigen::VectorXd eta = z * theta;
    bool all_right = true;
    for (Eigen::Index i = 0; i < n && all_right; ++i) all_right = yv(i) == 1.0 ? eta(i) > 0.0 : eta(i) < 0.0;
    model.separated = all_right || !model.converged;
  }

  model.weights = theta.head(p).array() / scale.transpose().array();
  model.bias = theta(p) - (mean.transpose().array() * model.weights.array()).sum();
  return model;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees

namespace {

std::vector<double> feature_cuts(const Matrix& x, Eigen::Index j, std::size_t n_bins) {
  std::vector<double> sorted(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) sorted[static_cast<std::size_t>(i)] = x(i, j);
  std::ranges::sort(sorted);
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> cuts;
  if (distinct.size() <= n_bins) {
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(0.5 * (distinct[i] + distinct[i + 1]));
    return cuts;
  }
  const std::size_t n = sorted.size();
  for (std::size_t b = 1; b < n_bins; ++b) {
    const double v = sorted[b * n / n_bins];
    if (v < distinct.back() && (cuts.empty() || v > cuts.back())) cuts.push_back(v);
  }
  return cuts;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  std::size_t bin = 0;
};

struct TreeBuilder {
  const std::vector<std::vector<std::uint16_t>>& bins;  // [feature][row]
  const std::vector<std::vector<double>>& cuts;
  const std::vector<double>& g;
  const std::vector<double>& h;
  const GbtConfig& cfg;
  std::vector<GbtNode> nodes;
  std::vector<std::pair<std::vector<std::uint32_t>, double>> leaves;

  double score(double gs, double hs) const { return gs * gs / (hs + cfg.lambda); }

  SplitChoice best_split(const std::vector<std::uint32_t>& rows, double gsum, double hsum) const {
    const std::size_t p = bins.size();
    const std::size_t chunk = 4;
    std::vector<SplitChoice> partial(chunk_count(p, chunk));
    const double parent = score(gsum, hsum);
    parallel_chunks(p, chunk, [&](std::size_t begin, std::size_t end, std::size_t idx) {
      SplitChoice best;
      std::vector<double> hg, hh;
      std::vector<std::size_t> hc;
      for (std::size_t f = begin; f < end; ++f) {
        const std::size_t nb = cuts[f].size() + 1;
        if (nb < 2) continue;
        hg.assign(nb, 0.0);
        hh.assign(nb, 0.0);
        hc.assign(nb, 0);
        const auto& col = bins[f];
        for (auto r : rows) {
          const auto b = col[r];
          hg[b] += g[r];
          hh[b] += h[r];
          ++hc[b];
        }
        double gl = 0.0, hl = 0.0;
        std::size_t cl = 0;
        for (std::size_t t = 0; t + 1 < nb; ++t) {
          gl += hg[t];
          hl += hh[t];
          cl += hc[t];
          const std::size_t cr = rows.size() - cl;
          if (cl < cfg.min_leaf || cr < cfg.min_leaf) continue;
          const double gain = score(gl, hl) + score(gsum - gl, hsum - hl) - parent;
          if (gain > best.gain) best = {gain, static_cast<int>(f), t};
        }
      }
      partial[idx] = best;
    });
    SplitChoice best;
    for (const auto& s : partial) {
      if (s.gain > best.gain) best = s;
    }
    return best;
  }

  int grow(std::vector<std::uint32_t> rows, std::size_t depth) {
    double gsum = 0.0, hsum = 0.0;
    for (auto r : rows) {
      gsum += g[r];
      hsum += h[r];
    }
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    SplitChoice split;
    if (depth < cfg.max_depth && rows.size() >= 2 * cfg.min_leaf) split = best_split(rows, gsum, hsum);
    if (split.feature < 0) {
      const double value = -cfg.learning_rate * gsum / (hsum + cfg.lambda);
      nodes[static_cast<std::size_t>(id)].value = value;
      leaves.emplace_back(std::move(rows), value);
      return id;
    }
    std::vector<std::uint32_t> left, right;
    const auto& col = bins[static_cast<std::size_t>(split.feature)];
    for (auto r : rows) (col[r] <= split.bin ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = cuts[static_cast<std::size_t>(split.feature)][split.bin];
    node.left = l;
    node.right = r;
    return id;
  }
};

double mean_loss(GbtLoss loss, const std::vector<double>& f, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    s += loss == GbtLoss::logistic ? softplus(f[i]) - y[i] * f[i] : 0.5 * (f[i] - y[i]) * (f[i] - y[i]);
  }
  return s / static_cast<double>(f.size());
}

}  // namespace

GbtModel fit_gbt(const Matrix& x, std::span<const double> y, const GbtConfig& cfg) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  if (cfg.n_trees < 1 || cfg.max_depth < 1) fail(ErrorKind::usage, "n_trees and max_depth must be at least 1");
  if (cfg.n_bins < 2 || cfg.n_bins > 65536) fail(ErrorKind::usage, "n_bins must lie in [2, 65536]");
  if (y.size() != n) fail(ErrorKind::domain, "label count does not match the row count");
  if (n < 2 * cfg.min_leaf || n == 0) {
    fail(ErrorKind::insufficient_data, "boosting needs at least " + std::to_string(2 * cfg.min_leaf) + " rows");
  }

  GbtModel model;
  model.loss = cfg.loss;
  if (cfg.loss == GbtLoss::logistic) {
    check_binary(y, n);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    model.base_score = std::log(mean / (1.0 - mean));
  } else {
    model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  }

  std::vector<std::vector<double>> cuts(p);
  std::vector<std::vector<std::uint16_t>> bins(p, std::vector<std::uint16_t>(n));
  parallel_chunks(p, 1, [&](std::size_t f, std::size_t, std::size_t) {
    cuts[f] = feature_cuts(x, static_cast<Eigen::Index>(f), cfg.n_bins);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
      bins[f][i] = static_cast<std::uint16_t>(std::lower_bound(cuts[f].begin(), cuts[f].end(), v) - cuts[f].begin());
    }
  });

  std::vector<double> f(n, model.base_score), g(n), h(n);
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  model.train_loss.push_back(mean_loss(cfg.loss, f, y));
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.loss == GbtLoss::logistic) {
        const double prob = sigmoid(f[i]);
        g[i] = prob - y[i];
        h[i] = std::max(prob * (1.0 - prob), 1e-16);
      } else {
        g[i] = f[i] - y[i];
        h[i] = 1.0;
      }
    }
    TreeBuilder builder{bins, cuts, g, h, cfg, {}, {}};
    builder.grow(all, 0);
    for (const auto& [rows, value] : builder.leaves) {
      for (auto r : rows) f[r] += value;
    }
    model.trees.push_back(std::move(builder.nodes));
    model.train_loss.push_back(mean_loss(cfg.loss, f, y));
  }
  return model;
}

Eigen::VectorXd GbtModel::decision(const Matrix& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base_score);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (const auto& tree : trees) {
      int node = 0;
      while (tree[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = tree[static_cast<std::size_t>(node)];
        node = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      out(i) += tree[static_cast<std::size_t>(node)].value;
    }
  }
  return out;
}

Eigen::VectorXd GbtModel::predict(const Matrix& x) const {
  Eigen::VectorXd d = decision(x);
  if (loss == GbtLoss::logistic) d = d.unaryExpr([](double t) { return sigmoid(t); });
  return d;
}

double auroc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::domain, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1.0) {
        rank_sum += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) fail(ErrorKind::degenerate_target, "AUROC needs both classes");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

}  // namespace tabpc
