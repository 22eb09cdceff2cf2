#include "tabpc/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tabpc/error.hpp"
#include "tabpc/parallel.hpp"

namespace tabpc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr std::size_t kRowChunk = 256;

bool observed(const MaskMatrix& mask, Eigen::Index b, std::size_t v) {
  return mask(b, static_cast<Eigen::Index>(v)) != 0;
}

std::size_t checked_code(double x, std::size_t n_categories, Eigen::Index row, std::size_t v) {
  if (!(x >= 0.0) || x != std::floor(x) || x >= static_cast<double>(n_categories)) {
    fail(ErrorKind::domain, "row " + std::to_string(row) + ": code " + std::to_string(x) +
                                " out of range for categorical variable " + std::to_string(v));
  }
  return static_cast<std::size_t>(x);
}

double clamped_log_std(double s) { return std::clamp(s, kMinLogStd, kMaxLogStd); }

// Row-wise log-softmax of a K x C block.
Matrix log_softmax_rows(const Circuit::ConstParamMap& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index k = 0; k < logits.rows(); ++k) {
    const double m = logits.row(k).maxCoeff();
    const double lse = m + std::log((logits.row(k).array() - m).exp().sum());
    out.row(k) = logits.row(k).array() - lse;
  }
  return out;
}

// exp(C - rowmax) with the row max stored in `m`; all -inf rows use m = 0.
Matrix shifted_exp(const Matrix& c, Eigen::VectorXd& m) {
  m = c.rowwise().maxCoeff();
  for (Eigen::Index b = 0; b < m.size(); ++b) {
    if (!std::isfinite(m(b))) m(b) = 0.0;
  }
  return (c.colwise() - m).array().exp().matrix();
}

void input_forward(const Circuit& circuit, std::size_t l, const Matrix& x, const MaskMatrix& mask,
                   Matrix& out) {
  const Layer& layer = circuit.layer(l);
  const auto B = x.rows();
  const auto K = static_cast<Eigen::Index>(layer.width);
  const std::size_t v = layer.variable;
  out.setZero(B, K);
  if (layer.kind == LayerKind::input_gaussian) {
    const auto p = circuit.block(l);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!observed(mask, b, v)) continue;
      const double xv = x(b, static_cast<Eigen::Index>(v));
      if (!std::isfinite(xv)) {
        fail(ErrorKind::domain, "row " + std::to_string(b) + ": non-finite value for variable " +
                                    std::to_string(v));
      }
      for (Eigen::Index k = 0; k < K; ++k) {
        const double ls = clamped_log_std(p(1, k));
        const double z = (xv - p(0, k)) * std::exp(-ls);
        out(b, k) = -0.5 * z * z - ls - kHalfLog2Pi;
      }
    }
  } else {
    const Matrix logp = log_softmax_rows(circuit.block(l));
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!observed(mask, b, v)) continue;
      const auto c = checked_code(x(b, static_cast<Eigen::Index>(v)), layer.n_categories, b, v);
      out.row(b) = logp.col(static_cast<Eigen::Index>(c)).transpose();
    }
  }
}

void cp_forward(const Circuit& circuit, std::size_t l, const std::vector<Matrix>& values, Matrix& out) {
  const Layer& layer = circuit.layer(l);
  const auto B = values[layer.children.front().layer].rows();
  out.setZero(B, static_cast<Eigen::Index>(layer.width));
  Eigen::VectorXd m;
  for (std::size_t i = 0; i < layer.children.size(); ++i) {
    const auto& child = layer.children[i];
    const Matrix& c = values[child.layer];
    if (!child.mixing) {
      out += c;
      continue;
    }
    const Matrix e = shifted_exp(c, m);
    const Matrix s = e * circuit.weights(l, i).transpose();
    out.array() += s.array().log().colwise() + m.array();
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Circuit

Circuit::Circuit(std::vector<Layer> layers, std::vector<VariableKind> kinds,
                 std::vector<std::size_t> cardinalities)
    : layers_(std::move(layers)), kinds_(std::move(kinds)), cardinalities_(std::move(cardinalities)) {
  if (layers_.empty()) fail(ErrorKind::graph, "circuit has no layers");
  if (cardinalities_.size() != kinds_.size()) fail(ErrorKind::graph, "variable metadata size mismatch");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (layer.width == 0) fail(ErrorKind::graph, "layer " + std::to_string(l) + " has zero width");
    std::size_t n = 0;
    switch (layer.kind) {
      case LayerKind::input_gaussian: n = 2 * layer.width; break;
      case LayerKind::input_categorical: n = layer.width * layer.n_categories; break;
      case LayerKind::cp_sum_product:
        if (layer.children.empty()) fail(ErrorKind::graph, "cp layer " + std::to_string(l) + " has no children");
        for (const auto& child : layer.children) {
          if (child.layer >= l) {
            fail(ErrorKind::graph, "layer " + std::to_string(l) + " references a later layer");
          }
          if (child.mixing) n += layer.width * layers_[child.layer].width;
        }
        break;
    }
    layer.offset = offset;
    layer.n_params = n;
    offset += n;
  }
  params_.assign(offset, 0.0);
}

void Circuit::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) {
    fail(ErrorKind::incompatible_model, "expected " + std::to_string(params_.size()) + " parameters, got " +
                                            std::to_string(values.size()));
  }
  std::ranges::copy(values, params_.begin());
}

std::size_t Circuit::child_offset(std::size_t l, std::size_t child) const {
  const Layer& layer = layers_.at(l);
  std::size_t offset = layer.offset;
  for (std::size_t i = 0; i < child; ++i) {
    if (layer.children[i].mixing) offset += layer.width * layers_[layer.children[i].layer].width;
  }
  return offset;
}

Circuit::ParamMap Circuit::block(std::size_t l, std::size_t child) {
  const Layer& layer = layers_.at(l);
  const auto K = static_cast<Eigen::Index>(layer.width);
  switch (layer.kind) {
    case LayerKind::input_gaussian: return {params_.data() + layer.offset, 2, K};
    case LayerKind::input_categorical:
      return {params_.data() + layer.offset, K, static_cast<Eigen::Index>(layer.n_categories)};
    case LayerKind::cp_sum_product: break;
  }
  const auto& c = layer.children.at(child);
  if (!c.mixing) fail(ErrorKind::graph, "pass-through child has no weights");
  return {params_.data() + child_offset(l, child), K, static_cast<Eigen::Index>(layers_[c.layer].width)};
}

Circuit::ConstParamMap Circuit::block(std::size_t l, std::size_t child) const {
  auto m = const_cast<Circuit*>(this)->block(l, child);
  return {m.data(), m.rows(), m.cols()};
}

Matrix Circuit::log_weights(std::size_t l, std::size_t child) const {
  const auto logits = block(l, child);
  if (!layers_[l].softmax_weights) return logits;
  return log_softmax_rows(logits);
}

Matrix Circuit::weights(std::size_t l, std::size_t child) const {
  return log_weights(l, child).array().exp().matrix();
}

std::vector<std::size_t> Circuit::parents() const {
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> parent(layers_.size(), none);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (const auto& child : layers_[l].children) {
      if (parent[child.layer] != none) {
        fail(ErrorKind::graph, "layer " + std::to_string(child.layer) + " has more than one parent");
      }
      parent[child.layer] = l;
    }
  }
  parent[root()] = root();
  return parent;
}

// ---------------------------------------------------------------------------
// CircuitBuilder

CircuitBuilder::CircuitBuilder(std::vector<VariableKind> kinds, std::vector<std::size_t> cardinalities)
    : kinds_(std::move(kinds)), cardinalities_(std::move(cardinalities)) {}

std::size_t CircuitBuilder::add_gaussian(std::size_t variable, std::size_t width) {
  if (variable >= kinds_.size() || kinds_[variable] != VariableKind::numerical) {
    fail(ErrorKind::graph, "variable " + std::to_string(variable) + " is not numerical");
  }
  Layer layer;
  layer.kind = LayerKind::input_gaussian;
  layer.scope = {variable};
  layer.width = width;
  layer.variable = variable;
  layers_.push_back(std::move(layer));
  return layers_.size() - 1;
}

std::size_t CircuitBuilder::add_categorical(std::size_t variable, std::size_t width) {
  if (variable >= kinds_.size() || kinds_[variable] != VariableKind::categorical) {
    fail(ErrorKind::graph, "variable " + std::to_string(variable) + " is not categorical");
  }
  Layer layer;
  layer.kind = LayerKind::input_categorical;
  layer.scope = {variable};
  layer.width = width;
  layer.variable = variable;
  layer.n_categories = cardinalities_[variable];
  layers_.push_back(std::move(layer));
  return layers_.size() - 1;
}

std::size_t CircuitBuilder::add_cp(std::vector<CpChild> children, std::size_t width, bool softmax_weights) {
  Layer layer;
  layer.kind = LayerKind::cp_sum_product;
  layer.width = width;
  layer.softmax_weights = softmax_weights;
  for (const auto& child : children) {
    if (child.layer >= layers_.size()) fail(ErrorKind::graph, "cp child refers to an unknown layer");
    const auto& scope = layers_[child.layer].scope;
    layer.scope.insert(layer.scope.end(), scope.begin(), scope.end());
  }
  std::ranges::sort(layer.scope);
  layer.children = std::move(children);
  layers_.push_back(std::move(layer));
  return layers_.size() - 1;
}

Circuit CircuitBuilder::finish() && {
  return Circuit(std::move(layers_), std::move(kinds_), std::move(cardinalities_));
}

// ---------------------------------------------------------------------------
// Evaluation

ForwardPass forward(const Circuit& circuit, const Matrix& x, const MaskMatrix& mask) {
  if (x.cols() != static_cast<Eigen::Index>(circuit.n_variables()) || mask.rows() != x.rows() ||
      mask.cols() != x.cols()) {
    fail(ErrorKind::domain, "input batch shape does not match the circuit");
  }
  ForwardPass fp;
  fp.values.resize(circuit.n_layers());
  for (std::size_t l = 0; l < circuit.n_layers(); ++l) {
    if (circuit.layer(l).kind == LayerKind::cp_sum_product) {
      cp_forward(circuit, l, fp.values, fp.values[l]);
    } else {
      input_forward(circuit, l, x, mask, fp.values[l]);
    }
  }
  return fp;
}

Eigen::VectorXd log_likelihoods(const Circuit& circuit, const Matrix& x, const MaskMatrix& mask) {
  Eigen::VectorXd out(x.rows());
  parallel_chunks(static_cast<std::size_t>(x.rows()), kRowChunk,
                  [&](std::size_t begin, std::size_t end, std::size_t) {
                    const auto b = static_cast<Eigen::Index>(begin);
                    const auto n = static_cast<Eigen::Index>(end - begin);
                    const Matrix xs = x.middleRows(b, n);
                    const MaskMatrix ms = mask.middleRows(b, n);
                    out.segment(b, n) = forward(circuit, xs, ms).root();
                  });
  return out;
}

double log_density(const Circuit& circuit, std::span<const double> row, std::span<const std::uint8_t> mask) {
  const auto D = static_cast<Eigen::Index>(circuit.n_variables());
  if (row.size() != circuit.n_variables() || mask.size() != circuit.n_variables()) {
    fail(ErrorKind::domain, "row length does not match the circuit");
  }
  Matrix x = Eigen::Map<const Matrix>(row.data(), 1, D);
  MaskMatrix m = Eigen::Map<const MaskMatrix>(mask.data(), 1, D);
  return forward(circuit, x, m).values.back()(0, 0);
}

Eigen::RowVectorXd cp_layer_forward(const Circuit& circuit, std::size_t l,
                                    const std::vector<Eigen::RowVectorXd>& child_log_values) {
  const Layer& layer = circuit.layer(l);
  if (layer.kind != LayerKind::cp_sum_product || child_log_values.size() != layer.children.size()) {
    fail(ErrorKind::domain, "cp_layer_forward needs one value vector per child of a cp layer");
  }
  std::vector<Matrix> values(circuit.n_layers());
  for (std::size_t i = 0; i < layer.children.size(); ++i) {
    values[layer.children[i].layer] = child_log_values[i];
  }
  Matrix out;
  cp_forward(circuit, l, values, out);
  return out.row(0);
}

double accumulate_gradient(const Circuit& circuit, const Matrix& x, const MaskMatrix& mask, double weight,
                           std::span<double> grad) {
  if (grad.size() != circuit.n_params()) fail(ErrorKind::domain, "gradient buffer has the wrong size");
  const ForwardPass fp = forward(circuit, x, mask);
  const auto B = x.rows();
  const Eigen::VectorXd ll = fp.root();
  for (Eigen::Index b = 0; b < B; ++b) {
    if (!std::isfinite(ll(b))) {
      fail(ErrorKind::numeric, "non-finite log-likelihood at row " + std::to_string(b));
    }
  }

  std::vector<Matrix> g(circuit.n_layers());
  g.back() = Matrix::Constant(B, 1, weight);
  auto add_to = [&](std::size_t l, const Matrix& delta) {
    if (g[l].size() == 0) {
      g[l] = delta;
    } else {
      g[l] += delta;
    }
  };

  Eigen::VectorXd m;
  for (std::size_t l = circuit.n_layers(); l-- > 0;) {
    if (g[l].size() == 0) continue;
    const Layer& layer = circuit.layer(l);
    const Matrix& gl = g[l];
    const auto K = static_cast<Eigen::Index>(layer.width);

    if (layer.kind == LayerKind::cp_sum_product) {
      std::size_t offset = layer.offset;
      for (std::size_t i = 0; i < layer.children.size(); ++i) {
        const auto& child = layer.children[i];
        if (!child.mixing) {
          add_to(child.layer, gl);
          continue;
        }
        const Matrix w = circuit.weights(l, i);
        const Matrix e = shifted_exp(fp.values[child.layer], m);
        const Matrix s = e * w.transpose();
        const Matrix a = (s.array() > 0.0).select(gl.array() / s.array(), 0.0).matrix();
        const Matrix gw = a.transpose() * e;
        add_to(child.layer, (e.array() * (a * w).array()).matrix());
        Matrix gtheta;
        if (layer.softmax_weights) {
          const Eigen::VectorXd row_dot = (w.array() * gw.array()).rowwise().sum();
          gtheta = (w.array() * (gw.colwise() - row_dot).array()).matrix();
        } else {
          gtheta = (w.array() * gw.array()).matrix();
        }
        Eigen::Map<Matrix>(grad.data() + offset, gtheta.rows(), gtheta.cols()) += gtheta;
        offset += static_cast<std::size_t>(gtheta.size());
      }
      continue;
    }

    const std::size_t v = layer.variable;
    const auto col = static_cast<Eigen::Index>(v);
    if (layer.kind == LayerKind::input_gaussian) {
      const auto p = circuit.block(l);
      double* gmean = grad.data() + layer.offset;
      double* glogstd = gmean + layer.width;
      for (Eigen::Index b = 0; b < B; ++b) {
        if (!observed(mask, b, v)) continue;
        for (Eigen::Index k = 0; k < K; ++k) {
          const double ls = clamped_log_std(p(1, k));
          const double inv = std::exp(-ls);
          const double z = (x(b, col) - p(0, k)) * inv;
          gmean[k] += gl(b, k) * z * inv;
          if (p(1, k) > kMinLogStd && p(1, k) < kMaxLogStd) glogstd[k] += gl(b, k) * (z * z - 1.0);
        }
      }
    } else {
      const Matrix prob = log_softmax_rows(circuit.block(l)).array().exp().matrix();
      Eigen::Map<Matrix> glogits(grad.data() + layer.offset, K, static_cast<Eigen::Index>(layer.n_categories));
      for (Eigen::Index b = 0; b < B; ++b) {
        if (!observed(mask, b, v)) continue;
        const auto c = static_cast<Eigen::Index>(x(b, col));
        for (Eigen::Index k = 0; k < K; ++k) {
          glogits.row(k) -= gl(b, k) * prob.row(k);
          glogits(k, c) += gl(b, k);
        }
      }
    }
  }
  return ll.sum();
}

// ---------------------------------------------------------------------------
// Diagnostics

std::vector<Violation> validate_structure(const Circuit& circuit) {
  std::vector<Violation> out;
  const auto D = circuit.n_variables();
  for (std::size_t l = 0; l < circuit.n_layers(); ++l) {
    const Layer& layer = circuit.layer(l);
    if (layer.kind != LayerKind::cp_sum_product) {
      if (layer.scope.size() != 1 || layer.scope[0] != layer.variable || layer.variable >= D) {
        out.push_back({ViolationKind::scope, l, "input layer must have the singleton scope of its variable"});
      }
      continue;
    }
    std::vector<std::size_t> seen;
    bool children_ok = true;
    for (std::size_t i = 0; i < layer.children.size(); ++i) {
      const auto& child = layer.children[i];
      if (child.layer >= l) {
        out.push_back({ViolationKind::order, l, "child " + std::to_string(child.layer) + " does not precede its parent"});
        children_ok = false;
        continue;
      }
      const Layer& c = circuit.layer(child.layer);
      for (std::size_t v : c.scope) {
        if (std::ranges::find(seen, v) != seen.end()) {
          out.push_back({ViolationKind::decomposability, l,
                         "variable " + std::to_string(v) + " appears in more than one child scope"});
        }
        seen.push_back(v);
      }
      if (!child.mixing && c.width != layer.width) {
        out.push_back({ViolationKind::width, l, "pass-through child width differs from the layer width"});
      }
      if (child.mixing) {
        const Eigen::VectorXd sums = circuit.weights(l, i).rowwise().sum();
        for (Eigen::Index k = 0; k < sums.size(); ++k) {
          if (!(std::abs(sums(k) - 1.0) <= 1e-9)) {
            out.push_back({ViolationKind::normalization, l,
                           "weight row " + std::to_string(k) + " of child " + std::to_string(i) + " sums to " +
                               std::to_string(sums(k))});
          }
        }
      }
    }
    if (children_ok) {
      std::ranges::sort(seen);
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      if (seen != layer.scope) out.push_back({ViolationKind::scope, l, "layer scope is not the union of its children"});
    }
  }
  const Layer& root = circuit.layer(circuit.root());
  std::vector<std::size_t> all(D);
  for (std::size_t v = 0; v < D; ++v) all[v] = v;
  if (root.scope != all) out.push_back({ViolationKind::root, circuit.root(), "root scope is not every variable"});
  if (root.width != 1) out.push_back({ViolationKind::root, circuit.root(), "root width is not 1"});
  return out;
}

double normalization_probe(const Circuit& circuit, std::size_t n_grid, std::span<const std::size_t> marginalized) {
  const auto D = circuit.n_variables();
  std::vector<bool> hidden(D, false);
  for (std::size_t v : marginalized) hidden.at(v) = true;

  // Integration axes: one grid (points and Simpson weights) per variable.
  std::vector<std::size_t> axes;
  std::vector<std::vector<double>> points, weights;
  std::size_t n_numerical = 0;
  if (n_grid < 3) n_grid = 3;
  if (n_grid % 2 == 0) ++n_grid;
  for (std::size_t v = 0; v < D; ++v) {
    if (hidden[v]) continue;
    axes.push_back(v);
    if (circuit.variable_kinds()[v] == VariableKind::categorical) {
      const auto C = circuit.cardinalities()[v];
      std::vector<double> p(C);
      for (std::size_t c = 0; c < C; ++c) p[c] = static_cast<double>(c);
      points.push_back(std::move(p));
      weights.emplace_back(C, 1.0);
      continue;
    }
    if (++n_numerical > 3) fail(ErrorKind::unsupported, "normalization probe supports at most 3 numerical variables");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t l = 0; l < circuit.n_layers(); ++l) {
      const Layer& layer = circuit.layer(l);
      if (layer.kind != LayerKind::input_gaussian || layer.variable != v) continue;
      const auto p = circuit.block(l);
      for (Eigen::Index k = 0; k < p.cols(); ++k) {
        const double sd = std::exp(clamped_log_std(p(1, k)));
        lo = std::min(lo, p(0, k) - 8.0 * sd);
        hi = std::max(hi, p(0, k) + 8.0 * sd);
      }
    }
    const double h = (hi - lo) / static_cast<double>(n_grid - 1);
    std::vector<double> p(n_grid), w(n_grid);
    for (std::size_t i = 0; i < n_grid; ++i) {
      p[i] = lo + h * static_cast<double>(i);
      w[i] = (i == 0 || i == n_grid - 1 ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0)) * h / 3.0;
    }
    points.push_back(std::move(p));
    weights.push_back(std::move(w));
  }

  double total_states = 1.0;
  for (const auto& p : points) total_states *= static_cast<double>(p.size());
  if (total_states > static_cast<double>(1u << 24)) fail(ErrorKind::unsupported, "probe state space too large");
  const auto n_states = static_cast<std::size_t>(total_states);

  MaskMatrix full = all_observed(1, static_cast<Eigen::Index>(D));
  for (std::size_t v = 0; v < D; ++v) {
    if (hidden[v]) full(0, static_cast<Eigen::Index>(v)) = 0;
  }
  constexpr std::size_t chunk = 4096;
  double total = 0.0;
  for (std::size_t begin = 0; begin < n_states; begin += chunk) {
    const std::size_t n = std::min(chunk, n_states - begin);
    Matrix x = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
    Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t idx = begin + r;
      for (std::size_t a = axes.size(); a-- > 0;) {
        const std::size_t i = idx % points[a].size();
        idx /= points[a].size();
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(axes[a])) = points[a][i];
        w(static_cast<Eigen::Index>(r)) *= weights[a][i];
      }
    }
    const MaskMatrix mask = full.replicate(static_cast<Eigen::Index>(n), 1);
    const Eigen::VectorXd ll = forward(circuit, x, mask).root();
    total += (ll.array().exp() * w.array()).sum();
  }
  return total;
}

}  // namespace tabpc
