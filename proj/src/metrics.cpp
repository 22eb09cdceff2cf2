#include "tabpc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabpc/classify.hpp"
#include "tabpc/error.hpp"
#include "tabpc/information.hpp"
#include "tabpc/parallel.hpp"
#include "tabpc/random.hpp"

namespace tabpc {

nlohmann::json MetricReport::to_json() const {
  nlohmann::json cols = nlohmann::json::object();
  for (const auto& c : columns) cols[c.column] = c.score;
  nlohmann::json prs = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json j{{"columns", {p.first, p.second}}, {"score", p.score}};
    if (metric == "wnmis") j["weight"] = p.weight;
    prs.push_back(std::move(j));
  }
  nlohmann::json out{{"metric", metric}, {"score", score}, {"meta", meta}};
  if (!columns.empty()) out["columns"] = std::move(cols);
  if (!pairs.empty()) out["pairs"] = std::move(prs);
  return out;
}

namespace {

void check_same_schema(const Table& real, const Table& synth) {
  if (real.n_cols() != synth.n_cols()) fail(ErrorKind::schema_mismatch, "tables have different column counts");
  for (std::size_t c = 0; c < real.n_cols(); ++c) {
    const auto& a = real.column_schema(c);
    const auto& b = synth.column_schema(c);
    if (a.name != b.name || a.kind != b.kind) {
      fail(ErrorKind::schema_mismatch, "column " + std::to_string(c) + " differs between the tables");
    }
  }
}

std::vector<double> present(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    if (!is_missing(v)) out.push_back(v);
  }
  return out;
}

// Categorical codes with missing cells mapped to one extra level.
struct Coded {
  std::vector<std::int32_t> codes;
  std::size_t levels = 0;
};

Coded categorical_codes(std::span<const std::int32_t> codes, std::size_t cardinality) {
  Coded out{{codes.begin(), codes.end()}, cardinality + 1};
  for (auto& c : out.codes) {
    if (c == kMissingCode) c = static_cast<std::int32_t>(cardinality);
  }
  return out;
}

Coded binned_codes(std::span<const double> values, std::span<const double> edges) {
  Coded out{std::vector<std::int32_t>(values.size()), edges.size() + 1};
  const auto binned = apply_bins(values, edges);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.codes[i] = is_missing(values[i]) ? static_cast<std::int32_t>(edges.size()) : binned[i];
  }
  return out;
}

Coded own_codes(const Table& t, std::size_t c, std::size_t bins) {
  const auto& col = t.column_schema(c);
  if (col.is_categorical()) return categorical_codes(t.codes(c), col.cardinality());
  const auto edges = equal_frequency_edges(present(t.values(c)), bins);
  return binned_codes(t.values(c), edges);
}

std::vector<double> frequencies(const Coded& x, std::size_t levels) {
  std::vector<double> p(levels, 0.0);
  for (auto c : x.codes) p[static_cast<std::size_t>(c)] += 1.0;
  if (!x.codes.empty()) {
    for (auto& v : p) v /= static_cast<double>(x.codes.size());
  }
  return p;
}

double contingency_similarity(const Coded& ra, const Coded& rb, const Coded& sa, const Coded& sb) {
  const std::size_t na = std::max(ra.levels, sa.levels);
  const std::size_t nb = std::max(rb.levels, sb.levels);
  std::vector<double> pr(na * nb, 0.0), ps(na * nb, 0.0);
  for (std::size_t i = 0; i < ra.codes.size(); ++i) {
    pr[static_cast<std::size_t>(ra.codes[i]) * nb + static_cast<std::size_t>(rb.codes[i])] += 1.0;
  }
  for (std::size_t i = 0; i < sa.codes.size(); ++i) {
    ps[static_cast<std::size_t>(sa.codes[i]) * nb + static_cast<std::size_t>(sb.codes[i])] += 1.0;
  }
  const double nr = static_cast<double>(std::max<std::size_t>(ra.codes.size(), 1));
  const double ns = static_cast<double>(std::max<std::size_t>(sa.codes.size(), 1));
  double tvd = 0.0;
  for (std::size_t k = 0; k < pr.size(); ++k) tvd += std::abs(pr[k] / nr - ps[k] / ns);
  return 1.0 - 0.5 * tvd;
}

std::vector<std::pair<std::size_t, std::size_t>> column_pairs(std::size_t d) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) out.emplace_back(i, j);
  }
  return out;
}

MetricReport nmi_pairs(const Table& real, const Table& synth, std::size_t bins, bool weighted) {
  check_same_schema(real, synth);
  const std::size_t D = real.n_cols();
  if (D < 2) fail(ErrorKind::domain, "NMI similarity needs at least two columns");
  std::vector<Coded> rc(D), sc(D);
  for (std::size_t c = 0; c < D; ++c) {
    rc[c] = own_codes(real, c, bins);
    sc[c] = own_codes(synth, c, bins);
  }
  const auto pairs = column_pairs(D);
  MetricReport report;
  report.metric = weighted ? "wnmis" : "nmis";
  report.pairs.resize(pairs.size());
  parallel_chunks(pairs.size(), 8, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto [i, j] = pairs[p];
      const double nr = normalized_mi(plugin_information(rc[i].codes, rc[i].levels, rc[j].codes, rc[j].levels));
      const double ns = normalized_mi(plugin_information(sc[i].codes, sc[i].levels, sc[j].codes, sc[j].levels));
      report.pairs[p] = {real.column_schema(i).name, real.column_schema(j).name, 1.0 - std::abs(nr - ns),
                         weighted ? std::abs(nr + ns) : 1.0};
    }
  });
  double wsum = 0.0;
  for (const auto& p : report.pairs) wsum += p.weight;
  double score = 0.0;
  if (wsum > 0.0) {
    // dividing once keeps the score exactly 1 when every pair scores 1
    for (const auto& p : report.pairs) score += p.weight * p.score;
    score /= wsum;
    for (auto& p : report.pairs) p.weight /= wsum;
  } else {
    for (auto& p : report.pairs) {
      p.weight = 1.0 / static_cast<double>(report.pairs.size());
      score += p.weight * p.score;
    }
  }
  report.score = score;
  report.meta = {{"bins", bins}, {"n_real", real.n_rows()}, {"n_synth", synth.n_rows()}};
  return report;
}

}  // namespace

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  std::vector<double> x = present(a), y = present(b);
  if (x.empty() || y.empty()) return x.empty() && y.empty() ? 0.0 : 1.0;
  std::ranges::sort(x);
  std::ranges::sort(y);
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

MetricReport shape(const Table& real, const Table& synth) {
  check_same_schema(real, synth);
  MetricReport report;
  report.metric = "shape";
  double total = 0.0;
  for (std::size_t c = 0; c < real.n_cols(); ++c) {
    const auto& col = real.column_schema(c);
    double score;
    if (col.is_categorical()) {
      const std::size_t levels = std::max(col.cardinality(), synth.column_schema(c).cardinality()) + 1;
      const auto pr = frequencies(categorical_codes(real.codes(c), levels - 1), levels);
      const auto ps = frequencies(categorical_codes(synth.codes(c), levels - 1), levels);
      double tvd = 0.0;
      for (std::size_t k = 0; k < levels; ++k) tvd += std::abs(pr[k] - ps[k]);
      score = 1.0 - 0.5 * tvd;
    } else {
      score = 1.0 - ks_statistic(real.values(c), synth.values(c));
    }
    report.columns.push_back({col.name, score});
    total += score;
  }
  report.score = real.n_cols() ? total / static_cast<double>(real.n_cols()) : 1.0;
  report.meta = {{"n_real", real.n_rows()}, {"n_synth", synth.n_rows()}};
  return report;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  // Accumulate in a canonical row order so a row permutation of the input
  // gives a bit-identical coefficient.
  std::vector<std::pair<double, double>> xy;
  xy.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!is_missing(a[i]) && !is_missing(b[i])) xy.emplace_back(a[i], b[i]);
  }
  if (xy.size() < 2) return 0.0;
  std::ranges::sort(xy);
  const double n = static_cast<double>(xy.size());
  double ma = 0.0, mb = 0.0;
  for (const auto& [x, y] : xy) {
    ma += x;
    mb += y;
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (const auto& [x, y] : xy) {
    sab += (x - ma) * (y - mb);
    saa += (x - ma) * (x - ma);
    sbb += (y - mb) * (y - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

MetricReport trend(const Table& real, const Table& synth, std::size_t bins) {
  check_same_schema(real, synth);
  const std::size_t D = real.n_cols();
  if (D < 2) fail(ErrorKind::domain, "Trend needs at least two columns");
  std::vector<Coded> rc(D), sc(D);
  for (std::size_t c = 0; c < D; ++c) {
    const auto& col = real.column_schema(c);
    if (col.is_categorical()) {
      const std::size_t card = std::max(col.cardinality(), synth.column_schema(c).cardinality());
      rc[c] = categorical_codes(real.codes(c), card);
      sc[c] = categorical_codes(synth.codes(c), card);
    } else {
      const auto edges = equal_frequency_edges(present(real.values(c)), bins);
      rc[c] = binned_codes(real.values(c), edges);
      sc[c] = binned_codes(synth.values(c), edges);
    }
  }
  MetricReport report;
  report.metric = "trend";
  double total = 0.0;
  for (const auto& [i, j] : column_pairs(D)) {
    double score;
    if (!real.column_schema(i).is_categorical() && !real.column_schema(j).is_categorical()) {
      const double rr = pearson(real.values(i), real.values(j));
      const double rs = pearson(synth.values(i), synth.values(j));
      score = 1.0 - 0.5 * std::abs(rr - rs);
    } else {
      score = contingency_similarity(rc[i], rc[j], sc[i], sc[j]);
    }
    report.pairs.push_back({real.column_schema(i).name, real.column_schema(j).name, score, 1.0});
    total += score;
  }
  report.score = total / static_cast<double>(report.pairs.size());
  report.meta = {{"bins", bins}, {"n_real", real.n_rows()}, {"n_synth", synth.n_rows()}};
  return report;
}

double nmi(const Table& table, std::size_t i, std::size_t j, std::size_t bins) {
  const Coded a = own_codes(table, i, bins);
  const Coded b = own_codes(table, j, bins);
  return normalized_mi(plugin_information(a.codes, a.levels, b.codes, b.levels));
}

MetricReport wnmis(const Table& real, const Table& synth, std::size_t bins) {
  return nmi_pairs(real, synth, bins, true);
}

MetricReport nmis_unweighted(const Table& real, const Table& synth, std::size_t bins) {
  return nmi_pairs(real, synth, bins, false);
}

// ---------------------------------------------------------------------------
// C2ST

double c2st_score_from_auroc(double auroc) { return 1.0 - (2.0 * std::max(auroc, 0.5) - 1.0); }

namespace {

// Missing numerical features take the column mean of the pooled rows.
void impute_features(Matrix& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double sum = 0.0, n = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!is_missing(x(i, j))) {
        sum += x(i, j);
        n += 1.0;
      }
    }
    const double mean = n > 0.0 ? sum / n : 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (is_missing(x(i, j))) x(i, j) = mean;
    }
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  return idx;
}

}  // namespace

C2stResult c2st(const Table& real, const Table& synth, C2stClassifier classifier, std::uint64_t seed) {
  check_same_schema(real, synth);
  const std::size_t n = std::min(real.n_rows(), synth.n_rows());
  if (n < 20) fail(ErrorKind::insufficient_data, "C2ST needs at least 20 rows per class");

  // Seeded subsample to n rows per class, then a per-class half split.
  auto ri = shuffled(real.n_rows(), Rng::stream(seed, 0));
  auto si = shuffled(synth.n_rows(), Rng::stream(seed, 1));
  ri.resize(n);
  si.resize(n);
  const FeatureMatrix fr = encode_features(real.select_rows(ri));
  const FeatureMatrix fs = encode_features(synth.select_rows(si));
  if (fr.x.cols() != fs.x.cols()) fail(ErrorKind::schema_mismatch, "feature layouts differ");

  const std::size_t n_train = n / 2;
  const std::size_t n_test = n - n_train;
  const auto p = fr.x.cols();
  Matrix xtr(static_cast<Eigen::Index>(2 * n_train), p), xte(static_cast<Eigen::Index>(2 * n_test), p);
  xtr << fr.x.topRows(static_cast<Eigen::Index>(n_train)), fs.x.topRows(static_cast<Eigen::Index>(n_train));
  xte << fr.x.bottomRows(static_cast<Eigen::Index>(n_test)), fs.x.bottomRows(static_cast<Eigen::Index>(n_test));
  Matrix pooled(xtr.rows() + xte.rows(), p);
  pooled << xtr, xte;
  impute_features(pooled);
  xtr = pooled.topRows(xtr.rows());
  xte = pooled.bottomRows(xte.rows());
  std::vector<double> ytr(2 * n_train, 0.0), yte(2 * n_test, 0.0);
  std::fill(ytr.begin(), ytr.begin() + static_cast<std::ptrdiff_t>(n_train), 1.0);
  std::fill(yte.begin(), yte.begin() + static_cast<std::ptrdiff_t>(n_test), 1.0);

  Eigen::VectorXd scores;
  if (classifier == C2stClassifier::logistic) {
    scores = fit_logistic(xtr, ytr).decision(xte);
  } else {
    scores = fit_gbt(xtr, ytr).decision(xte);
  }
  C2stResult result;
  result.n_per_class = n;
  result.auroc = auroc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), yte);
  result.score = c2st_score_from_auroc(result.auroc);
  return result;
}

// ---------------------------------------------------------------------------
// ML efficacy

double ml_efficacy(const Table& synth_train, const Table& real_test, const std::string& target, Task task,
                   std::uint64_t seed) {
  check_same_schema(synth_train, real_test);
  const auto t = synth_train.find_column(target);
  if (!t) fail(ErrorKind::schema_mismatch, "target column '" + target + "' not found");
  const auto& tcol = synth_train.column_schema(*t);
  if (task == Task::classification && (!tcol.is_categorical() || tcol.cardinality() != 2)) {
    fail(ErrorKind::unsupported, "classification efficacy needs a binary categorical target");
  }
  if (task == Task::regression && tcol.is_categorical()) {
    fail(ErrorKind::unsupported, "regression efficacy needs a numerical target");
  }
  std::vector<std::size_t> features;
  for (std::size_t c = 0; c < synth_train.n_cols(); ++c) {
    if (c != *t) features.push_back(c);
  }
  auto labels = [&](const Table& table) {
    std::vector<double> y(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) y[r] = table.cell(r, *t);
    return y;
  };

  auto order = shuffled(synth_train.n_rows(), Rng::stream(seed, 2));
  const std::size_t n_val = synth_train.n_rows() / 9;
  const std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  const Table fit_table = synth_train.select_rows(fit_rows);
  const Table val_table = synth_train.select_rows(val_rows);
  Matrix xf = encode_features(fit_table.select_columns(features)).x;
  Matrix xv = encode_features(val_table.select_columns(features)).x;
  Matrix xt = encode_features(real_test.select_columns(features)).x;
  impute_features(xf);
  impute_features(xv);
  impute_features(xt);
  const auto yf = labels(fit_table), yv = labels(val_table), yt = labels(real_test);

  GbtConfig cfg;
  cfg.loss = task == Task::classification ? GbtLoss::logistic : GbtLoss::squared;
  cfg.min_leaf = std::min<std::size_t>(cfg.min_leaf, std::max<std::size_t>(1, fit_rows.size() / 4));
  GbtModel best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t depth : {3, 6}) {
    for (std::size_t trees : {50, 100}) {
      cfg.max_depth = depth;
      cfg.n_trees = trees;
      GbtModel model = fit_gbt(xf, yf, cfg);
      double loss = 0.0;
      if (n_val > 0) {
        const Eigen::VectorXd d = model.decision(xv);
        for (std::size_t i = 0; i < n_val; ++i) {
          const double f = d(static_cast<Eigen::Index>(i));
          loss += task == Task::classification ? std::log1p(std::exp(-std::abs(f))) + std::max(f, 0.0) - yv[i] * f
                                               : (f - yv[i]) * (f - yv[i]);
        }
      }
      if (loss < best_loss) {
        best_loss = loss;
        best = std::move(model);
      }
    }
  }
  const Eigen::VectorXd pred = best.predict(xt);
  if (task == Task::classification) {
    return auroc(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), yt);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < yt.size(); ++i) sq += (pred(static_cast<Eigen::Index>(i)) - yt[i]) * (pred(static_cast<Eigen::Index>(i)) - yt[i]);
  return std::sqrt(sq / static_cast<double>(std::max<std::size_t>(yt.size(), 1)));
}

// ---------------------------------------------------------------------------
// DCR

RowDistance::RowDistance(const Table& train) : range_(train.n_cols(), 0.0) {
  for (std::size_t c = 0; c < train.n_cols(); ++c) {
    if (train.column_schema(c).is_categorical()) continue;
    const auto v = present(train.values(c));
    if (v.empty()) continue;
    const auto [lo, hi] = std::ranges::minmax(v);
    range_[c] = hi - lo;
  }
}

std::vector<double> RowDistance::min_distances(const Table& query, const Table& reference) const {
  check_same_schema(query, reference);
  const std::size_t D = query.n_cols();
  if (D != range_.size()) fail(ErrorKind::schema_mismatch, "distance was fitted on a different schema");
  auto dense = [&](const Table& t) {
    Matrix m(static_cast<Eigen::Index>(t.n_rows()), static_cast<Eigen::Index>(D));
    for (std::size_t c = 0; c < D; ++c) {
      for (std::size_t r = 0; r < t.n_rows(); ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.cell(r, c);
    }
    return m;
  };
  const Matrix a = dense(query), b = dense(reference);
  std::vector<bool> categorical(D);
  for (std::size_t c = 0; c < D; ++c) categorical[c] = query.column_schema(c).is_categorical();
  std::vector<double> out(query.n_rows(), std::numeric_limits<double>::infinity());
  parallel_chunks(query.n_rows(), 64, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < D; ++c) {
          const double x = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
          const double y = b(j, static_cast<Eigen::Index>(c));
          if (categorical[c]) {
            d += x == y ? 0.0 : 1.0;
          } else if (is_missing(x) || is_missing(y)) {
            d += is_missing(x) && is_missing(y) ? 0.0 : 1.0;
          } else if (range_[c] > 0.0) {
            d += std::abs(x - y) / range_[c];
          } else {
            d += x == y ? 0.0 : 1.0;
          }
        }
        best = std::min(best, d / static_cast<double>(D));
      }
      out[i] = best;
    }
  });
  return out;
}

double dcr_quantile(const Table& train, const Table& test, const Table& synth, double q) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::domain, "quantile level must lie in (0, 1)");
  if (test.n_rows() == 0 || synth.n_rows() == 0 || train.n_rows() == 0) fail(ErrorKind::insufficient_data, "DCR needs nonempty tables");
  const RowDistance dist(train);
  auto test_d = dist.min_distances(test, train);
  const auto synth_d = dist.min_distances(synth, train);
  std::ranges::sort(test_d);
  const double pos = q * static_cast<double>(test_d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, test_d.size() - 1);
  const double threshold = test_d[lo] + (pos - static_cast<double>(lo)) * (test_d[hi] - test_d[lo]);
  const auto below = std::ranges::count_if(synth_d, [&](double d) { return d < threshold; });
  return 100.0 * static_cast<double>(below) / static_cast<double>(synth_d.size());
}

double dcr_probability(const Table& train, const Table& holdout, const Table& synth) {
  if (synth.n_rows() == 0 || train.n_rows() == 0 || holdout.n_rows() == 0) fail(ErrorKind::insufficient_data, "DCR needs nonempty tables");
  const RowDistance dist(train);
  const auto dt = dist.min_distances(synth, train);
  const auto dh = dist.min_distances(synth, holdout);
  double closer = 0.0;
  for (std::size_t i = 0; i < dt.size(); ++i) closer += dt[i] < dh[i] ? 1.0 : (dt[i] == dh[i] ? 0.5 : 0.0);
  return closer / static_cast<double>(dt.size());
}

}  // namespace tabpc
