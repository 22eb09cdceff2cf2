#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "tabpc/error.hpp"
#include "tabpc/metrics.hpp"
#include "tabpc/random.hpp"

using namespace tabpc;

namespace {

Table permuted(const Table& t, std::uint64_t seed) {
  std::vector<std::size_t> idx(t.n_rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  return t.select_rows(idx);
}

Table numeric_pair(double rho, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u(i) = rng.normal();
    v(i) = rng.normal();
  }
  u.array() -= u.mean();
  u.normalize();
  v.array() -= v.mean();
  v -= v.dot(u) * u;
  v.normalize();
  Eigen::VectorXd y = rho * u + std::sqrt(1 - rho * rho) * v;
  return Table({synth::numerical("x"), synth::numerical("y")},
               {Column{{u.data(), u.data() + n}, {}}, Column{{y.data(), y.data() + n}, {}}});
}

Table codes(std::vector<std::int32_t> a, std::vector<std::int32_t> b, std::size_t ca = 2, std::size_t cb = 2) {
  return Table({synth::categorical("a", ca), synth::categorical("b", cb)}, {Column{{}, std::move(a)}, Column{{}, std::move(b)}});
}

Table counts_table(const std::vector<std::vector<int>>& counts) {
  std::vector<std::int32_t> a, b;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts[i].size(); ++j)
      for (int k = 0; k < counts[i][j]; ++k) {
        a.push_back(static_cast<std::int32_t>(i));
        b.push_back(static_cast<std::int32_t>(j));
      }
  return codes(a, b, counts.size(), counts[0].size());
}

}  // namespace

TEST_CASE("shape anchors") {
  Table t = synth::correlated_mixed(1000, 1);
  CHECK(shape(t, permuted(t, 2)).score == 1.0);
  Table a = codes({0, 0, 0}, {0, 1, 0}), b = codes({1, 1, 1}, {0, 1, 0});
  auto rep = shape(a, b);
  CHECK(rep.columns[0].score == 0.0);
  CHECK(rep.columns[1].score == 1.0);
  Table n1({synth::numerical("x")}, {Column{{1, 2, 3}, {}}}), n2({synth::numerical("x")}, {Column{{10, 11}, {}}});
  CHECK(shape(n1, n2).score == 0.0);
}

TEST_CASE("ks statistic") {
  std::vector<double> a = {1, 2, 3, 4}, b = {3, 4, 5, 6};
  CHECK(ks_statistic(a, b) == 0.5);
  std::vector<double> c = {1, std::nan(""), 2};
  std::vector<double> d = {1, 2};
  CHECK(ks_statistic(c, d) == 0.0);
}

TEST_CASE("trend anchors") {
  Table t = synth::correlated_mixed(1000, 3);
  CHECK(trend(t, permuted(t, 1)).score == 1.0);
  CHECK(trend(numeric_pair(1.0, 500, 1), numeric_pair(-1.0, 500, 2)).score == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(trend(numeric_pair(0.5, 500, 3), numeric_pair(0.1, 500, 4)).score == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(trend(t, t).pairs.size() == 15);
}

TEST_CASE("pearson with zero variance") {
  std::vector<double> a = {1, 1, 1}, b = {1, 2, 3};
  CHECK(pearson(a, b) == 0.0);
}

TEST_CASE("nmi anchors") {
  std::vector<std::int32_t> x = {0, 1, 0, 1, 1, 0};
  CHECK(nmi(codes(x, x), 0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(nmi(counts_table({{5, 5}, {5, 5}}), 0, 1) == 0.0);
  Table t = counts_table({{40, 10}, {10, 40}});
  oracle::ExactJoint joint{{2, 2}, {0.4, 0.1, 0.1, 0.4}};
  auto info = oracle::exact_information(joint, 0, 1);
  CHECK(nmi(t, 0, 1) == doctest::Approx(2 * info.mi / (info.hi + info.hj)).epsilon(1e-12));
  Table flat = codes({0, 0, 0}, {0, 1, 0});
  CHECK(nmi(flat, 0, 1) == 0.0);
}

TEST_CASE("oracle information matches the hand expansion") {
  oracle::ExactJoint joint{{2, 2}, {0.4, 0.1, 0.1, 0.4}};
  auto info = oracle::exact_information(joint, 0, 1);
  double expect = 2 * 0.4 * std::log(0.4 / 0.25) + 2 * 0.1 * std::log(0.1 / 0.25);
  CHECK(std::abs(info.mi - expect) <= 1e-12);
  CHECK(std::abs(info.hi - std::log(2.0)) <= 1e-12);
  oracle::ExactJoint diag{{2, 2}, {0.3, 0.0, 0.0, 0.7}};
  auto d = oracle::exact_information(diag, 0, 1);
  CHECK(std::abs(d.mi - d.hi) <= 1e-12);
  oracle::ExactJoint prod{{2, 2}, {0.21, 0.49, 0.09, 0.21}};
  CHECK(std::abs(oracle::exact_information(prod, 0, 1).mi) <= 1e-12);
}

TEST_CASE("wnmis anchors") {
  Table t = synth::correlated_mixed(2000, 5);
  auto rep = wnmis(t, permuted(t, 3));
  CHECK(rep.score == 1.0);
  CHECK(rep.pairs.size() == 15);
  double total = 0.0;
  for (const auto& p : rep.pairs) total += p.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(nmis_unweighted(t, permuted(t, 4)).score == 1.0);
}

TEST_CASE("wnmis on a single pair equals the unweighted score") {
  Table a = synth::correlated_mixed(1000, 6).select_columns(std::vector<std::size_t>{0, 4});
  Table b = synth::correlated_mixed(1000, 7).select_columns(std::vector<std::size_t>{1, 4});
  b = Table(a.schema(), b.columns());
  CHECK(wnmis(a, b).score == nmis_unweighted(a, b).score);
}

TEST_CASE("wnmis falls back to the plain mean when nothing is dependent") {
  Table flat({synth::numerical("x"), synth::categorical("c", 2), synth::numerical("z")},
             {Column{{1, 1, 1, 1}, {}}, Column{{}, {0, 0, 0, 0}}, Column{{5, 5, 5, 5}, {}}});
  auto rep = wnmis(flat, flat);
  CHECK(rep.score == 1.0);
  for (const auto& p : rep.pairs) CHECK(p.weight == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("wnmis of independent tables is near one") {
  Rng rng(8);
  auto independent = [&](std::size_t n) {
    std::vector<Column> cols(3);
    for (std::size_t i = 0; i < n; ++i) {
      cols[0].values.push_back(rng.normal());
      cols[1].values.push_back(rng.uniform());
      cols[2].codes.push_back(static_cast<std::int32_t>(rng.index(3)));
    }
    return Table({synth::numerical("a"), synth::numerical("b"), synth::categorical("c", 3)}, std::move(cols));
  };
  CHECK(wnmis(independent(50000), independent(50000)).score >= 0.99);
}

TEST_CASE("wnmis ignores monotone transforms of synthetic columns") {
  Table real = synth::correlated_mixed(3000, 9);
  Table synth = synth::correlated_mixed(3000, 10);
  std::vector<Column> cols = synth.columns();
  for (std::size_t c = 0; c < 4; ++c)
    for (auto& v : cols[c].values) v = std::exp(2.0 * v) + 3.0;
  Table warped(synth.schema(), cols);
  CHECK(std::abs(wnmis(real, synth).score - wnmis(real, warped).score) <= 0.01);
}

TEST_CASE("c2st score mapping") {
  CHECK(c2st_score_from_auroc(0.5) == 1.0);
  CHECK(c2st_score_from_auroc(0.75) == 0.5);
  CHECK(c2st_score_from_auroc(1.0) == 0.0);
  CHECK(c2st_score_from_auroc(0.25) == 1.0);
}

TEST_CASE("c2st on two halves of one generator") {
  Table real = synth::correlated_mixed(10000, 11);
  Table other = synth::correlated_mixed(10000, 12);
  auto r = c2st(real, other, C2stClassifier::gbt, 0);
  CHECK(r.score >= 0.9);
  CHECK(r.n_per_class == 10000);
}

TEST_CASE("c2st detects a shifted column") {
  Table real = synth::correlated_mixed(2000, 13);
  std::vector<Column> cols = real.columns();
  for (auto& v : cols[1].values) v += 100.0;
  Table shifted(real.schema(), cols);
  CHECK(c2st(real, shifted, C2stClassifier::gbt, 1).score <= 0.01);
  CHECK(c2st(real, shifted, C2stClassifier::logistic, 1).score <= 0.01);
}

TEST_CASE("c2st subsamples the larger table and checks size") {
  Table real = synth::correlated_mixed(500, 14);
  Table big = synth::correlated_mixed(1500, 15);
  CHECK(c2st(real, big, C2stClassifier::logistic, 2).n_per_class == 500);
  Table tiny = real.select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4});
  try {
    c2st(tiny, big, C2stClassifier::gbt, 0);
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_data);
  }
}

TEST_CASE("c2st is seeded") {
  Table a = synth::correlated_mixed(600, 16), b = synth::correlated_mixed(700, 17);
  CHECK(c2st(a, b, C2stClassifier::gbt, 5).auroc == c2st(a, b, C2stClassifier::gbt, 5).auroc);
}

TEST_CASE("ml efficacy on real training data is stable across seeds") {
  Table train = synth::correlated_mixed(3000, 18), test = synth::correlated_mixed(2000, 19);
  std::vector<double> scores;
  for (std::uint64_t seed = 0; seed < 5; ++seed) scores.push_back(ml_efficacy(train, test, "c5", Task::classification, seed));
  double mean = 0.0;
  for (double s : scores) mean += s / 5.0;
  CHECK(mean >= 0.85);
  for (double s : scores) CHECK(std::abs(s - mean) <= 0.02);
}

TEST_CASE("ml efficacy on shuffled labels is chance") {
  Table train = synth::correlated_mixed(3000, 20), test = synth::correlated_mixed(3000, 21);
  std::vector<Column> cols = train.columns();
  Rng rng(3);
  for (auto& c : cols[5].codes) c = static_cast<std::int32_t>(rng.index(2));
  Table noise(train.schema(), cols);
  // Labels independent of the features on both sides; otherwise a model of
  // pure noise can still correlate with the real test labels by chance.
  std::vector<Column> tcols = test.columns();
  for (auto& c : tcols[5].codes) c = static_cast<std::int32_t>(rng.index(2));
  double a = ml_efficacy(noise, Table(test.schema(), tcols), "c5", Task::classification, 0);
  CHECK(a >= 0.45);
  CHECK(a <= 0.55);
}

TEST_CASE("ml efficacy with a constant regression target") {
  Table train = synth::correlated_mixed(500, 22), test = synth::correlated_mixed(400, 23);
  std::vector<Column> tc = train.columns(), sc = test.columns();
  std::fill(tc[3].values.begin(), tc[3].values.end(), 2.0);
  for (std::size_t i = 0; i < sc[3].values.size(); ++i) sc[3].values[i] = i % 2 ? 1.0 : 3.0;
  double rmse = ml_efficacy(Table(train.schema(), tc), Table(test.schema(), sc), "g3", Task::regression, 0);
  CHECK(rmse == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ml efficacy target checks") {
  Table t = synth::correlated_mixed(200, 24);
  CHECK_THROWS_AS(ml_efficacy(t, t, "nope", Task::regression), Error);
  CHECK_THROWS_AS(ml_efficacy(t, t, "c4", Task::classification), Error);
  CHECK_THROWS_AS(ml_efficacy(t, t, "c5", Task::regression), Error);
}

TEST_CASE("dcr anchors") {
  Table train = synth::correlated_mixed(500, 25), test = synth::correlated_mixed(500, 26);
  CHECK(dcr_quantile(train, test, train, 0.02) == 100.0);
  CHECK(dcr_probability(train, test, train) == 1.0);
  std::vector<Column> cols = test.columns();
  for (std::size_t c = 0; c < 4; ++c)
    for (auto& v : cols[c].values) v += 1000.0;
  Table far(test.schema(), cols);
  CHECK(dcr_quantile(train, test, far, 0.02) == 0.0);
  // Mirror construction: train and holdout hold the same rows.
  CHECK(dcr_probability(train, train, test) == 0.5);
}

TEST_CASE("row distance") {
  Schema s = {synth::numerical("a"), synth::categorical("b", 2)};
  Table train(s, {Column{{0.0, 10.0}, {}}, Column{{}, {0, 1}}});
  Table q(s, {Column{{5.0}, {}}, Column{{}, {0}}});
  RowDistance d(train);
  auto m = d.min_distances(q, train);
  CHECK(m[0] == doctest::Approx(0.25));
}

TEST_CASE("dcr under exchangeability") {
  Table train = synth::correlated_mixed(10000, 27);
  Table test = synth::correlated_mixed(10000, 28);
  Table fresh = synth::correlated_mixed(10000, 29);
  CHECK(std::abs(dcr_quantile(train, test, fresh, 0.02) - 2.0) <= 1.5);
  CHECK(std::abs(dcr_probability(train, test, fresh) - 0.5) <= 0.02);
}

TEST_CASE("metric report JSON") {
  Table t = synth::correlated_mixed(300, 30);
  auto doc = wnmis(t, t).to_json();
  CHECK(doc["metric"] == "wnmis");
  CHECK(doc["score"] == 1.0);
  CHECK(doc["pairs"].size() == 15);
}

TEST_CASE("schemas must match") {
  Table a = synth::correlated_mixed(100, 1), b = synth::tree_mixed(100, 1);
  CHECK_THROWS_AS(shape(a, b), Error);
}
