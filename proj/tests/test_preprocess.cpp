#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "synthetic.hpp"
#include "tabpc/error.hpp"
#include "tabpc/normal.hpp"
#include "tabpc/preprocess.hpp"
#include "tabpc/random.hpp"

using namespace tabpc;

namespace {

ColumnSchema num(const std::string& name) { return synth::numerical(name); }

ColumnSchema cat(const std::string& name, std::vector<std::string> labels) {
  ColumnSchema c;
  c.name = name;
  c.kind = ColumnKind::categorical;
  c.categories = std::move(labels);
  return c;
}

// sup |F_n - Φ| of a sample against the standard normal.
double ks_to_normal(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  double n = static_cast<double>(x.size()), d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = normal_cdf(x[i]);
    d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("normal_ppf inverts normal_cdf") {
  for (double p : {1e-12, 1e-7, 0.001, 0.02425, 0.1, 0.5, 0.77, 0.97575, 0.999, 1 - 1e-7}) {
    CHECK(normal_cdf(normal_ppf(p)) == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK(normal_ppf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_ppf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
}

TEST_CASE("impute_missing") {
  Table t({num("a"), cat("b", {"x", "y"})},
          {Column{{1.0, missing_value(), 3.0}, {}}, Column{{}, {0, kMissingCode, 1}}});
  Table out = impute_missing(t);
  CHECK(out.values(0)[1] == 2.0);
  CHECK(out.column_schema(1).categories == std::vector<std::string>{"x", "y", kMissingCategory});
  CHECK(out.codes(1)[1] == 2);
  CHECK(out.codes(1)[0] == 0);
}

TEST_CASE("impute_missing is the identity without missings") {
  Table t = synth::correlated_mixed(20, 3);
  CHECK(impute_missing(t) == t);
}

TEST_CASE("impute_missing rejects a fully missing column") {
  Table t({num("a")}, {Column{{missing_value(), missing_value()}, {}}});
  CHECK_THROWS_AS(impute_missing(t), Error);
}

TEST_CASE("encode_inflated flags inflated cells") {
  ColumnSchema a = num("a");
  a.inflated_values = {0.0};
  Table t({a}, {Column{{0, 0, 5, 7}, {}}});
  PlanOptions opts;
  opts.quantile_normalize = false;
  auto plan = fit_plan(t, opts);
  auto enc = encode_inflated(t, plan);
  REQUIRE(enc.table.n_cols() == 2);
  CHECK(enc.table.column_schema(1).name == "a__inflated");
  CHECK(std::vector<std::int32_t>(enc.table.codes(1).begin(), enc.table.codes(1).end()) ==
        std::vector<std::int32_t>{1, 1, 0, 0});
  CHECK(enc.mask(0, 0) == 0);
  CHECK(enc.mask(1, 0) == 0);
  CHECK(enc.mask(2, 0) == 1);
  CHECK(enc.mask(3, 0) == 1);
  CHECK(enc.mask(0, 1) == 1);
}

TEST_CASE("encode_inflated without inflated values is the identity") {
  Table t({num("a")}, {Column{{1, 2, 3}, {}}});
  auto plan = fit_plan(t);
  auto enc = encode_inflated(t, plan);
  CHECK(enc.table == t);
  CHECK((enc.mask.array() == 1).all());
}

TEST_CASE("encode_inflated with an absent inflated value") {
  ColumnSchema a = num("a");
  a.inflated_values = {-1.0};
  Table t({a}, {Column{{1, 2, 3}, {}}});
  auto plan = fit_plan(t);
  auto enc = encode_inflated(t, plan);
  for (auto c : enc.table.codes(1)) CHECK(c == 0);
}

TEST_CASE("quantile transform round trip") {
  Rng rng(11);
  std::vector<double> x(5000);
  for (auto& v : x) v = std::exp(rng.normal()) * 10.0;
  auto qt = QuantileTransform::fit(x, 1000);
  double worst = 0.0;
  for (double v : x) worst = std::max(worst, std::abs(qt.inverse(qt.forward(v)) - v) / std::max(1.0, std::abs(v)));
  CHECK(worst <= 1e-6);
}

TEST_CASE("quantile transform gaussianizes normal data") {
  Rng rng(12);
  std::vector<double> x(100000);
  for (auto& v : x) v = rng.normal();
  auto qt = QuantileTransform::fit(x, 1000);
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = qt.forward(x[i]);
  CHECK(ks_to_normal(z) <= 0.01);
}

TEST_CASE("quantile forward is monotone") {
  Rng rng(13);
  std::vector<double> x(300);
  for (auto& v : x) v = std::floor(rng.normal() * 3.0);  // many ties
  auto qt = QuantileTransform::fit(x, 300);
  double prev = -INFINITY;
  for (double v = -15.0; v <= 15.0; v += 0.01) {
    double z = qt.forward(v);
    CHECK(z >= prev);
    prev = z;
  }
  CHECK(std::adjacent_find(qt.knots().begin(), qt.knots().end(), std::greater_equal<>()) == qt.knots().end());
}

TEST_CASE("quantile transform rejects constant columns") {
  std::vector<double> x(10, 4.0);
  CHECK_THROWS_AS(QuantileTransform::fit(x, 10), Error);
}

TEST_CASE("quantile inverse stays in the training range") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  auto qt = QuantileTransform::fit(x, 5);
  CHECK(qt.inverse(-40.0) == 1.0);
  CHECK(qt.inverse(40.0) == 5.0);
  CHECK(qt.forward(100.0) == doctest::Approx(normal_ppf(1 - 1e-7)));
}

TEST_CASE("quantile transform commutes with monotone maps") {
  Rng rng(14);
  std::vector<double> y(20000), z(20000);
  for (std::size_t i = 0; i < y.size(); ++i) {
    z[i] = rng.normal();
    y[i] = std::exp(z[i]);
  }
  auto qy = QuantileTransform::fit(y, 1000);
  auto qz = QuantileTransform::fit(z, 1000);
  std::vector<double> a(y.size()), b(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    a[i] = qy.forward(y[i]);
    b[i] = qz.forward(z[i]);
  }
  CHECK(ks_two_sample(a, b) <= 1e-3);
}

TEST_CASE("dequantize ranges and determinism") {
  std::vector<double> v = {2, 4};
  auto d = dequantize(v, 2.0, 5);
  CHECK(d[0] >= 1.0);
  CHECK(d[0] <= 3.0);
  CHECK(d[1] >= 3.0);
  CHECK(d[1] <= 5.0);
  CHECK(dequantize(v, 2.0, 5) == d);
  CHECK(dequantize(v, 2.0, 6) != d);
}

TEST_CASE("requantize") {
  std::vector<double> v = {3.4, 4.0, 3.0, 6.0};
  auto r = requantize(v, 2.0, 2.0);
  CHECK(r == std::vector<double>{4.0, 4.0, 4.0, 6.0});
  std::vector<double> grid;
  for (int k = 0; k < 50; ++k) grid.push_back(-3.0 + 0.25 * k);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(requantize(dequantize(grid, 0.25, seed), 0.25, -3.0) == grid);
  }
  CHECK(requantize(std::vector<double>{100.0}, 2.0, 2.0, 6.0)[0] == 6.0);
}

TEST_CASE("pipeline round trip on training data") {
  Table t = synth::correlated_mixed(2000, 21);
  auto plan = fit_plan(t);
  auto enc = apply_plan(plan, t);
  CHECK(enc.table.n_rows() == t.n_rows());
  Table back = invert_plan(plan, enc.table);
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    if (t.column_schema(c).is_categorical()) {
      CHECK(back.column(c).codes == t.column(c).codes);
      continue;
    }
    double worst = 0.0;
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      worst = std::max(worst, std::abs(back.values(c)[r] - t.values(c)[r]) / std::max(1.0, std::abs(t.values(c)[r])));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("pipeline with missing, inflated and quantized columns") {
  Rng rng(31);
  ColumnSchema amount = num("amount");
  amount.inflated_values = {0.0};
  ColumnSchema age = num("age");
  age.quantization_step = 1.0;
  ColumnSchema kind = cat("kind", {"a", "b"});
  kind.has_missing = true;
  std::vector<Column> cols(3);
  for (int i = 0; i < 500; ++i) {
    cols[0].values.push_back(i % 3 == 0 ? 0.0 : std::exp(rng.normal()));
    cols[1].values.push_back(i % 17 == 0 ? missing_value() : std::floor(20 + 40 * rng.uniform()));
    cols[2].codes.push_back(i % 11 == 0 ? kMissingCode : static_cast<std::int32_t>(rng.index(2)));
  }
  age.has_missing = true;
  Table t({amount, age, kind}, std::move(cols));
  auto plan = fit_plan(t);
  CHECK(plan.n_encoded() == 4);
  CHECK(plan.columns[2].missing_code == 2);
  auto enc = apply_plan(plan, t, {true, 3});
  Table back = invert_plan(plan, enc.table);
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    double a = t.values(0)[r];
    CHECK(back.values(0)[r] == doctest::Approx(a).epsilon(1e-6));
    if (!is_missing(t.values(1)[r])) CHECK(back.values(1)[r] == t.values(1)[r]);
    CHECK(back.codes(2)[r] == t.codes(2)[r]);
  }
  // Plan survives JSON.
  auto again = PreprocessPlan::from_json(plan.to_json());
  CHECK(again.to_json() == plan.to_json());
  auto enc2 = apply_plan(again, t, {true, 3});
  CHECK(enc2.table == enc.table);
}

TEST_CASE("encode_evidence_mask hides companions") {
  ColumnSchema a = num("a");
  a.inflated_values = {0.0};
  Table t({a, num("b")}, {Column{{0, 1, 2, 3}, {}}, Column{{1, 2, 3, 4}, {}}});
  auto plan = fit_plan(t);
  auto enc = apply_plan(plan, t);
  MaskMatrix raw = all_observed(4, 2);
  raw(1, 0) = 0;
  auto m = encode_evidence_mask(plan, raw, enc.mask);
  CHECK(m(0, 0) == 0);  // inflated cell
  CHECK(m(0, 2) == 1);
  CHECK(m(1, 0) == 0);
  CHECK(m(1, 2) == 0);
  CHECK(m(1, 1) == 1);
}

TEST_CASE("to_matrix and from_matrix") {
  Table t = synth::correlated_mixed(10, 1);
  CHECK(from_matrix(t.schema(), to_matrix(t)) == t);
}
