#include "tabpc/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "tabpc/error.hpp"
#include "tabpc/normal.hpp"
#include "tabpc/random.hpp"

namespace tabpc {

namespace {

std::optional<double> column_mean(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (is_missing(v)) continue;
    sum += v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::int32_t missing_category_code(ColumnSchema& col) {
  auto it = std::ranges::find(col.categories, std::string(kMissingCategory));
  if (it != col.categories.end()) return static_cast<std::int32_t>(it - col.categories.begin());
  col.categories.emplace_back(kMissingCategory);
  return static_cast<std::int32_t>(col.categories.size() - 1);
}

bool is_inflated(double v, const std::vector<double>& inflated, std::size_t& which) {
  for (std::size_t i = 0; i < inflated.size(); ++i) {
    if (v == inflated[i]) {
      which = i;
      return true;
    }
  }
  return false;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

}  // namespace

Table impute_missing(const Table& table) {
  Schema schema = table.schema();
  std::vector<Column> columns = table.columns();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto& col = schema[c];
    if (col.is_categorical()) {
      auto& codes = columns[c].codes;
      if (std::ranges::find(codes, kMissingCode) == codes.end()) continue;
      const auto code = missing_category_code(col);
      for (auto& v : codes) {
        if (v == kMissingCode) v = code;
      }
    } else {
      auto& values = columns[c].values;
      if (std::ranges::none_of(values, [](double v) { return is_missing(v); })) continue;
      auto mean = column_mean(values);
      if (!mean) fail(ErrorKind::degenerate_column, "column '" + col.name + "' has no non-missing values");
      for (auto& v : values) {
        if (is_missing(v)) v = *mean;
      }
    }
  }
  return Table(std::move(schema), std::move(columns));
}

// ---------------------------------------------------------------------------
// QuantileTransform

QuantileTransform::QuantileTransform(std::vector<double> knots, std::vector<double> levels,
                                     std::size_t n_quantiles)
    : knots_(std::move(knots)), levels_(std::move(levels)), n_quantiles_(n_quantiles) {
  if (knots_.size() != levels_.size() || knots_.size() < 2) {
    fail(ErrorKind::degenerate_column, "quantile transform needs at least two knots");
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1]) || !(levels_[i] > levels_[i - 1])) {
      fail(ErrorKind::domain, "quantile knots and levels must be strictly increasing");
    }
  }
}

QuantileTransform QuantileTransform::fit(std::span<const double> column, std::size_t n_quantiles) {
  std::vector<double> sorted;
  sorted.reserve(column.size());
  for (double v : column) {
    if (!is_missing(v)) sorted.push_back(v);
  }
  std::ranges::sort(sorted);
  if (sorted.size() < 2 || sorted.front() == sorted.back()) {
    fail(ErrorKind::degenerate_column, "quantile transform needs at least two distinct values");
  }
  n_quantiles = std::max<std::size_t>(2, n_quantiles);

  const double last = static_cast<double>(sorted.size() - 1);
  std::vector<double> knots;
  std::vector<double> levels;
  double group_sum = 0.0;
  std::size_t group_size = 0;
  for (std::size_t i = 0; i < n_quantiles; ++i) {
    const double level = static_cast<double>(i) / static_cast<double>(n_quantiles - 1);
    const double pos = level * last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    double knot = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    if (i == n_quantiles - 1) knot = sorted.back();

    if (!knots.empty() && knot <= knots.back()) {
      group_sum += level;
      ++group_size;
      levels.back() = group_sum / static_cast<double>(group_size);
      continue;
    }
    knots.push_back(knot);
    levels.push_back(level);
    group_sum = level;
    group_size = 1;
  }
  return QuantileTransform(std::move(knots), std::move(levels), n_quantiles);
}

double QuantileTransform::forward(double x) const {
  if (is_missing(x)) return x;
  double level;
  if (x <= knots_.front()) {
    level = levels_.front();
  } else if (x >= knots_.back()) {
    level = levels_.back();
  } else {
    level = interpolate(knots_, levels_, x);
  }
  return normal_ppf(std::clamp(level, kClip, 1.0 - kClip));
}

double QuantileTransform::inverse(double z) const {
  if (is_missing(z)) return z;
  const double u = normal_cdf(z);
  constexpr double slack = kClip * (1.0 + 1e-6);
  if (u <= levels_.front() || u <= slack) return knots_.front();
  if (u >= levels_.back() || u >= 1.0 - slack) return knots_.back();
  return interpolate(levels_, knots_, u);
}

nlohmann::json QuantileTransform::to_json() const {
  return {{"knots", knots_}, {"levels", levels_}, {"n_quantiles", n_quantiles_}};
}

QuantileTransform QuantileTransform::from_json(const nlohmann::json& doc) {
  return QuantileTransform(doc.at("knots").get<std::vector<double>>(),
                           doc.at("levels").get<std::vector<double>>(),
                           doc.at("n_quantiles").get<std::size_t>());
}

// ---------------------------------------------------------------------------
// Quantization

std::vector<double> dequantize(std::span<const double> column, double q, std::uint64_t seed) {
  if (!(q > 0.0)) fail(ErrorKind::domain, "quantization step must be positive");
  Rng rng(seed);
  std::vector<double> out(column.begin(), column.end());
  for (auto& v : out) {
    if (!is_missing(v)) v += rng.uniform(-0.5 * q, 0.5 * q);
  }
  return out;
}

std::vector<double> requantize(std::span<const double> column, double q, double anchor,
                               std::optional<double> upper) {
  if (!(q > 0.0)) fail(ErrorKind::domain, "quantization step must be positive");
  std::vector<double> out(column.begin(), column.end());
  for (auto& v : out) {
    if (is_missing(v)) continue;
    v = anchor + q * std::floor((v - anchor) / q + 0.5);
    if (upper) v = std::clamp(v, anchor, *upper);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan

PreprocessPlan fit_plan(const Table& train, const PlanOptions& options) {
  if (train.n_rows() == 0) fail(ErrorKind::degenerate_column, "cannot fit preprocessing on zero rows");
  const Table imputed = impute_missing(train);

  PreprocessPlan plan;
  plan.raw_schema = imputed.schema();
  plan.fingerprint = schema_fingerprint(plan.raw_schema);
  plan.columns.resize(imputed.n_cols());

  Schema companions;
  for (std::size_t c = 0; c < imputed.n_cols(); ++c) {
    const auto& col = plan.raw_schema[c];
    auto& cp = plan.columns[c];
    ColumnSchema encoded;
    encoded.name = col.name;
    encoded.kind = col.kind;

    if (col.is_categorical()) {
      cp.transform = ColumnTransform::categorical_passthrough;
      encoded.categories = col.categories;
      const auto& before = train.column_schema(c);
      if (col.categories.size() > before.categories.size() || before.has_missing) {
        auto it = std::ranges::find(col.categories, std::string(kMissingCategory));
        if (it != col.categories.end()) {
          cp.missing_code = static_cast<std::int32_t>(it - col.categories.begin());
        }
      }
      plan.encoded_schema.push_back(std::move(encoded));
      continue;
    }

    cp.impute_value = column_mean(train.values(c)).value_or(0.0);
    if (options.handle_inflated) cp.inflated_values = col.inflated_values;
    cp.quantization_step = col.quantization_step;

    std::vector<double> regular;
    for (double v : imputed.values(c)) {
      std::size_t which = 0;
      if (!is_inflated(v, cp.inflated_values, which)) regular.push_back(v);
    }
    if (!regular.empty()) {
      auto [lo, hi] = std::ranges::minmax(regular);
      cp.grid_anchor = lo;
      cp.grid_max = hi;
    }
    if (cp.quantization_step && options.dequantize && !regular.empty()) {
      regular = dequantize(regular, *cp.quantization_step, Rng::stream(options.seed, c).next());
    }
    const bool varied = !regular.empty() && std::ranges::minmax(regular).min < std::ranges::minmax(regular).max;
    if (options.quantile_normalize && varied) {
      cp.transform = ColumnTransform::quantile;
      cp.quantile = QuantileTransform::fit(regular, std::min(options.max_quantiles, regular.size()));
    } else {
      cp.transform = ColumnTransform::identity;
    }
    plan.encoded_schema.push_back(std::move(encoded));

    if (!cp.inflated_values.empty()) {
      ColumnSchema indicator;
      indicator.name = col.name + "__inflated";
      indicator.kind = ColumnKind::categorical;
      indicator.categories.emplace_back("not_inflated");
      for (double v : cp.inflated_values) indicator.categories.push_back("inflated=" + format_number(v));
      cp.companion = imputed.n_cols() + companions.size();
      companions.push_back(std::move(indicator));
    }
  }
  for (auto& col : companions) plan.encoded_schema.push_back(std::move(col));
  return plan;
}

namespace {

void check_compatible(const PreprocessPlan& plan, const Table& raw) {
  if (raw.n_cols() != plan.raw_schema.size()) {
    fail(ErrorKind::schema_mismatch, "table has " + std::to_string(raw.n_cols()) +
                                         " columns, preprocessing expects " +
                                         std::to_string(plan.raw_schema.size()));
  }
  for (std::size_t c = 0; c < raw.n_cols(); ++c) {
    const auto& want = plan.raw_schema[c];
    const auto& have = raw.column_schema(c);
    if (want.name != have.name || want.kind != have.kind ||
        (want.is_categorical() && have.cardinality() > want.cardinality())) {
      fail(ErrorKind::schema_mismatch, "column '" + have.name + "' does not match the fitted schema");
    }
  }
}

// Imputes with the plan's stored statistics and returns the table in the
// plan's raw schema.
Table impute_with_plan(const PreprocessPlan& plan, const Table& raw) {
  check_compatible(plan, raw);
  std::vector<Column> columns = raw.columns();
  for (std::size_t c = 0; c < raw.n_cols(); ++c) {
    const auto& cp = plan.columns[c];
    if (plan.raw_schema[c].is_categorical()) {
      for (auto& code : columns[c].codes) {
        if (code != kMissingCode) continue;
        if (!cp.missing_code) {
          fail(ErrorKind::domain, "column '" + plan.raw_schema[c].name +
                                      "' has missing cells but training data had none");
        }
        code = *cp.missing_code;
      }
    } else {
      for (auto& v : columns[c].values) {
        if (is_missing(v)) v = cp.impute_value;
      }
    }
  }
  return Table(plan.raw_schema, std::move(columns));
}

}  // namespace

EncodedTable encode_inflated(const Table& table, const PreprocessPlan& plan) {
  check_compatible(plan, table);
  const auto n = static_cast<Eigen::Index>(table.n_rows());
  Schema schema = table.schema();
  std::vector<Column> columns = table.columns();
  std::vector<std::pair<std::size_t, std::size_t>> marks;  // (row, column)
  for (std::size_t c = 0; c < table.n_cols(); ++c) {
    const auto& cp = plan.columns[c];
    if (!cp.companion) continue;
    schema.push_back(plan.encoded_schema.at(*cp.companion));
    Column indicator;
    indicator.codes.assign(table.n_rows(), 0);
    const auto values = table.values(c);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
      std::size_t which = 0;
      if (!is_missing(values[r]) && is_inflated(values[r], cp.inflated_values, which)) {
        indicator.codes[r] = static_cast<std::int32_t>(which + 1);
        marks.emplace_back(r, c);
      }
    }
    columns.push_back(std::move(indicator));
  }
  MaskMatrix mask = all_observed(n, static_cast<Eigen::Index>(schema.size()));
  for (auto [r, c] : marks) {
    mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
        static_cast<std::uint8_t>(Evidence::marginalized);
  }
  return {Table(std::move(schema), std::move(columns)), std::move(mask)};
}

EncodedTable apply_plan(const PreprocessPlan& plan, const Table& raw, const ApplyOptions& options) {
  const Table imputed = impute_with_plan(plan, raw);
  EncodedTable enc = encode_inflated(imputed, plan);

  std::vector<Column> columns = enc.table.columns();
  for (std::size_t c = 0; c < imputed.n_cols(); ++c) {
    const auto& cp = plan.columns[c];
    if (plan.raw_schema[c].is_categorical()) continue;
    auto& values = columns[c].values;
    if (cp.quantization_step && options.dequantize) {
      values = dequantize(values, *cp.quantization_step, Rng::stream(options.seed, c).next());
    }
    for (std::size_t r = 0; r < values.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      if (enc.mask(row, static_cast<Eigen::Index>(c)) == static_cast<std::uint8_t>(Evidence::marginalized)) {
        values[r] = 0.0;  // placeholder; the cell is marginalized
        continue;
      }
      if (cp.transform == ColumnTransform::quantile) values[r] = cp.quantile->forward(values[r]);
    }
  }
  return {Table(plan.encoded_schema, std::move(columns)), std::move(enc.mask)};
}

Table invert_plan(const PreprocessPlan& plan, const Table& encoded) {
  if (encoded.n_cols() != plan.encoded_schema.size()) {
    fail(ErrorKind::schema_mismatch, "encoded table does not match the preprocessing plan");
  }
  std::vector<Column> columns(plan.raw_schema.size());
  for (std::size_t c = 0; c < plan.raw_schema.size(); ++c) {
    const auto& cp = plan.columns[c];
    if (plan.raw_schema[c].is_categorical()) {
      columns[c].codes.assign(encoded.codes(c).begin(), encoded.codes(c).end());
      if (cp.missing_code) {
        for (auto& code : columns[c].codes) {
          if (code == *cp.missing_code) code = kMissingCode;
        }
      }
      continue;
    }
    std::vector<double> values(encoded.values(c).begin(), encoded.values(c).end());
    if (cp.transform == ColumnTransform::quantile) {
      for (auto& v : values) v = cp.quantile->inverse(v);
    }
    if (cp.quantization_step) values = requantize(values, *cp.quantization_step, cp.grid_anchor, cp.grid_max);
    if (cp.companion) {
      const auto indicator = encoded.codes(*cp.companion);
      for (std::size_t r = 0; r < values.size(); ++r) {
        if (indicator[r] > 0) values[r] = cp.inflated_values.at(static_cast<std::size_t>(indicator[r] - 1));
      }
    }
    columns[c].values = std::move(values);
  }
  return Table(plan.raw_schema, std::move(columns));
}

MaskMatrix encode_evidence_mask(const PreprocessPlan& plan, const MaskMatrix& raw_mask,
                                const MaskMatrix& inflated_mask) {
  if (raw_mask.cols() != static_cast<Eigen::Index>(plan.raw_schema.size()) ||
      inflated_mask.cols() != static_cast<Eigen::Index>(plan.n_encoded()) ||
      raw_mask.rows() != inflated_mask.rows()) {
    fail(ErrorKind::domain, "evidence mask shape does not match the preprocessing plan");
  }
  MaskMatrix out = inflated_mask;
  constexpr auto hidden = static_cast<std::uint8_t>(Evidence::marginalized);
  for (Eigen::Index r = 0; r < raw_mask.rows(); ++r) {
    for (std::size_t c = 0; c < plan.raw_schema.size(); ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      if (raw_mask(r, col) != hidden) continue;
      out(r, col) = hidden;
      if (plan.columns[c].companion) out(r, static_cast<Eigen::Index>(*plan.columns[c].companion)) = hidden;
    }
  }
  return out;
}

nlohmann::json PreprocessPlan::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& cp : columns) {
    nlohmann::json j;
    switch (cp.transform) {
      case ColumnTransform::identity: j["transform"] = "identity"; break;
      case ColumnTransform::quantile: j["transform"] = "quantile"; break;
      case ColumnTransform::categorical_passthrough: j["transform"] = "categorical"; break;
    }
    if (cp.quantile) j["quantile"] = cp.quantile->to_json();
    j["quantization_step"] = cp.quantization_step ? nlohmann::json(*cp.quantization_step) : nlohmann::json();
    j["grid_anchor"] = cp.grid_anchor;
    j["grid_max"] = cp.grid_max;
    j["inflated_values"] = cp.inflated_values;
    j["companion"] = cp.companion ? nlohmann::json(*cp.companion) : nlohmann::json();
    j["impute_value"] = cp.impute_value;
    j["missing_code"] = cp.missing_code ? nlohmann::json(*cp.missing_code) : nlohmann::json();
    cols.push_back(std::move(j));
  }
  return {{"raw_schema", schema_to_json(raw_schema)},
          {"encoded_schema", schema_to_json(encoded_schema)},
          {"columns", std::move(cols)},
          {"fingerprint", fingerprint}};
}

PreprocessPlan PreprocessPlan::from_json(const nlohmann::json& doc) {
  PreprocessPlan plan;
  try {
    plan.raw_schema = schema_from_json(doc.at("raw_schema"));
    plan.encoded_schema = schema_from_json(doc.at("encoded_schema"));
    plan.fingerprint = doc.at("fingerprint").get<std::string>();
    for (const auto& j : doc.at("columns")) {
      ColumnPlan cp;
      const auto t = j.at("transform").get<std::string>();
      cp.transform = t == "quantile"      ? ColumnTransform::quantile
                     : t == "categorical" ? ColumnTransform::categorical_passthrough
                                          : ColumnTransform::identity;
      if (j.contains("quantile")) cp.quantile = QuantileTransform::from_json(j.at("quantile"));
      if (!j.at("quantization_step").is_null()) cp.quantization_step = j.at("quantization_step").get<double>();
      cp.grid_anchor = j.at("grid_anchor").get<double>();
      cp.grid_max = j.at("grid_max").get<double>();
      cp.inflated_values = j.at("inflated_values").get<std::vector<double>>();
      if (!j.at("companion").is_null()) cp.companion = j.at("companion").get<std::size_t>();
      cp.impute_value = j.at("impute_value").get<double>();
      if (!j.at("missing_code").is_null()) cp.missing_code = j.at("missing_code").get<std::int32_t>();
      plan.columns.push_back(std::move(cp));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed preprocessing plan: ") + e.what());
  }
  if (plan.columns.size() != plan.raw_schema.size()) {
    fail(ErrorKind::parse, "preprocessing plan column count does not match its schema");
  }
  return plan;
}

}  // namespace tabpc

namespace tabpc {

Matrix to_matrix(const Table& table) {
  Matrix x(static_cast<Eigen::Index>(table.n_rows()), static_cast<Eigen::Index>(table.n_cols()));
  for (std::size_t c = 0; c < table.n_cols(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    if (table.column_schema(c).is_categorical()) {
      const auto codes = table.codes(c);
      for (std::size_t r = 0; r < codes.size(); ++r) x(static_cast<Eigen::Index>(r), col) = codes[r];
    } else {
      const auto values = table.values(c);
      for (std::size_t r = 0; r < values.size(); ++r) x(static_cast<Eigen::Index>(r), col) = values[r];
    }
  }
  return x;
}

Table from_matrix(const Schema& schema, const Matrix& x) {
  if (x.cols() != static_cast<Eigen::Index>(schema.size())) {
    fail(ErrorKind::schema_mismatch, "matrix width does not match the schema");
  }
  std::vector<Column> columns(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    if (schema[c].is_categorical()) {
      auto& codes = columns[c].codes;
      codes.resize(static_cast<std::size_t>(x.rows()));
      for (Eigen::Index r = 0; r < x.rows(); ++r) codes[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(x(r, col));
    } else {
      auto& values = columns[c].values;
      values.resize(static_cast<std::size_t>(x.rows()));
      for (Eigen::Index r = 0; r < x.rows(); ++r) values[static_cast<std::size_t>(r)] = x(r, col);
    }
  }
  return Table(schema, std::move(columns));
}

}  // namespace tabpc
