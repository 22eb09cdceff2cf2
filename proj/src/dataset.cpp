#include "tabpc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "tabpc/error.hpp"
#include "tabpc/random.hpp"

namespace tabpc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema_mismatch: return "schema_mismatch";
    case ErrorKind::degenerate_column: return "degenerate_column";
    case ErrorKind::infeasible_split: return "infeasible_split";
    case ErrorKind::domain: return "domain";
    case ErrorKind::graph: return "graph";
    case ErrorKind::budget: return "budget";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::impossible_evidence: return "impossible_evidence";
    case ErrorKind::incompatible_model: return "incompatible_model";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::degenerate_target: return "degenerate_target";
  }
  return "unknown";
}

bool is_missing(double value) { return std::isnan(value); }
double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

// ---------------------------------------------------------------------------
// Table

Table::Table(Schema schema, std::vector<Column> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (schema_.size() != columns_.size()) {
    fail(ErrorKind::schema_mismatch, "table has " + std::to_string(columns_.size()) +
                                         " columns but schema lists " +
                                         std::to_string(schema_.size()));
  }
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    const auto& s = schema_[c];
    const std::size_t len = s.is_categorical() ? columns_[c].codes.size() : columns_[c].values.size();
    if (c == 0) n_rows_ = len;
    if (len != n_rows_) {
      fail(ErrorKind::schema_mismatch, "column '" + s.name + "' has " + std::to_string(len) +
                                           " rows, expected " + std::to_string(n_rows_));
    }
    if (s.is_categorical()) {
      const auto card = static_cast<std::int32_t>(s.cardinality());
      for (std::int32_t code : columns_[c].codes) {
        if (code != kMissingCode && (code < 0 || code >= card)) {
          fail(ErrorKind::schema_mismatch, "column '" + s.name + "' holds code " +
                                               std::to_string(code) + " outside [0, " +
                                               std::to_string(card) + ")");
        }
      }
    }
  }
}

double Table::cell(std::size_t row, std::size_t c) const {
  if (schema_[c].is_categorical()) {
    const auto code = columns_[c].codes[row];
    return code == kMissingCode ? missing_value() : static_cast<double>(code);
  }
  return columns_[c].values[row];
}

std::optional<std::size_t> Table::find_column(const std::string& name) const {
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].name == name) return c;
  }
  return std::nullopt;
}

Table Table::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (schema_[c].is_categorical()) {
      out[c].codes.reserve(rows.size());
      for (auto r : rows) out[c].codes.push_back(columns_[c].codes.at(r));
    } else {
      out[c].values.reserve(rows.size());
      for (auto r : rows) out[c].values.push_back(columns_[c].values.at(r));
    }
  }
  return Table(schema_, std::move(out));
}

Table Table::select_columns(std::span<const std::size_t> cols) const {
  Schema schema;
  std::vector<Column> out;
  for (auto c : cols) {
    schema.push_back(schema_.at(c));
    out.push_back(columns_.at(c));
  }
  return Table(std::move(schema), std::move(out));
}

bool Table::has_missing() const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (schema_[c].is_categorical()) {
      if (std::ranges::find(columns_[c].codes, kMissingCode) != columns_[c].codes.end()) return true;
    } else {
      if (std::ranges::any_of(columns_[c].values, [](double v) { return is_missing(v); })) return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

bool is_missing_cell(std::string_view cell) { return cell.empty() || cell == "NA"; }

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

// Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::optional<std::string>>& fields) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string cell;
  bool quoted = false;      // currently inside quotes
  bool was_quoted = false;  // this field used quotes (so "" is an empty string)
  auto finish = [&] {
    if (!was_quoted && is_missing_cell(cell)) {
      fields.emplace_back(std::nullopt);
    } else {
      fields.emplace_back(cell);
    }
    cell.clear();
    was_quoted = false;
  };
  for (;;) {
    const int ch = in.get();
    if (ch == std::char_traits<char>::eof()) {
      if (quoted) fail(ErrorKind::parse, "unterminated quoted field at end of CSV input");
      finish();
      return true;
    }
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          cell.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"' && cell.empty()) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      finish();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      finish();
      return true;
    } else if (c == '\n') {
      finish();
      return true;
    } else {
      cell.push_back(c);
    }
  }
}

std::string quote_if_needed(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos && !text.empty() && text != "NA") {
    return text;
  }
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

RawTable read_csv(std::istream& in) {
  RawTable raw;
  std::vector<std::optional<std::string>> fields;
  if (!read_record(in, fields)) fail(ErrorKind::parse, "CSV input has no header row");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (!fields[i]) fail(ErrorKind::parse, "CSV header has an empty name at column " + std::to_string(i));
    raw.header.push_back(*fields[i]);
  }
  while (read_record(in, fields)) {
    // A trailing blank line parses as one missing cell; skip it.
    if (fields.size() == 1 && !fields[0] && raw.header.size() != 1) continue;
    if (fields.size() != raw.header.size()) {
      fail(ErrorKind::parse, "CSV row " + std::to_string(raw.rows.size() + 1) + " has " +
                                 std::to_string(fields.size()) + " cells, header has " +
                                 std::to_string(raw.header.size()));
    }
    raw.rows.push_back(fields);
  }
  return raw;
}

RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return read_csv(in);
}

Table table_from_raw(const RawTable& raw, const Schema& schema) {
  if (raw.header.size() != schema.size()) {
    fail(ErrorKind::schema_mismatch, "CSV has " + std::to_string(raw.header.size()) +
                                         " columns, schema has " + std::to_string(schema.size()));
  }
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (raw.header[c] != schema[c].name) {
      fail(ErrorKind::schema_mismatch, "CSV column " + std::to_string(c) + " is '" + raw.header[c] +
                                           "', schema expects '" + schema[c].name + "'");
    }
  }
  std::vector<Column> columns(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& s = schema[c];
    if (s.is_categorical()) {
      std::unordered_map<std::string, std::int32_t> lookup;
      for (std::size_t k = 0; k < s.categories.size(); ++k) {
        lookup.emplace(s.categories[k], static_cast<std::int32_t>(k));
      }
      auto& codes = columns[c].codes;
      codes.reserve(raw.rows.size());
      for (std::size_t r = 0; r < raw.rows.size(); ++r) {
        const auto& cell = raw.rows[r][c];
        if (!cell) {
          codes.push_back(kMissingCode);
          continue;
        }
        auto it = lookup.find(*cell);
        if (it == lookup.end()) {
          fail(ErrorKind::schema_mismatch, "row " + std::to_string(r + 1) + ", column '" + s.name +
                                               "': label '" + *cell + "' is not a known category");
        }
        codes.push_back(it->second);
      }
    } else {
      auto& values = columns[c].values;
      values.reserve(raw.rows.size());
      for (std::size_t r = 0; r < raw.rows.size(); ++r) {
        const auto& cell = raw.rows[r][c];
        if (!cell) {
          values.push_back(missing_value());
          continue;
        }
        auto v = parse_double(*cell);
        if (!v) {
          fail(ErrorKind::parse, "row " + std::to_string(r + 1) + ", column '" + s.name +
                                     "': cannot parse '" + *cell + "' as a number");
        }
        values.push_back(*v);
      }
    }
  }
  return Table(schema, std::move(columns));
}

Table load_table(std::istream& in, const Schema& schema) { return table_from_raw(read_csv(in), schema); }

Table load_table_file(const std::string& path, const Schema& schema) {
  return table_from_raw(read_csv_file(path), schema);
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const Table& table) {
  const auto& schema = table.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out << ',';
    out << quote_if_needed(schema[c].name);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (c) out << ',';
      if (schema[c].is_categorical()) {
        const auto code = table.codes(c)[r];
        if (code != kMissingCode) out << quote_if_needed(schema[c].categories[code]);
      } else {
        const double v = table.values(c)[r];
        if (!is_missing(v)) out << format_number(v);
      }
    }
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  write_csv(out, table);
}

// ---------------------------------------------------------------------------
// Schema inference

std::optional<double> detect_quantization_step(std::vector<double> distinct, double max_grid_points) {
  if (distinct.size() < 2) return std::nullopt;
  std::ranges::sort(distinct);
  const double scale = std::max(std::abs(distinct.front()), std::abs(distinct.back()));
  const double tol = 1e-9 * std::max(scale, std::numeric_limits<double>::min());

  auto fgcd = [tol](double a, double b) {
    if (a < b) std::swap(a, b);
    while (b > tol) {
      double r = std::fmod(a, b);
      if (b - r <= tol) r = 0.0;
      a = b;
      b = r;
    }
    return a;
  };

  double step = distinct[1] - distinct[0];
  double min_gap = step;
  for (std::size_t i = 2; i < distinct.size(); ++i) {
    const double gap = distinct[i] - distinct[i - 1];
    min_gap = std::min(min_gap, gap);
    step = fgcd(step, gap);
  }
  // a common step can never exceed the smallest gap
  if (!(step > tol) || step > min_gap * (1.0 + 1e-9)) return std::nullopt;
  const double range = distinct.back() - distinct.front();
  if (range / step > max_grid_points) return std::nullopt;
  for (std::size_t i = 1; i < distinct.size(); ++i) {
    const double ratio = (distinct[i] - distinct[0]) / step;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio) + tol / step) {
      return std::nullopt;
    }
  }
  return step;
}

Schema infer_schema(const RawTable& raw, const InferOptions& options) {
  if (raw.rows.empty()) fail(ErrorKind::degenerate_column, "cannot infer a schema from zero rows");
  Schema schema;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    ColumnSchema col;
    col.name = raw.header[c];

    std::vector<std::string> first_seen;
    std::unordered_map<std::string, std::size_t> label_counts;
    std::vector<double> numbers;
    bool all_numeric = true;
    std::size_t present = 0;
    for (const auto& row : raw.rows) {
      const auto& cell = row[c];
      if (!cell) {
        col.has_missing = true;
        continue;
      }
      ++present;
      if (label_counts[*cell]++ == 0) first_seen.push_back(*cell);
      if (all_numeric) {
        if (auto v = parse_double(*cell)) {
          numbers.push_back(*v);
        } else {
          all_numeric = false;
        }
      }
    }
    if (present == 0) fail(ErrorKind::degenerate_column, "column '" + col.name + "' is entirely missing");

    std::vector<double> distinct;
    if (all_numeric) {
      distinct = numbers;
      std::ranges::sort(distinct);
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    }
    const std::size_t n_distinct = all_numeric ? distinct.size() : first_seen.size();

    if (!all_numeric || n_distinct < options.categorical_threshold) {
      col.kind = ColumnKind::categorical;
      col.categories = std::move(first_seen);
      schema.push_back(std::move(col));
      continue;
    }

    col.kind = ColumnKind::numerical;
    std::map<double, std::size_t> counts;
    for (double v : numbers) ++counts[v];
    for (const auto& [value, count] : counts) {
      const double share = static_cast<double>(count) / static_cast<double>(present);
      if (share >= options.inflation_share && n_distinct - 1 >= options.inflation_min_distinct) {
        col.inflated_values.push_back(value);
      }
    }
    std::vector<double> grid;
    for (double v : distinct) {
      if (std::ranges::find(col.inflated_values, v) == col.inflated_values.end()) grid.push_back(v);
    }
    col.quantization_step = detect_quantization_step(std::move(grid), options.max_grid_points);
    schema.push_back(std::move(col));
  }
  return schema;
}

// ---------------------------------------------------------------------------
// Splits

SplitIndices split_indices(std::size_t n_rows, const SplitSpec& spec) {
  const double fractions[] = {spec.train_fraction, spec.val_fraction, spec.test_fraction};
  for (double f : fractions) {
    if (!(f >= 0.0)) fail(ErrorKind::infeasible_split, "split fractions must be nonnegative");
  }
  if (std::abs(spec.train_fraction + spec.val_fraction + spec.test_fraction - 1.0) > 1e-9) {
    fail(ErrorKind::infeasible_split, "split fractions must sum to 1");
  }
  if (n_rows < 3) fail(ErrorKind::infeasible_split, "splitting needs at least 3 rows");

  const auto count = [n_rows](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n_rows) + 1e-9));
  };
  const std::size_t n_val = count(spec.val_fraction);
  const std::size_t n_test = count(spec.test_fraction);
  if (n_val + n_test > n_rows) fail(ErrorKind::infeasible_split, "split sizes exceed the row count");
  const std::size_t n_train = n_rows - n_val - n_test;
  if ((spec.train_fraction > 0 && n_train == 0) || (spec.val_fraction > 0 && n_val == 0) ||
      (spec.test_fraction > 0 && n_test == 0)) {
    fail(ErrorKind::infeasible_split, "a split with positive fraction would be empty for " +
                                          std::to_string(n_rows) + " rows");
  }

  std::vector<std::size_t> perm(n_rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(perm);

  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return out;
}

SplitTables split(const Table& table, const SplitSpec& spec) {
  auto idx = split_indices(table.n_rows(), spec);
  return {table.select_rows(idx.train), table.select_rows(idx.val), table.select_rows(idx.test)};
}

// ---------------------------------------------------------------------------
// Schema JSON

nlohmann::json schema_to_json(const Schema& schema) {
  auto doc = nlohmann::json::array();
  for (const auto& col : schema) {
    nlohmann::json j;
    j["name"] = col.name;
    j["kind"] = col.is_categorical() ? "categorical" : "numerical";
    if (col.is_categorical()) {
      j["categories"] = col.categories;
    } else {
      j["inflated_values"] = col.inflated_values;
      j["quantization_step"] = col.quantization_step ? nlohmann::json(*col.quantization_step) : nlohmann::json();
    }
    j["has_missing"] = col.has_missing;
    doc.push_back(std::move(j));
  }
  return doc;
}

Schema schema_from_json(const nlohmann::json& doc) {
  const nlohmann::json* columns = &doc;
  if (doc.is_object() && doc.contains("columns")) columns = &doc.at("columns");
  if (!columns->is_array()) fail(ErrorKind::parse, "schema JSON must be an array of columns");
  Schema schema;
  try {
    for (const auto& j : *columns) {
      ColumnSchema col;
      col.name = j.at("name").get<std::string>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "categorical") {
        col.kind = ColumnKind::categorical;
        col.categories = j.at("categories").get<std::vector<std::string>>();
        if (col.categories.empty()) {
          fail(ErrorKind::parse, "categorical column '" + col.name + "' needs at least one category");
        }
        if (j.contains("inflated_values") && !j.at("inflated_values").empty()) {
          fail(ErrorKind::parse, "categorical column '" + col.name + "' cannot have inflated values");
        }
      } else if (kind == "numerical") {
        col.kind = ColumnKind::numerical;
        if (j.contains("inflated_values")) col.inflated_values = j.at("inflated_values").get<std::vector<double>>();
        if (j.contains("quantization_step") && !j.at("quantization_step").is_null()) {
          const double q = j.at("quantization_step").get<double>();
          if (!(q > 0.0)) fail(ErrorKind::parse, "quantization_step of '" + col.name + "' must be positive");
          col.quantization_step = q;
        }
      } else {
        fail(ErrorKind::parse, "column '" + col.name + "' has unknown kind '" + kind + "'");
      }
      if (j.contains("has_missing")) col.has_missing = j.at("has_missing").get<bool>();
      schema.push_back(std::move(col));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed schema JSON: ") + e.what());
  }
  return schema;
}

Schema load_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open schema '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "schema '" + path + "' is not valid JSON: " + e.what());
  }
  return schema_from_json(doc);
}

void save_schema_file(const std::string& path, const Schema& schema) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out << schema_to_json(schema).dump(2) << '\n';
}

std::string schema_fingerprint(const Schema& schema) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& col : schema) {
    feed(col.name);
    feed(col.is_categorical() ? "c" : "n");
    for (const auto& cat : col.categories) feed(cat);
    for (double v : col.inflated_values) feed(format_number(v));
    feed(col.quantization_step ? format_number(*col.quantization_step) : "-");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tabpc
