#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace tabpc {

enum class ColumnKind { numerical, categorical };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numerical;
  std::vector<std::string> categories;          // categorical only
  std::vector<double> inflated_values;          // numerical only
  std::optional<double> quantization_step;      // numerical only
  bool has_missing = false;

  std::size_t cardinality() const { return categories.size(); }
  bool is_categorical() const { return kind == ColumnKind::categorical; }

  bool operator==(const ColumnSchema&) const = default;
};

using Schema = std::vector<ColumnSchema>;

/// Missing markers inside a Table, resolved later by preprocessing.
inline constexpr std::int32_t kMissingCode = -1;
bool is_missing(double value);
double missing_value();

/// One column; exactly one of `values` / `codes` is populated, per kind.
struct Column {
  std::vector<double> values;
  std::vector<std::int32_t> codes;

  bool operator==(const Column&) const = default;
};

/// Column-major heterogeneous table.  Immutable after construction.
class Table {
 public:
  Table() = default;
  /// Validates the column count, the row count of every column, and that
  /// each categorical code is either missing or a valid category index.
  Table(Schema schema, std::vector<Column> columns);

  const Schema& schema() const { return schema_; }
  const ColumnSchema& column_schema(std::size_t c) const { return schema_.at(c); }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return schema_.size(); }

  std::span<const double> values(std::size_t c) const { return columns_.at(c).values; }
  std::span<const std::int32_t> codes(std::size_t c) const { return columns_.at(c).codes; }
  const Column& column(std::size_t c) const { return columns_.at(c); }
  const std::vector<Column>& columns() const { return columns_; }

  /// Cell as a double; categorical codes are widened.
  double cell(std::size_t row, std::size_t c) const;
  std::optional<std::size_t> find_column(const std::string& name) const;

  Table select_rows(std::span<const std::size_t> rows) const;
  Table select_columns(std::span<const std::size_t> cols) const;
  bool has_missing() const;

  bool operator==(const Table&) const = default;

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t n_rows_ = 0;
};

/// Untyped CSV contents: header plus rows of cells.  Missing cells (empty or
/// the literal "NA") are stored as std::nullopt.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<std::string>>> rows;
};

/// RFC-4180 reader (quoted fields, doubled quotes, CRLF or LF line ends).
RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::string& path);

/// Parses CSV bytes under a known schema.  Unknown category labels raise a
/// schema-mismatch error; unparseable numerals raise a parse error naming
/// the row and column.
Table load_table(std::istream& in, const Schema& schema);
Table load_table_file(const std::string& path, const Schema& schema);
Table table_from_raw(const RawTable& raw, const Schema& schema);

/// Writes the table as CSV with shortest round-trip number formatting, so
/// `load_table(write_csv(T), T.schema()) == T`.
void write_csv(std::ostream& out, const Table& table);
void write_csv_file(const std::string& path, const Table& table);
std::string format_number(double value);

struct InferOptions {
  /// Columns with fewer distinct values than this become categorical.
  std::size_t categorical_threshold = 50;
  /// Minimum share of non-missing entries for a value to count as inflated.
  double inflation_share = 0.30;
  /// The rest of the column must still show at least this many distinct values.
  std::size_t inflation_min_distinct = 100;
  /// Quantization steps producing more grid points than this are rejected.
  double max_grid_points = 1e6;
};

Schema infer_schema(const RawTable& raw, const InferOptions& options = {});

/// Greatest common grid step of the sorted distinct values, if one exists
/// within relative tolerance 1e-9.
std::optional<double> detect_quantization_step(std::vector<double> distinct_sorted,
                                               double max_grid_points = 1e6);

struct SplitSpec {
  double train_fraction = 0.81;
  double val_fraction = 0.09;
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct SplitTables {
  Table train, val, test;
};

/// Seeded permutation; val and test receive floor(fraction * n) rows and the
/// remainder goes to train.
SplitIndices split_indices(std::size_t n_rows, const SplitSpec& spec);
SplitTables split(const Table& table, const SplitSpec& spec);

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& doc);
Schema load_schema_file(const std::string& path);
void save_schema_file(const std::string& path, const Schema& schema);

/// FNV-1a digest over the structural parts of a schema (names, kinds,
/// categories, inflated values, quantization steps), as 16 hex digits.
std::string schema_fingerprint(const Schema& schema);

}  // namespace tabpc
