#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "tabpc/dataset.hpp"

namespace tabpc {

struct ColumnScore {
  std::string column;
  double score = 0.0;
};

struct PairScore {
  std::string first, second;
  double score = 0.0;
  double weight = 1.0;  // wNMIS only
};

struct MetricReport {
  std::string metric;
  double score = 0.0;
  std::vector<ColumnScore> columns;
  std::vector<PairScore> pairs;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMiBins = 20;
inline constexpr std::size_t kTrendBins = 10;

/// Two-sample Kolmogorov-Smirnov statistic; missing values are skipped.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// 1 - KS per numerical column, 1 - TVD per categorical column, averaged.
MetricReport shape(const Table& real, const Table& synth);

/// Pearson-similarity for numerical pairs, contingency similarity for the
/// rest; numerical columns of mixed pairs are cut at equal-frequency edges
/// taken from the real data.
MetricReport trend(const Table& real, const Table& synth, std::size_t bins = kTrendBins);

/// Pearson correlation; 0 when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Normalized mutual information of two columns of one table; numerical
/// columns are cut into `bins` equal-frequency bins.
double nmi(const Table& table, std::size_t i, std::size_t j, std::size_t bins = kMiBins);

/// Pairwise 1 - |NMI_R - NMI_S| weighted by |NMI_R + NMI_S| (plain mean
/// when every weight is zero).
MetricReport wnmis(const Table& real, const Table& synth, std::size_t bins = kMiBins);

/// Same pair scores with uniform weights.
MetricReport nmis_unweighted(const Table& real, const Table& synth, std::size_t bins = kMiBins);

enum class C2stClassifier { logistic, gbt };

/// 1 - (2 max(AUROC, 0.5) - 1).
double c2st_score_from_auroc(double auroc);

struct C2stResult {
  double score = 0.0;
  double auroc = 0.5;
  std::size_t n_per_class = 0;
};

/// Balanced classifier two-sample test: the larger table is subsampled,
/// real rows are labelled 1, each class is split in half for train/test.
C2stResult c2st(const Table& real, const Table& synth, C2stClassifier classifier, std::uint64_t seed);

enum class Task { classification, regression };

/// Fits boosted trees on synthetic rows (8:1 fit/validation split, grid over
/// depth {3, 6} x trees {50, 100}) and scores them on real test rows:
/// AUROC for a binary categorical target, RMSE for a numerical one.
double ml_efficacy(const Table& synth_train, const Table& real_test, const std::string& target, Task task,
                   std::uint64_t seed = 0);

/// Mixed distance: mean over columns of |Δ| / (train range) for numerical
/// columns and 0/1 mismatch for categorical ones.
class RowDistance {
 public:
  explicit RowDistance(const Table& train);
  /// Minimum distance from every row of `query` to the rows of `reference`.
  std::vector<double> min_distances(const Table& query, const Table& reference) const;

 private:
  std::vector<double> range_;
};

/// 100 x share of synthetic rows whose distance to train is below the
/// q-quantile of the test rows' distances to train.
double dcr_quantile(const Table& train, const Table& test, const Table& synth, double q);

/// Share of synthetic rows strictly closer to train than to holdout, ties ½.
double dcr_probability(const Table& train, const Table& holdout, const Table& synth);

}  // namespace tabpc
