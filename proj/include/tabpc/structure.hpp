#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tabpc/circuit.hpp"
#include "tabpc/dataset.hpp"
#include "tabpc/mask.hpp"

namespace tabpc {

/// D x D plug-in mutual information in nats; the diagonal holds entropies.
using MiMatrix = Matrix;

using Edge = std::pair<std::size_t, std::size_t>;  // first < second

/// Numerical columns are cut into `bins` equal-frequency bins, categorical
/// columns use their codes.  Pairs are estimated in parallel.
MiMatrix estimate_pairwise_mi(const Table& table, std::size_t bins);

/// Maximum spanning tree (Kruskal).  Equal weights are taken in
/// lexicographic (i, j) order.  D = 1 gives no edges.
std::vector<Edge> chow_liu_tree(const MiMatrix& mi);

/// Node of minimum eccentricity, smallest index on ties.  Throws a graph
/// error unless `edges` form a spanning tree over n_nodes nodes.
std::size_t jordan_center(std::span<const Edge> edges, std::size_t n_nodes);

struct Partition {
  std::size_t parent = 0;
  std::vector<std::size_t> children;
};

/// Tree-shaped region graph.  Regions are listed children-first, so every
/// partition's child regions precede its parent region.
struct RegionGraph {
  std::vector<std::vector<std::size_t>> regions;
  std::vector<Partition> partitions;
  std::size_t root = 0;

  /// Invariant violations (empty when sound).
  std::vector<std::string> check(std::size_t n_variables) const;
  nlohmann::json to_json() const;
};

/// A node v with tree children c_1..c_m becomes the region {v} ∪ sc(c_i)
/// with one partition [{v}, sc(c_1), ..., sc(c_m)], children in index order.
RegionGraph compile_region_graph(std::span<const Edge> edges, std::size_t root, std::size_t n_nodes);

struct BuildConfig {
  std::size_t units = 16;  // K
  std::size_t mi_bins = 20;
  std::uint64_t seed = 0;
  std::size_t max_params = 50'000'000;
};

/// Variable kinds and cardinalities of a circuit-space schema.
std::pair<std::vector<VariableKind>, std::vector<std::size_t>> variable_bindings(const Schema& schema);

/// Leaf regions become input layers, partitions cp layers of width K, and
/// the root region is capped by a 1 x K mixing row.
Circuit build_circuit(const RegionGraph& rg, const Schema& schema, const BuildConfig& cfg);

/// Weight logits ~ U(-0.01, 0.01), Gaussian means ~ N(0, 1) with log-std 0,
/// categorical logits ~ U(-1, 1).
void initialize_params(Circuit& circuit, std::uint64_t seed);

/// Product of width-1 inputs.
Circuit build_ff(const Schema& schema);

/// Closed-form maximum likelihood on observed cells: sample mean and
/// population variance, smoothed categorical frequencies (count + alpha).
void fit_ff(Circuit& ff, const Matrix& x, const MaskMatrix& mask, double alpha = 0.1);

/// K fully factorized components mixed by a single 1 x K row.
Circuit build_sm(const Schema& schema, std::size_t units, std::uint64_t seed);

/// MI estimate on `data`, Chow-Liu tree, Jordan-center root, region graph,
/// then build_circuit.
Circuit build_tabpc(const Table& data, const BuildConfig& cfg, RegionGraph* rg_out = nullptr);

}  // namespace tabpc
