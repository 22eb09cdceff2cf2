#include "tabpc/structure.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "tabpc/error.hpp"
#include "tabpc/information.hpp"
#include "tabpc/parallel.hpp"
#include "tabpc/random.hpp"

namespace tabpc {

MiMatrix estimate_pairwise_mi(const Table& table, std::size_t bins) {
  if (bins < 2) fail(ErrorKind::domain, "mi_bins must be at least 2");
  const std::size_t D = table.n_cols();
  std::vector<std::vector<std::int32_t>> codes(D);
  std::vector<std::size_t> levels(D);
  for (std::size_t c = 0; c < D; ++c) {
    if (table.column_schema(c).is_categorical()) {
      codes[c].assign(table.codes(c).begin(), table.codes(c).end());
      levels[c] = table.column_schema(c).cardinality();
    } else {
      codes[c] = equal_frequency_bins(table.values(c), bins);
      levels[c] = bins;
    }
  }
  std::vector<Edge> pairs;
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i + 1; j < D; ++j) pairs.emplace_back(i, j);
  }
  MiMatrix mi = MiMatrix::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
  for (std::size_t c = 0; c < D; ++c) {
    mi(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = plugin_entropy(codes[c], levels[c]);
  }
  parallel_chunks(pairs.size(), 8, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto [i, j] = pairs[p];
      const double v = plugin_information(codes[i], levels[i], codes[j], levels[j]).mi;
      mi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      mi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  });
  return mi;
}

namespace {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
  std::vector<std::size_t> parent;
};

std::vector<std::vector<std::size_t>> adjacency(std::span<const Edge> edges, std::size_t n) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : edges) {
    if (a >= n || b >= n || a == b) fail(ErrorKind::graph, "edge references an invalid node");
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& list : adj) std::ranges::sort(list);
  return adj;
}

std::vector<std::size_t> bfs_distances(const std::vector<std::vector<std::size_t>>& adj, std::size_t source) {
  constexpr auto unreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(adj.size(), unreached);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto w : adj[u]) {
      if (dist[w] != unreached) continue;
      dist[w] = dist[u] + 1;
      queue.push_back(w);
    }
  }
  return dist;
}

void check_tree(std::span<const Edge> edges, std::size_t n) {
  if (n == 0) fail(ErrorKind::graph, "tree has no nodes");
  if (edges.size() != n - 1) fail(ErrorKind::graph, "edge count does not form a spanning tree");
  const auto dist = bfs_distances(adjacency(edges, n), 0);
  if (std::ranges::any_of(dist, [](std::size_t d) { return d == std::numeric_limits<std::size_t>::max(); })) {
    fail(ErrorKind::graph, "tree is disconnected");
  }
}

}  // namespace

std::vector<Edge> chow_liu_tree(const MiMatrix& mi) {
  const auto D = static_cast<std::size_t>(mi.rows());
  std::vector<Edge> candidates;
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i + 1; j < D; ++j) candidates.emplace_back(i, j);
  }
  auto weight = [&](const Edge& e) {
    return mi(static_cast<Eigen::Index>(e.first), static_cast<Eigen::Index>(e.second));
  };
  std::ranges::stable_sort(candidates, [&](const Edge& a, const Edge& b) { return weight(a) > weight(b); });
  DisjointSets sets(D);
  std::vector<Edge> tree;
  for (const auto& e : candidates) {
    if (sets.unite(e.first, e.second)) tree.push_back(e);
    if (tree.size() + 1 == D) break;
  }
  return tree;
}

std::size_t jordan_center(std::span<const Edge> edges, std::size_t n_nodes) {
  check_tree(edges, n_nodes);
  const auto adj = adjacency(edges, n_nodes);
  std::size_t best = 0;
  std::size_t best_ecc = std::numeric_limits<std::size_t>::max();
  for (std::size_t v = 0; v < n_nodes; ++v) {
    const auto dist = bfs_distances(adj, v);
    const auto ecc = *std::ranges::max_element(dist);
    if (ecc < best_ecc) {
      best_ecc = ecc;
      best = v;
    }
  }
  return best;
}

RegionGraph compile_region_graph(std::span<const Edge> edges, std::size_t root, std::size_t n_nodes) {
  check_tree(edges, n_nodes);
  if (root >= n_nodes) fail(ErrorKind::graph, "root is not a tree node");
  const auto adj = adjacency(edges, n_nodes);

  // Iterative post-order so deep chains do not exhaust the stack.
  RegionGraph rg;
  std::vector<std::size_t> leaf_region(n_nodes), subtree_region(n_nodes);
  std::vector<std::size_t> parent(n_nodes, n_nodes);
  std::vector<std::pair<std::size_t, bool>> stack{{root, false}};
  parent[root] = root;
  while (!stack.empty()) {
    auto [v, expanded] = stack.back();
    stack.pop_back();
    std::vector<std::size_t> children;
    for (auto w : adj[v]) {
      if (w != parent[v]) children.push_back(w);
    }
    if (!expanded) {
      stack.emplace_back(v, true);
      for (auto it = children.rbegin(); it != children.rend(); ++it) {
        parent[*it] = v;
        stack.emplace_back(*it, false);
      }
      continue;
    }
    rg.regions.push_back({v});
    leaf_region[v] = rg.regions.size() - 1;
    if (children.empty()) {
      subtree_region[v] = leaf_region[v];
      continue;
    }
    Partition part;
    std::vector<std::size_t> scope{v};
    part.children.push_back(leaf_region[v]);
    for (auto c : children) {
      part.children.push_back(subtree_region[c]);
      const auto& s = rg.regions[subtree_region[c]];
      scope.insert(scope.end(), s.begin(), s.end());
    }
    std::ranges::sort(scope);
    rg.regions.push_back(std::move(scope));
    part.parent = rg.regions.size() - 1;
    subtree_region[v] = part.parent;
    rg.partitions.push_back(std::move(part));
  }
  rg.root = subtree_region[root];
  return rg;
}

std::vector<std::string> RegionGraph::check(std::size_t n_variables) const {
  std::vector<std::string> out;
  std::vector<std::size_t> parent_count(regions.size(), 0);
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    const auto& part = partitions[p];
    std::vector<std::size_t> merged;
    for (auto c : part.children) {
      if (c >= part.parent) out.push_back("partition " + std::to_string(p) + " child does not precede parent");
      ++parent_count.at(c);
      merged.insert(merged.end(), regions.at(c).begin(), regions.at(c).end());
    }
    std::ranges::sort(merged);
    if (std::adjacent_find(merged.begin(), merged.end()) != merged.end()) {
      out.push_back("partition " + std::to_string(p) + " has overlapping child scopes");
    }
    if (merged != regions.at(part.parent)) out.push_back("partition " + std::to_string(p) + " does not cover its parent");
  }
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const std::size_t want = r == root ? 0 : 1;
    if (parent_count[r] != want) out.push_back("region " + std::to_string(r) + " has " + std::to_string(parent_count[r]) + " parents");
  }
  std::vector<std::size_t> all(n_variables);
  std::iota(all.begin(), all.end(), 0);
  if (regions.empty() || regions.at(root) != all) out.push_back("root region is not the full scope");
  return out;
}

nlohmann::json RegionGraph::to_json() const {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : partitions) parts.push_back({{"parent", p.parent}, {"children", p.children}});
  return {{"regions", regions}, {"partitions", parts}, {"root", root}};
}

std::pair<std::vector<VariableKind>, std::vector<std::size_t>> variable_bindings(const Schema& schema) {
  std::vector<VariableKind> kinds;
  std::vector<std::size_t> cards;
  for (const auto& col : schema) {
    kinds.push_back(col.is_categorical() ? VariableKind::categorical : VariableKind::numerical);
    cards.push_back(col.is_categorical() ? col.cardinality() : 0);
  }
  return {kinds, cards};
}

namespace {

std::size_t add_input(CircuitBuilder& builder, const std::vector<VariableKind>& kinds, std::size_t v,
                      std::size_t width) {
  return kinds[v] == VariableKind::categorical ? builder.add_categorical(v, width)
                                               : builder.add_gaussian(v, width);
}

}  // namespace

Circuit build_circuit(const RegionGraph& rg, const Schema& schema, const BuildConfig& cfg) {
  if (cfg.units < 1) fail(ErrorKind::domain, "K must be at least 1");
  if (auto problems = rg.check(schema.size()); !problems.empty()) fail(ErrorKind::graph, problems.front());
  auto [kinds, cards] = variable_bindings(schema);
  const std::size_t K = cfg.units;

  // Parameter count before allocating anything.
  double count = K;  // root row
  for (const auto& region : rg.regions) {
    if (region.size() == 1) {
      const auto v = region[0];
      count += static_cast<double>(K) * (kinds[v] == VariableKind::categorical ? static_cast<double>(cards[v]) : 2.0);
    }
  }
  for (const auto& part : rg.partitions) count += static_cast<double>(K * K * part.children.size());
  if (count > static_cast<double>(cfg.max_params)) {
    fail(ErrorKind::budget, "circuit would have " + std::to_string(static_cast<std::size_t>(count)) +
                                " parameters, above the cap of " + std::to_string(cfg.max_params));
  }

  std::vector<const Partition*> partition_of(rg.regions.size(), nullptr);
  for (const auto& part : rg.partitions) partition_of[part.parent] = &part;

  CircuitBuilder builder(kinds, cards);
  std::vector<std::size_t> layer_of(rg.regions.size());
  for (std::size_t r = 0; r < rg.regions.size(); ++r) {
    if (partition_of[r] == nullptr) {
      layer_of[r] = add_input(builder, kinds, rg.regions[r].at(0), K);
      continue;
    }
    std::vector<CpChild> children;
    for (auto c : partition_of[r]->children) children.push_back({layer_of[c], true});
    layer_of[r] = builder.add_cp(std::move(children), K);
  }
  builder.add_cp({{layer_of[rg.root], true}}, 1);
  Circuit circuit = std::move(builder).finish();
  initialize_params(circuit, cfg.seed);
  return circuit;
}

void initialize_params(Circuit& circuit, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < circuit.n_layers(); ++l) {
    const Layer& layer = circuit.layer(l);
    auto p = circuit.params().subspan(layer.offset, layer.n_params);
    switch (layer.kind) {
      case LayerKind::input_gaussian:
        for (std::size_t k = 0; k < layer.width; ++k) {
          p[k] = rng.normal();
          p[layer.width + k] = 0.0;
        }
        break;
      case LayerKind::input_categorical:
        for (auto& v : p) v = rng.uniform(-1.0, 1.0);
        break;
      case LayerKind::cp_sum_product:
        for (auto& v : p) v = rng.uniform(-0.01, 0.01);
        break;
    }
  }
}

Circuit build_ff(const Schema& schema) {
  if (schema.empty()) fail(ErrorKind::domain, "schema has no columns");
  auto [kinds, cards] = variable_bindings(schema);
  CircuitBuilder builder(kinds, cards);
  std::vector<CpChild> children;
  for (std::size_t v = 0; v < schema.size(); ++v) children.push_back({add_input(builder, kinds, v, 1), false});
  builder.add_cp(std::move(children), 1);
  return std::move(builder).finish();
}

void fit_ff(Circuit& ff, const Matrix& x, const MaskMatrix& mask, double alpha) {
  for (std::size_t l = 0; l < ff.n_layers(); ++l) {
    const Layer& layer = ff.layer(l);
    if (layer.kind == LayerKind::cp_sum_product) continue;
    const auto v = static_cast<Eigen::Index>(layer.variable);
    auto p = ff.block(l);
    if (layer.kind == LayerKind::input_gaussian) {
      double n = 0.0, sum = 0.0, sq = 0.0;
      for (Eigen::Index b = 0; b < x.rows(); ++b) {
        if (mask(b, v) == 0) continue;
        n += 1.0;
        sum += x(b, v);
      }
      const double mean = n > 0.0 ? sum / n : 0.0;
      for (Eigen::Index b = 0; b < x.rows(); ++b) {
        if (mask(b, v) != 0) sq += (x(b, v) - mean) * (x(b, v) - mean);
      }
      const double var = n > 0.0 ? sq / n : 1.0;
      p.row(0).setConstant(mean);
      p.row(1).setConstant(var > 0.0 ? std::clamp(0.5 * std::log(var), kMinLogStd, kMaxLogStd) : kMinLogStd);
    } else {
      std::vector<double> counts(layer.n_categories, alpha);
      double total = alpha * static_cast<double>(layer.n_categories);
      for (Eigen::Index b = 0; b < x.rows(); ++b) {
        if (mask(b, v) == 0) continue;
        counts.at(static_cast<std::size_t>(x(b, v))) += 1.0;
        total += 1.0;
      }
      for (std::size_t c = 0; c < counts.size(); ++c) {
        const double logp = counts[c] > 0.0 ? std::log(counts[c] / total) : -1e300;
        p.col(static_cast<Eigen::Index>(c)).setConstant(logp);
      }
    }
  }
}

Circuit build_sm(const Schema& schema, std::size_t units, std::uint64_t seed) {
  if (units < 1) fail(ErrorKind::domain, "K must be at least 1");
  if (schema.empty()) fail(ErrorKind::domain, "schema has no columns");
  auto [kinds, cards] = variable_bindings(schema);
  CircuitBuilder builder(kinds, cards);
  std::vector<CpChild> children;
  for (std::size_t v = 0; v < schema.size(); ++v) children.push_back({add_input(builder, kinds, v, units), false});
  const auto components = builder.add_cp(std::move(children), units);
  builder.add_cp({{components, true}}, 1);
  Circuit circuit = std::move(builder).finish();
  initialize_params(circuit, seed);
  return circuit;
}

Circuit build_tabpc(const Table& data, const BuildConfig& cfg, RegionGraph* rg_out) {
  const std::size_t D = data.n_cols();
  if (D == 0) fail(ErrorKind::domain, "table has no columns");
  std::vector<Edge> tree;
  std::size_t root = 0;
  if (D > 1) {
    tree = chow_liu_tree(estimate_pairwise_mi(data, cfg.mi_bins));
    root = jordan_center(tree, D);
  }
  RegionGraph rg = compile_region_graph(tree, root, D);
  Circuit circuit = build_circuit(rg, data.schema(), cfg);
  if (rg_out != nullptr) *rg_out = std::move(rg);
  return circuit;
}

}  // namespace tabpc
