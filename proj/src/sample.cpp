#include "tabpc/sample.hpp"

#include <cmath>

#include "tabpc/error.hpp"
#include "tabpc/parallel.hpp"
#include "tabpc/preprocess.hpp"
#include "tabpc/random.hpp"

namespace tabpc {

namespace {

constexpr std::size_t kRowChunk = 256;

// Parameters the top-down pass reads, resolved once per call.
struct SamplerTables {
  std::vector<std::vector<Matrix>> weights;  // [layer][child], empty for pass-through
  std::vector<Matrix> probs;                 // categorical inputs: K x C
  std::vector<Eigen::VectorXd> means, stds;  // gaussian inputs

  explicit SamplerTables(const Circuit& circuit) {
    circuit.parents();  // sampling needs a tree of layers
    const auto L = circuit.n_layers();
    weights.resize(L);
    probs.resize(L);
    means.resize(L);
    stds.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      const Layer& layer = circuit.layer(l);
      switch (layer.kind) {
        case LayerKind::cp_sum_product:
          weights[l].resize(layer.children.size());
          for (std::size_t i = 0; i < layer.children.size(); ++i) {
            if (layer.children[i].mixing) weights[l][i] = circuit.weights(l, i);
          }
          break;
        case LayerKind::input_categorical: {
          const auto logits = circuit.block(l);
          probs[l] = Matrix(logits.rows(), logits.cols());
          for (Eigen::Index k = 0; k < logits.rows(); ++k) {
            const auto shifted = (logits.row(k).array() - logits.row(k).maxCoeff()).exp();
            probs[l].row(k) = shifted / shifted.sum();
          }
          break;
        }
        case LayerKind::input_gaussian: {
          const auto p = circuit.block(l);
          means[l] = p.row(0).transpose();
          stds[l] = p.row(1).transpose().array().max(kMinLogStd).min(kMaxLogStd).exp();
          break;
        }
      }
    }
  }
};

// Top-down pass for one row.  `values` (forward log values of this row's
// chunk) and `mask` are null for unconditional sampling.
void sample_row(const Circuit& circuit, const SamplerTables& tables, const ForwardPass* values,
                Eigen::Index local, const MaskMatrix* mask, Eigen::Index row, Rng& rng,
                std::vector<std::size_t>& selected, Eigen::Ref<Eigen::RowVectorXd> out) {
  selected.assign(circuit.n_layers(), 0);
  std::vector<double> w;
  for (std::size_t l = circuit.n_layers(); l-- > 0;) {
    const Layer& layer = circuit.layer(l);
    const std::size_t k = selected[l];
    if (layer.kind == LayerKind::cp_sum_product) {
      for (std::size_t i = 0; i < layer.children.size(); ++i) {
        const auto& child = layer.children[i];
        if (!child.mixing) {
          selected[child.layer] = k;
          continue;
        }
        const Matrix& W = tables.weights[l][i];
        w.resize(static_cast<std::size_t>(W.cols()));
        if (values == nullptr) {
          for (Eigen::Index j = 0; j < W.cols(); ++j) w[static_cast<std::size_t>(j)] = W(static_cast<Eigen::Index>(k), j);
        } else {
          const auto c = values->values[child.layer].row(local);
          const double m = c.maxCoeff();
          for (Eigen::Index j = 0; j < W.cols(); ++j) {
            w[static_cast<std::size_t>(j)] = W(static_cast<Eigen::Index>(k), j) * std::exp(c(j) - m);
          }
        }
        selected[child.layer] = rng.categorical(w);
      }
      continue;
    }
    const auto v = static_cast<Eigen::Index>(layer.variable);
    if (mask != nullptr && (*mask)(row, v) != 0) continue;  // evidence already in `out`
    const auto ku = static_cast<Eigen::Index>(k);
    if (layer.kind == LayerKind::input_gaussian) {
      out(v) = tables.means[l](ku) + tables.stds[l](ku) * rng.normal();
    } else {
      const auto p = tables.probs[l].row(ku);
      out(v) = static_cast<double>(rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))));
    }
  }
}

}  // namespace

Matrix ancestral_sample(const Circuit& circuit, std::size_t n, std::uint64_t seed) {
  const SamplerTables tables(circuit);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(circuit.n_variables()));
  parallel_chunks(n, kRowChunk, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<std::size_t> selected;
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = Rng::stream(seed, r);
      const auto row = static_cast<Eigen::Index>(r);
      sample_row(circuit, tables, nullptr, 0, nullptr, row, rng, selected, out.row(row));
    }
  });
  return out;
}

Matrix conditional_sample(const Circuit& circuit, const Matrix& evidence, const MaskMatrix& mask,
                          std::uint64_t seed) {
  if (evidence.rows() != mask.rows() || evidence.cols() != mask.cols() ||
      evidence.cols() != static_cast<Eigen::Index>(circuit.n_variables())) {
    fail(ErrorKind::domain, "evidence and mask shapes do not match the circuit");
  }
  const SamplerTables tables(circuit);
  Matrix out = evidence;
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      if (mask(r, c) == 0) out(r, c) = 0.0;  // placeholder, never read
    }
  }
  const auto n = static_cast<std::size_t>(evidence.rows());
  parallel_chunks(n, kRowChunk, [&](std::size_t begin, std::size_t end, std::size_t) {
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    const ForwardPass fp = forward(circuit, out.middleRows(b, len), mask.middleRows(b, len));
    std::vector<std::size_t> selected;
    for (Eigen::Index i = 0; i < len; ++i) {
      const double root = fp.values.back()(i, 0);
      if (!(root >= kImpossibleLogEvidence)) {
        fail(ErrorKind::impossible_evidence,
             "evidence in row " + std::to_string(begin + static_cast<std::size_t>(i)) + " has zero probability");
      }
      Rng rng = Rng::stream(seed, begin + static_cast<std::size_t>(i));
      sample_row(circuit, tables, &fp, i, &mask, b + i, rng, selected, out.row(b + i));
    }
  });
  return out;
}

Eigen::RowVectorXd conditional_sample(const Circuit& circuit, std::span<const double> evidence,
                                      std::span<const std::uint8_t> mask, std::uint64_t seed) {
  const auto D = static_cast<Eigen::Index>(circuit.n_variables());
  if (evidence.size() != circuit.n_variables() || mask.size() != circuit.n_variables()) {
    fail(ErrorKind::domain, "evidence row length does not match the circuit");
  }
  const Matrix x = Eigen::Map<const Matrix>(evidence.data(), 1, D);
  const MaskMatrix m = Eigen::Map<const MaskMatrix>(mask.data(), 1, D);
  return conditional_sample(circuit, x, m, seed).row(0);
}

Table generate_dataset(const ModelBundle& bundle, const SampleRequest& request) {
  const auto& plan = bundle.plan;
  if (bundle.circuit.fingerprint() != plan.fingerprint ||
      bundle.circuit.n_variables() != plan.n_encoded()) {
    fail(ErrorKind::incompatible_model, "circuit and preprocessing plan do not belong together");
  }
  if (!request.evidence) {
    const Matrix x = ancestral_sample(bundle.circuit, request.n_rows, request.seed);
    return invert_plan(plan, from_matrix(plan.encoded_schema, x));
  }

  const Table& raw = *request.evidence;
  const auto n = static_cast<Eigen::Index>(raw.n_rows());
  const auto n_raw = static_cast<Eigen::Index>(raw.n_cols());
  MaskMatrix raw_mask = request.evidence_mask ? *request.evidence_mask : all_observed(n, n_raw);
  if (raw_mask.rows() != n || raw_mask.cols() != n_raw) {
    fail(ErrorKind::domain, "evidence mask shape does not match the evidence table");
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n_raw; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      const bool missing = raw.column_schema(cs).is_categorical()
                               ? raw.codes(cs)[static_cast<std::size_t>(r)] == kMissingCode
                               : is_missing(raw.values(cs)[static_cast<std::size_t>(r)]);
      if (missing) raw_mask(r, c) = 0;
    }
  }
  const EncodedTable enc = apply_plan(plan, raw);
  const MaskMatrix mask = encode_evidence_mask(plan, raw_mask, enc.mask);
  const Matrix x = conditional_sample(bundle.circuit, to_matrix(enc.table), mask, request.seed);
  const Table sampled = invert_plan(plan, from_matrix(plan.encoded_schema, x));

  std::vector<Column> columns = sampled.columns();
  for (std::size_t c = 0; c < raw.n_cols(); ++c) {
    for (std::size_t r = 0; r < raw.n_rows(); ++r) {
      if (raw_mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) == 0) continue;
      if (raw.column_schema(c).is_categorical()) {
        columns[c].codes[r] = raw.codes(c)[r];
      } else {
        columns[c].values[r] = raw.values(c)[r];
      }
    }
  }
  return Table(plan.raw_schema, std::move(columns));
}

}  // namespace tabpc
