#include "tabpc/pipeline.hpp"

#include <chrono>

#include "tabpc/error.hpp"

namespace tabpc {

ModelKind model_kind_from(const std::string& name) {
  if (name == "ff") return ModelKind::ff;
  if (name == "sm") return ModelKind::sm;
  if (name == "tabpc") return ModelKind::tabpc;
  fail(ErrorKind::usage, "unknown model kind '" + name + "' (expected ff, sm or tabpc)");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ff: return "ff";
    case ModelKind::sm: return "sm";
    case ModelKind::tabpc: return "tabpc";
  }
  return "";
}

Batch encode_batch(const PreprocessPlan& plan, const Table& raw, bool dequantize, std::uint64_t seed) {
  EncodedTable enc = apply_plan(plan, raw, {dequantize, seed});
  return {to_matrix(enc.table), std::move(enc.mask)};
}

FitResult fit_model(const Table& train, const Table& val, const FitOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  PlanOptions plan_options = options.plan;
  plan_options.seed = options.train.seed;
  PreprocessPlan plan = fit_plan(train, plan_options);
  const Batch tr = encode_batch(plan, train, plan_options.dequantize, options.train.seed ^ 0x7472u);
  const Batch va = encode_batch(plan, val, plan_options.dequantize, options.train.seed ^ 0x7661u);

  FitResult result;
  Circuit circuit;
  switch (options.kind) {
    case ModelKind::ff:
      circuit = build_ff(plan.encoded_schema);
      fit_ff(circuit, tr.x, tr.mask);
      break;
    case ModelKind::sm:
      circuit = build_sm(plan.encoded_schema, options.build.units, options.build.seed);
      break;
    case ModelKind::tabpc: {
      BuildConfig build = options.build;
      circuit = build_tabpc(from_matrix(plan.encoded_schema, tr.x), build);
      break;
    }
  }
  if (options.kind != ModelKind::ff) {
    TrainResult trained = fit(std::move(circuit), tr, va, options.train);
    circuit = std::move(trained.circuit);
    result.history = std::move(trained.history);
  }
  circuit.set_fingerprint(plan.fingerprint);
  result.val_bpd = bpd(circuit, va);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.bundle.kind = to_string(options.kind);
  result.bundle.plan = std::move(plan);
  result.bundle.circuit = std::move(circuit);
  result.bundle.meta = {{"units", options.build.units},
                        {"train", options.train.to_json()},
                        {"val_bpd", result.val_bpd},
                        {"n_train", train.n_rows()},
                        {"n_val", val.n_rows()}};
  return result;
}

}  // namespace tabpc
