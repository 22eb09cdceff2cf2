#pragma once

#include <string>

#include "tabpc/model.hpp"
#include "tabpc/preprocess.hpp"
#include "tabpc/structure.hpp"
#include "tabpc/train.hpp"

namespace tabpc {

enum class ModelKind { ff, sm, tabpc };

ModelKind model_kind_from(const std::string& name);
std::string to_string(ModelKind kind);

struct FitOptions {
  ModelKind kind = ModelKind::tabpc;
  BuildConfig build;
  TrainConfig train;
  PlanOptions plan;
};

struct FitResult {
  ModelBundle bundle;
  TrainHistory history;  // empty for FF (closed form)
  double val_bpd = 0.0;
  double seconds = 0.0;
};

/// Raw train/validation tables to a fitted bundle: preprocessing plan,
/// circuit construction, then closed-form (FF) or gradient training.
FitResult fit_model(const Table& train, const Table& val, const FitOptions& options);

/// Raw rows to circuit-space rows and masks under a bundle's plan.
Batch encode_batch(const PreprocessPlan& plan, const Table& raw, bool dequantize, std::uint64_t seed);

}  // namespace tabpc
