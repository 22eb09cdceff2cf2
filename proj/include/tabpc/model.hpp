#pragma once

#include <string>

#include "json.hpp"

#include "tabpc/circuit.hpp"
#include "tabpc/preprocess.hpp"

namespace tabpc {

/// Everything needed to sample raw rows without the training data.
struct ModelBundle {
  std::string kind;  // ff, sm or tabpc
  PreprocessPlan plan;
  Circuit circuit;
  nlohmann::json meta = nlohmann::json::object();
};

/// Topology only (no parameters).
nlohmann::json circuit_topology(const Circuit& circuit);
Circuit circuit_from_topology(const nlohmann::json& doc);

std::string encode_base64(const std::string& bytes);
std::string decode_base64(const std::string& text);

/// Model file: JSON with the plan, the circuit topology, the schema
/// fingerprint and the parameters as base64 little-endian float64.
nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& doc);
void save_model(const std::string& path, const ModelBundle& bundle);
ModelBundle load_model(const std::string& path);

}  // namespace tabpc
