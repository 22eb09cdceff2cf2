#include "tabpc/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tabpc/error.hpp"

namespace tabpc {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::input_gaussian: return "input_gaussian";
    case LayerKind::input_categorical: return "input_categorical";
    case LayerKind::cp_sum_product: return "cp_sum_product";
  }
  return "";
}

LayerKind layer_kind_from(const std::string& name) {
  if (name == "input_gaussian") return LayerKind::input_gaussian;
  if (name == "input_categorical") return LayerKind::input_categorical;
  if (name == "cp_sum_product") return LayerKind::cp_sum_product;
  fail(ErrorKind::parse, "unknown layer kind '" + name + "'");
}

}  // namespace

std::string encode_base64(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string decode_base64(const std::string& text) {
  int lookup[256];
  std::fill(std::begin(lookup), std::end(lookup), -1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=' || ch == '\n' || ch == '\r') continue;
    const int v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0) fail(ErrorKind::parse, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  return out;
}

nlohmann::json circuit_topology(const Circuit& circuit) {
  nlohmann::json vars = nlohmann::json::array();
  for (std::size_t v = 0; v < circuit.n_variables(); ++v) {
    const bool cat = circuit.variable_kinds()[v] == VariableKind::categorical;
    vars.push_back({{"kind", cat ? "categorical" : "numerical"}, {"cardinality", circuit.cardinalities()[v]}});
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : circuit.layers()) {
    nlohmann::json j{{"kind", layer_kind_name(layer.kind)}, {"width", layer.width}, {"scope", layer.scope}};
    if (layer.kind == LayerKind::cp_sum_product) {
      nlohmann::json children = nlohmann::json::array();
      for (const auto& c : layer.children) children.push_back({{"layer", c.layer}, {"mixing", c.mixing}});
      j["children"] = std::move(children);
      j["softmax_weights"] = layer.softmax_weights;
    } else {
      j["variable"] = layer.variable;
    }
    layers.push_back(std::move(j));
  }
  return {{"variables", vars}, {"layers", layers}, {"n_params", circuit.n_params()}};
}

Circuit circuit_from_topology(const nlohmann::json& doc) {
  try {
    std::vector<VariableKind> kinds;
    std::vector<std::size_t> cards;
    for (const auto& v : doc.at("variables")) {
      kinds.push_back(v.at("kind").get<std::string>() == "categorical" ? VariableKind::categorical
                                                                        : VariableKind::numerical);
      cards.push_back(v.at("cardinality").get<std::size_t>());
    }
    CircuitBuilder builder(kinds, cards);
    for (const auto& j : doc.at("layers")) {
      const auto kind = layer_kind_from(j.at("kind").get<std::string>());
      const auto width = j.at("width").get<std::size_t>();
      if (kind == LayerKind::input_gaussian) {
        builder.add_gaussian(j.at("variable").get<std::size_t>(), width);
      } else if (kind == LayerKind::input_categorical) {
        builder.add_categorical(j.at("variable").get<std::size_t>(), width);
      } else {
        std::vector<CpChild> children;
        for (const auto& c : j.at("children")) children.push_back({c.at("layer").get<std::size_t>(), c.at("mixing").get<bool>()});
        builder.add_cp(std::move(children), width, j.value("softmax_weights", true));
      }
    }
    Circuit circuit = std::move(builder).finish();
    if (circuit.n_params() != doc.at("n_params").get<std::size_t>()) {
      fail(ErrorKind::parse, "circuit topology parameter count mismatch");
    }
    return circuit;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed circuit topology: ") + e.what());
  }
}

nlohmann::json bundle_to_json(const ModelBundle& bundle) {
  static_assert(std::endian::native == std::endian::little, "model files store little-endian doubles");
  const auto params = bundle.circuit.params();
  std::string bytes(params.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), params.data(), bytes.size());
  return {{"format", "tabpc-model"},
          {"version", 1},
          {"kind", bundle.kind},
          {"schema_fingerprint", bundle.plan.fingerprint},
          {"plan", bundle.plan.to_json()},
          {"circuit", circuit_topology(bundle.circuit)},
          {"params_base64", encode_base64(bytes)},
          {"meta", bundle.meta}};
}

ModelBundle bundle_from_json(const nlohmann::json& doc) {
  ModelBundle bundle;
  try {
    if (doc.value("format", "") != "tabpc-model") fail(ErrorKind::parse, "not a model file");
    bundle.kind = doc.at("kind").get<std::string>();
    bundle.plan = PreprocessPlan::from_json(doc.at("plan"));
    bundle.circuit = circuit_from_topology(doc.at("circuit"));
    const std::string bytes = decode_base64(doc.at("params_base64").get<std::string>());
    if (bytes.size() != bundle.circuit.n_params() * sizeof(double)) {
      fail(ErrorKind::parse, "parameter blob has the wrong length");
    }
    std::vector<double> params(bundle.circuit.n_params());
    std::memcpy(params.data(), bytes.data(), bytes.size());
    bundle.circuit.set_params(params);
    bundle.circuit.set_fingerprint(doc.at("schema_fingerprint").get<std::string>());
    bundle.meta = doc.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed model file: ") + e.what());
  }
  return bundle;
}

void save_model(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out << bundle_to_json(bundle).dump() << '\n';
  if (!out) fail(ErrorKind::io, "failed writing '" + path + "'");
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open model file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "'" + path + "' is not valid JSON: " + e.what());
  }
  return bundle_from_json(doc);
}

}  // namespace tabpc
