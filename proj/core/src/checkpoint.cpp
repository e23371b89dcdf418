#include "fem/model/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace fem::model {

namespace {

using nlohmann::json;

json mat_to_json(const nd::Mat& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.v}};
}

nd::Mat mat_from_json(const json& j) {
  nd::Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& data = j.at("data");
  if (data.size() != m.size()) throw nd::NdError("checkpoint: weight array size mismatch");
  for (size_t i = 0; i < m.size(); ++i) m.v[i] = data[i].get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const EnergyModel& model, const std::string& path) {
  const EnergyModelConfig& cfg = model.config();
  json j;
  j["format"] = "fem-energy-model";
  j["version"] = 1;
  j["input_dim"] = cfg.input_dim;
  j["parent_cards"] = cfg.parent_cards;
  j["proto_dim"] = cfg.proto_dim;
  j["hidden"] = cfg.hidden;
  j["sigma_embed_dim"] = cfg.sigma_embed_dim;
  j["sigma_levels"] = cfg.schedule.levels;
  json extent = json::array();
  for (const auto& [lo, hi] : model.data_extent) extent.push_back({lo, hi});
  j["data_extent"] = extent;
  json tables = json::array();
  for (const nd::Mat& t : model.prototype_tables()) tables.push_back(mat_to_json(t));
  j["tables"] = tables;
  json layers = json::array();
  for (const nd::LinearLayer& l : model.layers()) {
    layers.push_back(json{{"w", mat_to_json(l.w)}, {"b", mat_to_json(l.b)}});
  }
  j["layers"] = layers;

  std::ofstream out(path);
  if (!out) throw nd::NdError("checkpoint: cannot write " + path);
  out << j.dump(1) << '\n';
}

EnergyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nd::NdError("checkpoint: cannot read " + path);
  json j;
  in >> j;
  if (j.value("format", "") != std::string("fem-energy-model")) {
    throw nd::NdError("checkpoint: unrecognized format tag");
  }
  if (j.value("version", -1) != 1) throw nd::NdError("checkpoint: unsupported version");

  EnergyModelConfig cfg;
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.parent_cards = j.at("parent_cards").get<std::vector<int>>();
  cfg.proto_dim = j.at("proto_dim").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.sigma_embed_dim = j.at("sigma_embed_dim").get<int>();
  cfg.schedule.levels = j.at("sigma_levels").get<std::vector<double>>();

  EnergyModel model(cfg, 0);
  auto& tables = model.prototype_tables();
  const json& jt = j.at("tables");
  if (jt.size() != tables.size()) throw nd::NdError("checkpoint: table count mismatch");
  for (size_t i = 0; i < tables.size(); ++i) {
    nd::Mat t = mat_from_json(jt[i]);
    if (!t.same_shape(tables[i])) throw nd::NdError("checkpoint: table shape mismatch");
    tables[i] = std::move(t);
  }
  auto& layers = model.layers();
  const json& jl = j.at("layers");
  if (jl.size() != layers.size()) throw nd::NdError("checkpoint: layer count mismatch");
  for (size_t i = 0; i < layers.size(); ++i) {
    nd::Mat w = mat_from_json(jl[i].at("w"));
    nd::Mat b = mat_from_json(jl[i].at("b"));
    if (!w.same_shape(layers[i].w) || !b.same_shape(layers[i].b)) {
      throw nd::NdError("checkpoint: layer shape mismatch");
    }
    layers[i].w = std::move(w);
    layers[i].b = std::move(b);
  }
  for (const auto& e : j.at("data_extent")) {
    model.data_extent.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return model;
}

}  // namespace fem::model
