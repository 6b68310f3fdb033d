#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ickan/network.hpp"

namespace ickan {

namespace {
using nlohmann::json;

json spec_to_json(const NetworkSpec& s) {
  json j;
  j["family"] = family_name(s.family);
  j["hidden"] = s.hidden;
  j["P"] = s.cells;
  j["adapt"] = s.adapt;
  j["domain_lo"] = s.domain.lo;
  j["domain_hi"] = s.domain.hi;
  j["nx"] = s.nx;
  j["ny"] = s.ny;
  j["act"] = s.act == Act::relu ? "relu" : "celu";
  j["extrapolate"] = s.extrapolate;
  return j;
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec s;
  s.family = family_from_name(j.at("family").get<std::string>());
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.cells = j.at("P").get<int>();
  s.adapt = j.at("adapt").get<bool>();
  s.domain = Hypercube(j.at("domain_lo").get<std::vector<double>>(),
                       j.at("domain_hi").get<std::vector<double>>());
  s.nx = j.at("nx").get<int>();
  s.ny = j.at("ny").get<int>();
  s.act = j.at("act").get<std::string>() == "celu" ? Act::celu : Act::relu;
  s.extrapolate = j.at("extrapolate").get<bool>();
  return s;
}

}  // namespace

std::string checkpoint_to_string(const Model& model) {
  json j = spec_to_json(model.spec());
  json params = json::object();
  for (const auto& p : model.params().all()) params[p.name] = p.value;
  j["params"] = params;
  return j.dump(1);
}

Model checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: parse error: ") + e.what());
  }
  NetworkSpec spec = spec_from_json(j);
  Model m = Model::make(spec, 0);
  const json& params = j.at("params");
  for (auto& p : m.params().all()) {
    auto it = params.find(p.name);
    if (it == params.end())
      throw std::runtime_error("checkpoint: missing parameter " + p.name);
    std::vector<double> v = it->get<std::vector<double>>();
    if (v.size() != p.value.size())
      throw std::runtime_error("checkpoint: size mismatch for " + p.name);
    p.value = std::move(v);
  }
  m.refresh_boxes();
  return m;
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out << checkpoint_to_string(model);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace ickan
