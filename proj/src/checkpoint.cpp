#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kanagg/errors.hpp"
#include "kanagg/network.hpp"

namespace kanagg {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "kanagg-checkpoint";
constexpr int kFormatVersion = 1;

json config_to_json(const NetworkConfig& c) {
  json aggs = json::array();
  for (Aggregator a : c.aggregators) aggs.push_back(std::string(to_string(a)));
  return {{"widths", c.widths},
          {"aggregators", aggs},
          {"layer_norm", c.layer_norm},
          {"grid_size", c.grid_size},
          {"degree", c.degree},
          {"range_lo", c.range_lo},
          {"range_hi", c.range_hi},
          {"seed", c.seed},
          {"init_coeff_std", c.init_coeff_std},
          {"layer_norm_eps", c.layer_norm_eps}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  for (const auto& a : j.at("aggregators")) c.aggregators.push_back(parse_aggregator(a.get<std::string>()));
  c.layer_norm = j.at("layer_norm").get<bool>();
  c.grid_size = j.at("grid_size").get<int>();
  c.degree = j.at("degree").get<int>();
  c.range_lo = j.at("range_lo").get<double>();
  c.range_hi = j.at("range_hi").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.init_coeff_std = j.at("init_coeff_std").get<double>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

}  // namespace

std::string checkpoint_to_string(const Network& net) {
  json layers = json::array();
  for (const KanLayer& layer : net.layers) {
    json coeffs = json::array();
    std::vector<double> w_base;
    std::vector<double> w_spline;
    for (const EdgeActivation& e : layer.edges) {
      coeffs.push_back(e.coeffs);
      w_base.push_back(e.w_base);
      w_spline.push_back(e.w_spline);
    }
    layers.push_back({{"n_in", layer.n_in},
                      {"n_out", layer.n_out},
                      {"aggregator", std::string(to_string(layer.aggregator))},
                      {"coeffs", coeffs},
                      {"w_base", w_base},
                      {"w_spline", w_spline}});
  }
  json norms = json::array();
  for (const LayerNormParams& n : net.norms) {
    norms.push_back({{"gain", n.gain}, {"bias", n.bias}, {"eps", n.eps}});
  }
  json doc = {{"format", kFormat},
              {"version", kFormatVersion},
              {"config", config_to_json(net.config)},
              {"layers", layers},
              {"layer_norm", norms}};
  return doc.dump(1);
}

Network checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != kFormat || doc.at("version") != kFormatVersion) {
      throw std::runtime_error("checkpoint: unsupported format or version");
    }
    Network net = build_network(config_from_json(doc.at("config")));
    const json& layers = doc.at("layers");
    if (layers.size() != net.layers.size()) throw ConfigError("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      KanLayer& layer = net.layers[l];
      const json& jl = layers[l];
      layer.aggregator = parse_aggregator(jl.at("aggregator").get<std::string>());
      const auto coeffs = jl.at("coeffs").get<std::vector<std::vector<double>>>();
      const auto w_base = jl.at("w_base").get<std::vector<double>>();
      const auto w_spline = jl.at("w_spline").get<std::vector<double>>();
      if (coeffs.size() != layer.edges.size() || w_base.size() != layer.edges.size() ||
          w_spline.size() != layer.edges.size()) {
        throw ConfigError("checkpoint: edge count mismatch in layer " + std::to_string(l));
      }
      for (std::size_t i = 0; i < layer.edges.size(); ++i) {
        if (coeffs[i].size() != net.grid.basis_count()) {
          throw ConfigError("checkpoint: coefficient count mismatch");
        }
        layer.edges[i] = {coeffs[i], w_base[i], w_spline[i]};
      }
    }
    const json& norms = doc.at("layer_norm");
    if (norms.size() != net.norms.size()) throw ConfigError("checkpoint: layer_norm count mismatch");
    for (std::size_t l = 0; l < net.norms.size(); ++l) {
      LayerNormParams p{norms[l].at("gain").get<std::vector<double>>(),
                        norms[l].at("bias").get<std::vector<double>>(),
                        norms[l].at("eps").get<double>()};
      if (p.gain.size() != net.norms[l].gain.size() || p.bias.size() != net.norms[l].bias.size()) {
        throw ConfigError("checkpoint: layer_norm width mismatch");
      }
      net.norms[l] = std::move(p);
    }
    return net;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(net) << '\n';
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace kanagg
