#include "kanagg/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "kanagg/errors.hpp"

namespace kanagg {

void NetworkConfig::validate() const {
  if (widths.size() < 2) throw ConfigError("network needs at least an input and an output width");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("network widths must all be at least 1");
  }
  if (aggregators.size() != widths.size() - 1) {
    throw ConfigError("expected " + std::to_string(widths.size() - 1) +
                      " aggregators (one per layer), got " + std::to_string(aggregators.size()));
  }
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  if (!(init_coeff_std >= 0.0)) throw ConfigError("init_coeff_std must be non-negative");
  try {
    (void)make_grid(range_lo, range_hi, grid_size, degree);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Network build_network(const NetworkConfig& config) {
  config.validate();
  Network net;
  net.config = config;
  net.grid = make_grid(config.range_lo, config.range_hi, config.grid_size, config.degree);
  const std::size_t nb = net.grid.basis_count();

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> coeff_dist(0.0, config.init_coeff_std);

  const std::size_t n_layers = config.widths.size() - 1;
  net.layers.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    KanLayer& layer = net.layers[l];
    layer.n_in = config.widths[l];
    layer.n_out = config.widths[l + 1];
    layer.aggregator = config.aggregators[l];
    layer.edges.resize(layer.n_in * layer.n_out);
    for (EdgeActivation& e : layer.edges) {
      e.coeffs.resize(nb);
      for (double& c : e.coeffs) c = config.init_coeff_std > 0.0 ? coeff_dist(rng) : 0.0;
      e.w_base = 1.0;
      e.w_spline = 1.0;
    }
  }
  if (config.layer_norm) {
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      const std::size_t width = config.widths[l + 1];
      net.norms.push_back({std::vector<double>(width, 1.0), std::vector<double>(width, 0.0),
                           config.layer_norm_eps});
    }
  }
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const KanLayer& layer : layers) count += layer.edges.size() * (grid.basis_count() + 2);
  for (const LayerNormParams& n : norms) count += n.gain.size() + n.bias.size();
  return count;
}

void Network::flatten_parameters(std::span<double> out) const {
  if (out.size() != parameter_count()) {
    throw std::invalid_argument("flatten_parameters: output has wrong length");
  }
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (const EdgeActivation& e : layers[l].edges) {
      for (double c : e.coeffs) out[k++] = c;
      out[k++] = e.w_base;
      out[k++] = e.w_spline;
    }
    if (l < norms.size()) {
      for (double g : norms[l].gain) out[k++] = g;
      for (double b : norms[l].bias) out[k++] = b;
    }
  }
}

std::vector<double> Network::flatten_parameters() const {
  std::vector<double> out(parameter_count());
  flatten_parameters(out);
  return out;
}

void Network::load_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) {
    throw std::invalid_argument("load_parameters: expected " + std::to_string(parameter_count()) +
                                " values, got " + std::to_string(params.size()));
  }
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (EdgeActivation& e : layers[l].edges) {
      for (double& c : e.coeffs) c = params[k++];
      e.w_base = params[k++];
      e.w_spline = params[k++];
    }
    if (l < norms.size()) {
      for (double& g : norms[l].gain) g = params[k++];
      for (double& b : norms[l].bias) b = params[k++];
    }
  }
  ++revision;
}

namespace {

void normalize_into(std::span<const double> v, std::span<const double> gain,
                    std::span<const double> bias, double eps, std::span<double> out,
                    double& mean_out, double& inv_std_out) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) * inv_std * gain[i] + bias[i];
  mean_out = mean;
  inv_std_out = inv_std;
}

void forward_layer(const Network& net, std::size_t l, std::span<const double> in,
                   LayerTrace& lt) {
  const KanLayer& layer = net.layers[l];
  const std::size_t nb = net.grid.basis_count();
  const std::size_t n_in = layer.n_in;
  const std::size_t n_out = layer.n_out;

  lt.inputs.assign(in.begin(), in.end());
  lt.silu_inputs.resize(n_in);
  lt.basis.resize(n_in * nb);
  lt.basis_derivs.resize(n_in * nb);
  for (std::size_t p = 0; p < n_in; ++p) {
    lt.silu_inputs[p] = silu(in[p]);
    basis_eval_unchecked(net.grid, in[p], std::span<double>(lt.basis).subspan(p * nb, nb),
                         std::span<double>(lt.basis_derivs).subspan(p * nb, nb));
  }

  lt.edge_outputs.resize(n_out * n_in);
  lt.nodes.resize(n_out);
  for (std::size_t q = 0; q < n_out; ++q) {
    for (std::size_t p = 0; p < n_in; ++p) {
      lt.edge_outputs[q * n_in + p] = edge_forward_from_basis(
          layer.edge(q, p), lt.silu_inputs[p],
          std::span<const double>(lt.basis).subspan(p * nb, nb));
    }
    lt.nodes[q] = aggregate(std::span<const double>(lt.edge_outputs).subspan(q * n_in, n_in),
                            layer.aggregator);
  }

  lt.outputs.resize(n_out);
  if (l < net.norms.size()) {
    const LayerNormParams& norm = net.norms[l];
    normalize_into(lt.nodes, norm.gain, norm.bias, norm.eps, lt.outputs, lt.norm_mean,
                   lt.norm_inv_std);
  } else {
    lt.outputs = lt.nodes;
    lt.norm_mean = 0.0;
    lt.norm_inv_std = 0.0;
  }
}

}  // namespace

std::vector<double> forward(const Network& net, std::span<const double> x, ForwardTrace* trace) {
  if (x.size() != net.n_inputs()) {
    throw std::invalid_argument("forward: expected " + std::to_string(net.n_inputs()) +
                                " inputs, got " + std::to_string(x.size()));
  }
  ForwardTrace local;
  ForwardTrace& t = trace != nullptr ? *trace : local;
  t.revision = net.revision;
  t.layers.resize(net.layers.size());
  std::span<const double> current = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    forward_layer(net, l, current, t.layers[l]);
    current = t.layers[l].outputs;
  }
  return t.layers.back().outputs;
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  if (v.empty()) throw std::invalid_argument("layer_norm: empty input");
  if (gain.size() != v.size() || bias.size() != v.size()) {
    throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  std::vector<double> out(v.size());
  double mean = 0.0;
  double inv_std = 0.0;
  normalize_into(v, gain, bias, eps, out, mean, inv_std);
  return out;
}

void AdherenceCounter::ensure_layers(std::size_t n) {
  if (inside_.size() < n) {
    inside_.resize(n, 0);
    total_.resize(n, 0);
  }
}

void AdherenceCounter::add_layer_values(std::size_t layer, std::span<const double> values) {
  ensure_layers(layer + 1);
  for (double v : values) {
    if (v >= lo_ && v <= hi_) ++inside_[layer];
  }
  total_[layer] += values.size();
}

void AdherenceCounter::add(const ForwardTrace& trace) {
  for (std::size_t l = 0; l < trace.hidden_layer_count(); ++l) {
    add_layer_values(l, trace.layers[l].outputs);
  }
}

void AdherenceCounter::merge(const AdherenceCounter& other) {
  ensure_layers(other.inside_.size());
  for (std::size_t l = 0; l < other.inside_.size(); ++l) {
    inside_[l] += other.inside_[l];
    total_[l] += other.total_[l];
  }
}

std::vector<double> AdherenceCounter::fractions() const {
  std::vector<double> out(inside_.size(), 0.0);
  for (std::size_t l = 0; l < inside_.size(); ++l) {
    if (total_[l] > 0) out[l] = static_cast<double>(inside_[l]) / static_cast<double>(total_[l]);
  }
  return out;
}

std::vector<double> range_adherence(std::span<const ForwardTrace> traces, double lo, double hi) {
  if (traces.empty()) throw std::invalid_argument("range_adherence: no traces");
  AdherenceCounter counter(lo, hi);
  for (const ForwardTrace& t : traces) counter.add(t);
  if (counter.empty()) throw std::invalid_argument("range_adherence: traces have no hidden layer");
  return counter.fractions();
}

Network sum_equivalent_of_mean(const Network& net) {
  Network out = net;
  for (KanLayer& layer : out.layers) {
    if (layer.aggregator != Aggregator::Mean) continue;
    layer.aggregator = Aggregator::Sum;
    const double alpha = 1.0 / static_cast<double>(layer.n_in);
    for (EdgeActivation& e : layer.edges) e = scaled_edge(e, alpha);
  }
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.config.aggregators[l] = out.layers[l].aggregator;
  }
  ++out.revision;
  return out;
}

}  // namespace kanagg
