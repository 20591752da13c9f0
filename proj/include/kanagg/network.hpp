#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kanagg/aggregators.hpp"
#include "kanagg/spline.hpp"

namespace kanagg {

struct NetworkConfig {
  std::vector<std::size_t> widths;         // [n_in, h_1, ..., n_out]
  std::vector<Aggregator> aggregators;     // one per layer transition
  bool layer_norm = false;                 // normalize hidden node outputs
  int grid_size = 3;
  int degree = 3;
  double range_lo = -1.0;
  double range_hi = 1.0;
  std::uint64_t seed = 0;
  double init_coeff_std = 0.1;
  double layer_norm_eps = 1e-5;

  /// Throws ConfigError.
  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// One KAN layer: an n_out x n_in matrix of edge functions (row q holds the
/// edges feeding output node q) and the node aggregator.
struct KanLayer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  Aggregator aggregator = Aggregator::Sum;
  std::vector<EdgeActivation> edges;

  EdgeActivation& edge(std::size_t q, std::size_t p) { return edges[q * n_in + p]; }
  const EdgeActivation& edge(std::size_t q, std::size_t p) const { return edges[q * n_in + p]; }

  friend bool operator==(const KanLayer&, const KanLayer&) = default;
};

struct LayerNormParams {
  std::vector<double> gain;
  std::vector<double> bias;
  double eps = 1e-5;

  friend bool operator==(const LayerNormParams&, const LayerNormParams&) = default;
};

/// Parameters are laid out for flattening in this order: for each layer, each
/// edge in row-major (q, p) order contributes coeffs..., w_base, w_spline; a
/// hidden layer followed by normalization then contributes gain..., bias....
struct Network {
  NetworkConfig config;
  KnotGrid grid;
  std::vector<KanLayer> layers;
  std::vector<LayerNormParams> norms;  // empty, or one per hidden layer
  std::uint64_t revision = 0;          // bumped whenever parameters change

  std::size_t n_inputs() const { return layers.front().n_in; }
  std::size_t n_outputs() const { return layers.back().n_out; }
  bool has_layer_norm() const { return !norms.empty(); }

  std::size_t parameter_count() const;
  std::vector<double> flatten_parameters() const;
  void flatten_parameters(std::span<double> out) const;
  /// Overwrites all parameters and bumps the revision.
  void load_parameters(std::span<const double> params);

  friend bool operator==(const Network&, const Network&) = default;
};

/// Deterministic in config.seed. Throws ConfigError on an invalid config.
Network build_network(const NetworkConfig& config);

/// Per-layer intermediate values of one forward pass.
struct LayerTrace {
  std::vector<double> inputs;        // n_in, the values fed to the splines
  std::vector<double> silu_inputs;   // n_in
  std::vector<double> basis;         // n_in x basis_count
  std::vector<double> basis_derivs;  // n_in x basis_count
  std::vector<double> edge_outputs;  // n_out x n_in, pre-aggregation
  std::vector<double> nodes;         // n_out, post-aggregation
  std::vector<double> outputs;       // n_out, post-normalization (== nodes if none)
  double norm_mean = 0.0;
  double norm_inv_std = 0.0;
};

struct ForwardTrace {
  std::uint64_t revision = 0;
  std::vector<LayerTrace> layers;

  /// Hidden-layer outputs, i.e. the inputs to the next layer's splines.
  std::size_t hidden_layer_count() const {
    return layers.empty() ? 0 : layers.size() - 1;
  }
};

/// Runs the network on one sample. The final layer is returned raw. When
/// `trace` is non-null it is overwritten with the intermediate values; the
/// arithmetic is identical either way. Throws std::invalid_argument on a
/// dimension mismatch.
std::vector<double> forward(const Network& net, std::span<const double> x,
                            ForwardTrace* trace = nullptr);

/// (v - mean) / sqrt(popvar + eps) * gain + bias.
std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias, double eps);

/// Pools hidden-layer output values and counts how many fall in [lo, hi].
class AdherenceCounter {
 public:
  AdherenceCounter() = default;
  AdherenceCounter(double lo, double hi) : lo_(lo), hi_(hi) {}

  void add(const ForwardTrace& trace);
  void add_layer_values(std::size_t layer, std::span<const double> values);
  void merge(const AdherenceCounter& other);

  bool empty() const noexcept { return inside_.empty(); }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::vector<double> fractions() const;
  const std::vector<std::uint64_t>& inside_counts() const noexcept { return inside_; }
  const std::vector<std::uint64_t>& total_counts() const noexcept { return total_; }

 private:
  void ensure_layers(std::size_t n);

  double lo_ = -1.0;
  double hi_ = 1.0;
  std::vector<std::uint64_t> inside_;
  std::vector<std::uint64_t> total_;
};

/// Fraction per hidden layer of traced hidden outputs v with lo <= v <= hi,
/// pooled over all traces. Throws std::invalid_argument when there is nothing
/// to pool.
std::vector<double> range_adherence(std::span<const ForwardTrace> traces, double lo, double hi);

/// Returns a copy of `net` where every Mean layer becomes a Sum layer whose
/// edges are scaled by 1 / fan-in. Both networks compute the same function.
Network sum_equivalent_of_mean(const Network& net);

// Checkpoints are JSON documents holding the config and every parameter array.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const Network& net);
Network checkpoint_from_string(const std::string& text);

}  // namespace kanagg
