#include "kanagg/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "kanagg/errors.hpp"
#include "kanagg/kernels.hpp"

namespace kanagg {

std::string_view to_string(HeadMode mode) noexcept {
  return mode == HeadMode::Softmax ? "softmax" : "regression";
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  // A zero learning rate is accepted: it freezes the parameters.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

LossResult softmax_cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " logits");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  LossResult r;
  r.d_logits.resize(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.d_logits[i] = std::exp(logits[i] - top);
    denom += r.d_logits[i];
  }
  for (double& p : r.d_logits) p /= denom;
  const auto y = static_cast<std::size_t>(label);
  r.loss = -(logits[y] - top - std::log(denom));
  r.d_logits[y] -= 1.0;
  return r;
}

LossResult squared_error(std::span<const double> output, int label) {
  if (output.size() != 1) throw std::invalid_argument("squared_error: expects a single output");
  if (label < 0) throw std::invalid_argument("squared_error: negative label");
  const double diff = output[0] - static_cast<double>(label);
  return {diff * diff, {2.0 * diff}};
}

LossResult head_loss(HeadMode head, std::span<const double> output, int label) {
  return head == HeadMode::Softmax ? softmax_cross_entropy(output, label)
                                   : squared_error(output, label);
}

int predict_class(HeadMode head, std::span<const double> output, std::size_t n_classes) {
  for (double v : output) {
    if (std::isnan(v)) return -1;
  }
  if (head == HeadMode::Softmax) {
    return static_cast<int>(std::max_element(output.begin(), output.end()) - output.begin());
  }
  if (!std::isfinite(output[0])) return -1;
  const double hi = static_cast<double>(n_classes) - 1.0;
  return static_cast<int>(std::clamp(std::round(output[0]), 0.0, hi));
}

void accumulate_gradient(const Network& net, const ForwardTrace& trace,
                         std::span<const double> d_output, std::span<double> grad) {
  if (trace.revision != net.revision || trace.layers.size() != net.layers.size()) {
    throw ConsistencyError("backward: trace was not produced by this network revision");
  }
  if (grad.size() != net.parameter_count()) {
    throw std::invalid_argument("backward: gradient buffer has wrong length");
  }
  if (d_output.size() != net.n_outputs()) {
    throw std::invalid_argument("backward: output gradient has wrong length");
  }
  const std::size_t nb = net.grid.basis_count();
  const std::size_t stride = nb + 2;

  // Start offset of each layer's edge block and normalization block.
  std::vector<std::size_t> edge_offset(net.layers.size());
  std::vector<std::size_t> norm_offset(net.layers.size());
  {
    std::size_t k = 0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      edge_offset[l] = k;
      k += net.layers[l].edges.size() * stride;
      norm_offset[l] = k;
      if (l < net.norms.size()) k += 2 * net.norms[l].gain.size();
    }
  }

  std::vector<double> d_out(d_output.begin(), d_output.end());
  std::vector<double> d_nodes;
  std::vector<double> d_edges;
  std::vector<double> d_in;
  std::vector<double> silu_dx;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const KanLayer& layer = net.layers[l];
    const LayerTrace& lt = trace.layers[l];
    if (lt.nodes.size() != layer.n_out || lt.inputs.size() != layer.n_in) {
      throw ConsistencyError("backward: trace shape does not match the network");
    }
    const std::size_t n_in = layer.n_in;
    const std::size_t n_out = layer.n_out;

    d_nodes.assign(n_out, 0.0);
    if (l < net.norms.size()) {
      const LayerNormParams& norm = net.norms[l];
      const std::size_t off = norm_offset[l];
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < n_out; ++i) {
        const double xhat = (lt.nodes[i] - lt.norm_mean) * lt.norm_inv_std;
        grad[off + i] += d_out[i] * xhat;
        grad[off + n_out + i] += d_out[i];
        const double dxhat = d_out[i] * norm.gain[i];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
      }
      mean_dxhat /= static_cast<double>(n_out);
      mean_dxhat_xhat /= static_cast<double>(n_out);
      for (std::size_t i = 0; i < n_out; ++i) {
        const double xhat = (lt.nodes[i] - lt.norm_mean) * lt.norm_inv_std;
        const double dxhat = d_out[i] * norm.gain[i];
        d_nodes[i] = lt.norm_inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
      }
    } else {
      d_nodes = d_out;
    }

    silu_dx.resize(n_in);
    for (std::size_t p = 0; p < n_in; ++p) silu_dx[p] = silu_derivative(lt.inputs[p]);

    d_in.assign(n_in, 0.0);
    d_edges.resize(n_in);
    for (std::size_t q = 0; q < n_out; ++q) {
      aggregate_backward(std::span<const double>(lt.edge_outputs).subspan(q * n_in, n_in),
                         layer.aggregator, d_nodes[q], d_edges);
      for (std::size_t p = 0; p < n_in; ++p) {
        const double g = d_edges[p];
        if (g == 0.0) continue;
        const EdgeActivation& e = layer.edge(q, p);
        const double* basis = lt.basis.data() + p * nb;
        const double* dbasis = lt.basis_derivs.data() + p * nb;
        const std::size_t off = edge_offset[l] + (q * n_in + p) * stride;
        double spline = 0.0;
        double spline_dx = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
          grad[off + i] += g * e.w_spline * basis[i];
          spline += e.coeffs[i] * basis[i];
          spline_dx += e.coeffs[i] * dbasis[i];
        }
        grad[off + nb] += g * lt.silu_inputs[p];
        grad[off + nb + 1] += g * spline;
        d_in[p] += g * (e.w_base * silu_dx[p] + e.w_spline * spline_dx);
      }
    }
    d_out.swap(d_in);
  }
}

std::vector<double> backward(const Network& net, std::span<const ForwardTrace> traces,
                             std::span<const std::vector<double>> d_outputs) {
  if (traces.size() != d_outputs.size()) {
    throw std::invalid_argument("backward: traces and output gradients differ in count");
  }
  std::vector<double> grad(net.parameter_count(), 0.0);
  if (traces.empty()) return grad;
  for (std::size_t s = 0; s < traces.size(); ++s) {
    accumulate_gradient(net, traces[s], d_outputs[s], grad);
  }
  const double inv = 1.0 / static_cast<double>(traces.size());
  for (double& g : grad) g *= inv;
  return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (net.n_inputs() != data.n_features()) {
    throw ConfigError("network expects " + std::to_string(net.n_inputs()) +
                      " inputs but dataset has " + std::to_string(data.n_features()) + " features");
  }
  const std::size_t want_out = cfg.head == HeadMode::Softmax ? data.n_classes() : 1;
  if (net.n_outputs() != want_out) {
    throw ConfigError("network has " + std::to_string(net.n_outputs()) + " outputs, " +
                      std::string(to_string(cfg.head)) + " head needs " + std::to_string(want_out));
  }
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= data.n_classes()) {
      throw ConfigError("dataset label out of range");
    }
  }
  if (data.train.empty()) throw ConfigError("dataset has an empty training split");

  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = data.train;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<double> params = net.flatten_parameters();
  AdamState adam;
  AdherenceCounter pooled(net.config.range_lo, net.config.range_hi);
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int it = 0; it < cfg.iterations; ++it) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + cfg.batch_size);
    const std::span<const std::size_t> batch(order.data() + cursor, end - cursor);
    cursor = end;

    AdherenceCounter step_counter(net.config.range_lo, net.config.range_hi);
    BatchGradient bg = batch_gradient(net, data.features, data.labels, batch, cfg.head,
                                      cfg.policy, cfg.trace_adherence ? &step_counter : nullptr);
    result.loss_curve.push_back(bg.loss);
    if (cfg.trace_adherence) {
      pooled.merge(step_counter);
      result.adherence_series.push_back(step_counter.fractions());
    }
    result.iterations_run = it + 1;

    const bool finite = std::isfinite(bg.loss) &&
                        std::all_of(bg.grad.begin(), bg.grad.end(),
                                    [](double g) { return std::isfinite(g); });
    if (!finite) {
      result.diverged = true;
      result.diverged_at = it;
      break;
    }
    adam_step(params, bg.grad, adam, cfg);
    net.load_parameters(params);
  }

  if (cfg.trace_adherence) {
    result.adherence = pooled.fractions();
    result.adherence_inside = pooled.inside_counts();
    result.adherence_total = pooled.total_counts();
  }
  const std::size_t n_classes = data.n_classes();
  result.train_accuracy = evaluate(net, data.features, data.labels, data.train, cfg.head, n_classes, cfg.policy);
  if (!data.val.empty()) {
    result.val_accuracy = evaluate(net, data.features, data.labels, data.val, cfg.head, n_classes, cfg.policy);
  }
  if (!data.test.empty()) {
    result.test_accuracy = evaluate(net, data.features, data.labels, data.test, cfg.head, n_classes, cfg.policy);
  }
  return result;
}

double evaluate(const Network& net, const Matrix& features, std::span<const int> labels,
                std::span<const std::size_t> rows, HeadMode head, std::size_t n_classes,
                ExecutionPolicy policy) {
  if (rows.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  const Matrix out = forward_batch(net, features, rows, policy);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (predict_class(head, out.row(i), n_classes) == labels[rows[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double evaluate(const Network& net, const Matrix& features, std::span<const int> labels) {
  std::vector<std::size_t> rows(features.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return evaluate(net, features, labels, rows, HeadMode::Softmax, net.n_outputs());
}

}  // namespace kanagg
