#pragma once

// Whole-network finite-difference gradient check shared by the unit tests and
// the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "kanagg/network.hpp"
#include "kanagg/training.hpp"
#include "oracles/oracles.hpp"

namespace testing {

/// True when no node sits near a kink or singular point of its aggregator.
inline bool non_degenerate(const kanagg::Network& net, const kanagg::ForwardTrace& trace,
                           double margin = 1e-3) {
  using kanagg::Aggregator;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const auto& lt = trace.layers[l];
    for (std::size_t q = 0; q < layer.n_out; ++q) {
      std::vector<double> v(lt.edge_outputs.begin() + static_cast<std::ptrdiff_t>(q * layer.n_in),
                            lt.edge_outputs.begin() + static_cast<std::ptrdiff_t>((q + 1) * layer.n_in));
      switch (layer.aggregator) {
        case Aggregator::Min:
        case Aggregator::Max:
        case Aggregator::Median: {
          std::sort(v.begin(), v.end());
          for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i] - v[i - 1] < margin) return false;
          }
          break;
        }
        case Aggregator::Std:
        case Aggregator::Var:
          if (kanagg::aggregate(v, Aggregator::Std) < margin) return false;
          break;
        case Aggregator::Norm:
          if (kanagg::aggregate(v, Aggregator::Norm) < margin) return false;
          break;
        default:
          break;
      }
    }
  }
  return true;
}

inline double sample_loss(const kanagg::Network& net, const std::vector<double>& x, int label,
                          kanagg::HeadMode head) {
  return kanagg::head_loss(head, kanagg::forward(net, x), label).loss;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

/// Compares accumulate_gradient against central differences of the loss for
/// every parameter at one point.
inline GradientCheck check_gradient(const kanagg::Network& net, const std::vector<double>& x, int label,
                                    kanagg::HeadMode head, double step = 1e-6) {
  kanagg::ForwardTrace trace;
  const auto out = kanagg::forward(net, x, &trace);
  const auto loss = kanagg::head_loss(head, out, label);
  std::vector<double> grad(net.parameter_count(), 0.0);
  kanagg::accumulate_gradient(net, trace, loss.d_logits, grad);

  GradientCheck result;
  result.parameters = grad.size();
  kanagg::Network probe = net;
  auto params = net.flatten_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    probe.load_parameters(params);
    const double up = sample_loss(probe, x, label, head);
    params[i] = saved - step;
    probe.load_parameters(params);
    const double down = sample_loss(probe, x, label, head);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    result.max_relative_error = std::max(result.max_relative_error, oracle::relative_error(grad[i], fd));
  }
  return result;
}

}  // namespace testing
