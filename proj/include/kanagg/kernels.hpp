#pragma once

// Batch kernels. Each has a serial reference path and an OpenMP path; the
// parallel path writes per-sample results to separate slots and reduces
// them in sample order, so both produce bit-identical output.

#include <cstddef>
#include <span>
#include <vector>

#include "kanagg/matrix.hpp"
#include "kanagg/network.hpp"
#include "kanagg/training.hpp"

namespace kanagg {

/// Outputs for the selected rows, one output row per entry of `rows`.
Matrix forward_batch(const Network& net, const Matrix& features,
                     std::span<const std::size_t> rows, ExecutionPolicy policy);

struct BatchGradient {
  double loss = 0.0;                // mean over the batch
  std::vector<double> grad;         // mean over the batch, flattened layout
};

/// Forward + backward over a mini-batch. When `adherence` is non-null every
/// sample's hidden outputs are added to it (in sample order).
BatchGradient batch_gradient(const Network& net, const Matrix& features,
                             std::span<const int> labels, std::span<const std::size_t> rows,
                             HeadMode head, ExecutionPolicy policy,
                             AdherenceCounter* adherence = nullptr);

int max_threads() noexcept;

}  // namespace kanagg
