#include "kanagg/kernels.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kanagg {

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Matrix forward_batch(const Network& net, const Matrix& features,
                     std::span<const std::size_t> rows, ExecutionPolicy policy) {
  if (features.cols() != net.n_inputs()) {
    throw std::invalid_argument("forward_batch: feature width does not match the network");
  }
  Matrix out(rows.size(), net.n_outputs());
  const auto n = static_cast<std::ptrdiff_t>(rows.size());
  if (policy == ExecutionPolicy::Serial) {
    for (std::ptrdiff_t s = 0; s < n; ++s) {
      const auto y = forward(net, features.row(rows[static_cast<std::size_t>(s)]));
      std::copy(y.begin(), y.end(), out.row(static_cast<std::size_t>(s)).begin());
    }
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    const auto y = forward(net, features.row(rows[static_cast<std::size_t>(s)]));
    std::copy(y.begin(), y.end(), out.row(static_cast<std::size_t>(s)).begin());
  }
  return out;
}

namespace {

BatchGradient batch_gradient_serial(const Network& net, const Matrix& features,
                                    std::span<const int> labels,
                                    std::span<const std::size_t> rows, HeadMode head,
                                    AdherenceCounter* adherence) {
  BatchGradient bg;
  bg.grad.assign(net.parameter_count(), 0.0);
  ForwardTrace trace;
  for (std::size_t r : rows) {
    const auto y = forward(net, features.row(r), &trace);
    const LossResult lr = head_loss(head, y, labels[r]);
    bg.loss += lr.loss;
    accumulate_gradient(net, trace, lr.d_logits, bg.grad);
    if (adherence != nullptr) adherence->add(trace);
  }
  return bg;
}

BatchGradient batch_gradient_parallel(const Network& net, const Matrix& features,
                                      std::span<const int> labels,
                                      std::span<const std::size_t> rows, HeadMode head,
                                      AdherenceCounter* adherence) {
  const std::size_t n_params = net.parameter_count();
  const std::size_t n = rows.size();
  std::vector<double> slots(n * n_params, 0.0);
  std::vector<double> losses(n, 0.0);
  std::vector<AdherenceCounter> counters;
  if (adherence != nullptr) counters.assign(n, AdherenceCounter(adherence->lo(), adherence->hi()));

  // Exceptions must not escape the parallel region.
  std::exception_ptr failure;
#pragma omp parallel
  {
    ForwardTrace trace;
#pragma omp for schedule(static)
    for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
      const auto s = static_cast<std::size_t>(si);
      try {
        const std::size_t r = rows[s];
        const auto y = forward(net, features.row(r), &trace);
        const LossResult lr = head_loss(head, y, labels[r]);
        losses[s] = lr.loss;
        accumulate_gradient(net, trace, lr.d_logits,
                            std::span<double>(slots).subspan(s * n_params, n_params));
        if (adherence != nullptr) counters[s].add(trace);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  BatchGradient bg;
  bg.grad.assign(n_params, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    bg.loss += losses[s];
    const double* slot = slots.data() + s * n_params;
    for (std::size_t k = 0; k < n_params; ++k) bg.grad[k] += slot[k];
    if (adherence != nullptr) adherence->merge(counters[s]);
  }
  return bg;
}

}  // namespace

BatchGradient batch_gradient(const Network& net, const Matrix& features,
                             std::span<const int> labels, std::span<const std::size_t> rows,
                             HeadMode head, ExecutionPolicy policy,
                             AdherenceCounter* adherence) {
  if (rows.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  if (features.cols() != net.n_inputs()) {
    throw std::invalid_argument("batch_gradient: feature width does not match the network");
  }
  BatchGradient bg = policy == ExecutionPolicy::Serial
                         ? batch_gradient_serial(net, features, labels, rows, head, adherence)
                         : batch_gradient_parallel(net, features, labels, rows, head, adherence);
  const double inv = 1.0 / static_cast<double>(rows.size());
  bg.loss *= inv;
  for (double& g : bg.grad) g *= inv;
  return bg;
}

}  // namespace kanagg
