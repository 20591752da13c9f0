#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kanagg/data.hpp"
#include "kanagg/matrix.hpp"
#include "kanagg/network.hpp"

namespace kanagg {

/// Softmax: one logit per class, cross-entropy loss, argmax prediction.
/// Regression: a single output fitted to the class index with squared error,
/// predicted class = nearest index.
enum class HeadMode { Softmax, Regression };

std::string_view to_string(HeadMode mode) noexcept;

enum class ExecutionPolicy { Serial, Parallel };

struct TrainConfig {
  int iterations = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool trace_adherence = false;
  HeadMode head = HeadMode::Softmax;
  ExecutionPolicy policy = ExecutionPolicy::Serial;

  /// Throws ConfigError.
  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> d_logits;
};

/// Max-subtracted softmax cross-entropy. Throws std::invalid_argument for an
/// out-of-range label.
LossResult softmax_cross_entropy(std::span<const double> logits, int label);

/// (output - label)^2 on a single output.
LossResult squared_error(std::span<const double> output, int label);

LossResult head_loss(HeadMode head, std::span<const double> output, int label);

/// Predicted class for one output vector. Softmax ties go to the lowest index;
/// NaN outputs predict -1 (always wrong).
int predict_class(HeadMode head, std::span<const double> output, std::size_t n_classes);

/// Adds the gradient of one sample's loss (given dL/d output) to `grad`,
/// which uses Network::flatten_parameters() layout. Throws ConsistencyError
/// when the trace does not belong to `net` at its current revision.
void accumulate_gradient(const Network& net, const ForwardTrace& trace,
                         std::span<const double> d_output, std::span<double> grad);

/// Batch-averaged gradients for matching traces / output gradients.
std::vector<double> backward(const Network& net, std::span<const ForwardTrace> traces,
                             std::span<const std::vector<double>> d_outputs);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place. State vectors are sized on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> loss_curve;  // mean batch loss per iteration
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  bool diverged = false;   // a non-finite loss or gradient stopped training early
  int diverged_at = -1;    // iteration index where that happened
  int iterations_run = 0;
  std::vector<double> adherence;  // pooled per hidden layer (trace_adherence only)
  std::vector<std::uint64_t> adherence_inside;  // counts behind `adherence`
  std::vector<std::uint64_t> adherence_total;
  std::vector<std::vector<double>> adherence_series;  // per iteration, per hidden layer
};

/// Trains in place. Deterministic in (network, dataset, cfg.seed). Throws
/// ConfigError when network and dataset shapes disagree.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg);

/// Fraction of `rows` whose predicted class equals the label. Throws
/// std::invalid_argument on an empty row set.
double evaluate(const Network& net, const Matrix& features, std::span<const int> labels,
                std::span<const std::size_t> rows, HeadMode head, std::size_t n_classes,
                ExecutionPolicy policy = ExecutionPolicy::Serial);

/// All rows, softmax head.
double evaluate(const Network& net, const Matrix& features, std::span<const int> labels);

}  // namespace kanagg
