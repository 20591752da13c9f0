#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kanagg {

/// Multivariate node function reducing a neuron's incoming edge outputs.
enum class Aggregator { Sum, Mean, Std, Var, Median, Norm, Min, Max, Multiply };

/// Canonical enumeration order used by sweeps and reports.
inline constexpr std::array<Aggregator, 9> kAllAggregators = {
    Aggregator::Sum,    Aggregator::Min,  Aggregator::Max,
    Aggregator::Multiply, Aggregator::Mean, Aggregator::Std,
    Aggregator::Var,    Aggregator::Median, Aggregator::Norm,
};

std::string_view to_string(Aggregator kind) noexcept;

/// Accepts the lowercase configuration names (sum, mean, std, var, median,
/// norm, min, max, multiply). Throws std::invalid_argument otherwise.
Aggregator parse_aggregator(std::string_view name);

/// Throws std::invalid_argument on an empty input.
double aggregate(std::span<const double> values, Aggregator kind);

/// Writes upstream * d aggregate / d values[i] into `grad` (same length as
/// values). Non-differentiable kinds use a deterministic subgradient:
/// Min/Max route to the lowest extremal index, even-length Median splits
/// evenly between the two middle elements, and Std/Norm emit zeros at their
/// singular point.
void aggregate_backward(std::span<const double> values, Aggregator kind, double upstream,
                        std::span<double> grad);

std::vector<double> aggregate_backward(std::span<const double> values, Aggregator kind,
                                       double upstream);

}  // namespace kanagg
