#include "kanagg/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kanagg {
namespace {

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double population_variance(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

// Indices ordered by (value, index); stable ties keep the lowest index first.
std::vector<std::size_t> sorted_order(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

void require_non_empty(std::span<const double> v, const char* who) {
  if (v.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
}

}  // namespace

std::string_view to_string(Aggregator kind) noexcept {
  switch (kind) {
    case Aggregator::Sum: return "sum";
    case Aggregator::Mean: return "mean";
    case Aggregator::Std: return "std";
    case Aggregator::Var: return "var";
    case Aggregator::Median: return "median";
    case Aggregator::Norm: return "norm";
    case Aggregator::Min: return "min";
    case Aggregator::Max: return "max";
    case Aggregator::Multiply: return "multiply";
  }
  return "unknown";
}

Aggregator parse_aggregator(std::string_view name) {
  for (Aggregator kind : kAllAggregators) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown aggregator '" + std::string(name) + "'");
}

double aggregate(std::span<const double> v, Aggregator kind) {
  require_non_empty(v, "aggregate");
  const double n = static_cast<double>(v.size());
  switch (kind) {
    case Aggregator::Sum: return sum_of(v);
    case Aggregator::Mean: return sum_of(v) / n;
    case Aggregator::Var: return population_variance(v, sum_of(v) / n);
    case Aggregator::Std: return std::sqrt(population_variance(v, sum_of(v) / n));
    case Aggregator::Median: {
      std::vector<double> s(v.begin(), v.end());
      std::sort(s.begin(), s.end());
      const std::size_t m = s.size() / 2;
      return s.size() % 2 == 1 ? s[m] : 0.5 * (s[m - 1] + s[m]);
    }
    case Aggregator::Norm: {
      double s = 0.0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    }
    case Aggregator::Min: return *std::min_element(v.begin(), v.end());
    case Aggregator::Max: return *std::max_element(v.begin(), v.end());
    case Aggregator::Multiply: {
      double p = 1.0;
      for (double x : v) p *= x;
      return p;
    }
  }
  throw std::invalid_argument("aggregate: unknown kind");
}

void aggregate_backward(std::span<const double> v, Aggregator kind, double upstream,
                        std::span<double> grad) {
  require_non_empty(v, "aggregate_backward");
  if (grad.size() != v.size()) {
    throw std::invalid_argument("aggregate_backward: gradient span has wrong length");
  }
  const std::size_t len = v.size();
  const double n = static_cast<double>(len);
  std::fill(grad.begin(), grad.end(), 0.0);

  switch (kind) {
    case Aggregator::Sum:
      std::fill(grad.begin(), grad.end(), upstream);
      return;
    case Aggregator::Mean:
      std::fill(grad.begin(), grad.end(), upstream / n);
      return;
    case Aggregator::Var: {
      const double mean = sum_of(v) / n;
      for (std::size_t i = 0; i < len; ++i) grad[i] = 2.0 * (v[i] - mean) * upstream / n;
      return;
    }
    case Aggregator::Std: {
      const double mean = sum_of(v) / n;
      const double sd = std::sqrt(population_variance(v, mean));
      if (sd == 0.0) return;
      for (std::size_t i = 0; i < len; ++i) grad[i] = (v[i] - mean) * upstream / (n * sd);
      return;
    }
    case Aggregator::Norm: {
      double s = 0.0;
      for (double x : v) s += x * x;
      const double norm = std::sqrt(s);
      if (norm == 0.0) return;
      for (std::size_t i = 0; i < len; ++i) grad[i] = v[i] * upstream / norm;
      return;
    }
    case Aggregator::Min:
      grad[static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin())] = upstream;
      return;
    case Aggregator::Max:
      grad[static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin())] = upstream;
      return;
    case Aggregator::Median: {
      const auto order = sorted_order(v);
      const std::size_t m = len / 2;
      if (len % 2 == 1) {
        grad[order[m]] = upstream;
      } else {
        grad[order[m - 1]] += 0.5 * upstream;
        grad[order[m]] += 0.5 * upstream;
      }
      return;
    }
    case Aggregator::Multiply: {
      // prefix/suffix products keep zeros exact: d/dv_i = prod_{j != i} v_j.
      double prefix = 1.0;
      for (std::size_t i = 0; i < len; ++i) {
        grad[i] = prefix;
        prefix *= v[i];
      }
      double suffix = 1.0;
      for (std::size_t i = len; i-- > 0;) {
        grad[i] *= suffix * upstream;
        suffix *= v[i];
      }
      return;
    }
  }
}

std::vector<double> aggregate_backward(std::span<const double> values, Aggregator kind,
                                       double upstream) {
  std::vector<double> grad(values.size());
  aggregate_backward(values, kind, upstream, grad);
  return grad;
}

}  // namespace kanagg
