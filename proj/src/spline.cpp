#include "kanagg/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kanagg {

KnotGrid make_grid(double range_lo, double range_hi, int grid_size, int degree) {
  if (!std::isfinite(range_lo) || !std::isfinite(range_hi)) {
    throw std::invalid_argument("make_grid: grid bounds must be finite");
  }
  if (!(range_lo < range_hi)) {
    throw std::invalid_argument("make_grid: range_lo must be below range_hi");
  }
  if (grid_size < 1) {
    throw std::invalid_argument("make_grid: grid_size must be at least 1");
  }
  if (degree < 0 || degree > kMaxSplineDegree) {
    throw std::invalid_argument("make_grid: degree must lie in [0, " +
                                std::to_string(kMaxSplineDegree) + "]");
  }
  KnotGrid grid;
  grid.range_lo = range_lo;
  grid.range_hi = range_hi;
  grid.grid_size = grid_size;
  grid.degree = degree;
  grid.spacing = (range_hi - range_lo) / grid_size;
  const std::size_t n_knots = static_cast<std::size_t>(grid_size + 2 * degree + 1);
  grid.knots.resize(n_knots);
  for (std::size_t i = 0; i < n_knots; ++i) {
    grid.knots[i] = grid.knot(static_cast<std::ptrdiff_t>(i));
  }
  return grid;
}

double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) noexcept {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

void basis_eval_unchecked(const KnotGrid& grid, double x, std::span<double> values,
                          std::span<double> derivs) noexcept {
  std::fill(values.begin(), values.end(), 0.0);
  std::fill(derivs.begin(), derivs.end(), 0.0);

  const auto& t = grid.knots;
  const std::ptrdiff_t n_intervals = static_cast<std::ptrdiff_t>(t.size()) - 1;
  if (!(x >= t.front() && x < t.back())) return;  // also rejects NaN

  // Interval j with t[j] <= x < t[j+1]; the floor estimate is corrected
  // against the stored knots so both agree on boundary points.
  auto j = static_cast<std::ptrdiff_t>(std::floor((x - t.front()) / grid.spacing));
  j = std::clamp<std::ptrdiff_t>(j, 0, n_intervals - 1);
  while (j > 0 && x < t[static_cast<std::size_t>(j)]) --j;
  while (j + 1 < n_intervals && x >= t[static_cast<std::size_t>(j + 1)]) ++j;

  const int k = grid.degree;
  // cur[r] holds B_{j-d+r}^{d}(x) for r = 0..d.
  std::array<double, kMaxSplineDegree + 1> cur{};
  std::array<double, kMaxSplineDegree + 1> prev{};
  cur[0] = 1.0;
  for (int d = 1; d <= k; ++d) {
    std::copy_n(cur.begin(), d, prev.begin());
    const double inv = 1.0 / (d * grid.spacing);
    for (int r = 0; r <= d; ++r) {
      const std::ptrdiff_t i = j - d + r;
      const double left = r >= 1 ? prev[static_cast<std::size_t>(r - 1)] : 0.0;
      const double right = r <= d - 1 ? prev[static_cast<std::size_t>(r)] : 0.0;
      cur[static_cast<std::size_t>(r)] =
          ((x - grid.knot(i)) * left + (grid.knot(i + d + 1) - x) * right) * inv;
    }
  }

  const auto nb = static_cast<std::ptrdiff_t>(grid.basis_count());
  for (int r = 0; r <= k; ++r) {
    const std::ptrdiff_t i = j - k + r;
    if (i < 0 || i >= nb) continue;
    values[static_cast<std::size_t>(i)] = cur[static_cast<std::size_t>(r)];
    if (!derivs.empty() && k >= 1) {
      // Uniform knots: B_i^k' = (B_i^{k-1} - B_{i+1}^{k-1}) / h.
      const double left = r >= 1 ? prev[static_cast<std::size_t>(r - 1)] : 0.0;
      const double right = r <= k - 1 ? prev[static_cast<std::size_t>(r)] : 0.0;
      derivs[static_cast<std::size_t>(i)] = (left - right) / grid.spacing;
    }
  }
}

void basis_eval(const KnotGrid& grid, double x, std::span<double> values,
                std::span<double> derivs) {
  if (!std::isfinite(x)) throw std::invalid_argument("basis_eval: x must be finite");
  if (values.size() != grid.basis_count() ||
      (!derivs.empty() && derivs.size() != grid.basis_count())) {
    throw std::invalid_argument("basis_eval: output spans must hold basis_count() values");
  }
  basis_eval_unchecked(grid, x, values, derivs);
}

BasisValues basis_eval(const KnotGrid& grid, double x) {
  BasisValues out{std::vector<double>(grid.basis_count()),
                  std::vector<double>(grid.basis_count())};
  basis_eval(grid, x, out.values, out.derivs);
  return out;
}

double edge_forward_from_basis(const EdgeActivation& edge, double silu_x,
                               std::span<const double> basis) noexcept {
  double spline = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i) spline += edge.coeffs[i] * basis[i];
  return edge.w_base * silu_x + edge.w_spline * spline;
}

double edge_forward(const KnotGrid& grid, const EdgeActivation& edge, double x) {
  if (edge.coeffs.size() != grid.basis_count()) {
    throw std::invalid_argument("edge_forward: coefficient count does not match grid");
  }
  std::array<double, 64> stack{};
  std::vector<double> heap;
  std::span<double> basis;
  if (grid.basis_count() <= stack.size()) {
    basis = std::span<double>(stack.data(), grid.basis_count());
  } else {
    heap.resize(grid.basis_count());
    basis = heap;
  }
  basis_eval(grid, x, basis, {});
  return edge_forward_from_basis(edge, silu(x), basis);
}

EdgeGradient edge_backward(const KnotGrid& grid, const EdgeActivation& edge, double x,
                           double upstream) {
  if (edge.coeffs.size() != grid.basis_count()) {
    throw std::invalid_argument("edge_backward: coefficient count does not match grid");
  }
  const BasisValues b = basis_eval(grid, x);
  double spline = 0.0;
  double spline_dx = 0.0;
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    spline += edge.coeffs[i] * b.values[i];
    spline_dx += edge.coeffs[i] * b.derivs[i];
  }
  EdgeGradient g;
  g.d_coeffs.resize(b.values.size());
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    g.d_coeffs[i] = upstream * edge.w_spline * b.values[i];
  }
  g.d_w_base = upstream * silu(x);
  g.d_w_spline = upstream * spline;
  g.d_x = upstream * (edge.w_base * silu_derivative(x) + edge.w_spline * spline_dx);
  return g;
}

EdgeActivation scaled_edge(const EdgeActivation& edge, double alpha) {
  EdgeActivation out = edge;
  out.w_base *= alpha;
  out.w_spline *= alpha;
  return out;
}

}  // namespace kanagg
