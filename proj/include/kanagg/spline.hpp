#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kanagg {

inline constexpr int kMaxSplineDegree = 10;

/// Uniform knot vector over [range_lo, range_hi] with `grid_size` interior
/// intervals, extended by `degree` knots on each side.
struct KnotGrid {
  double range_lo = -1.0;
  double range_hi = 1.0;
  int grid_size = 3;
  int degree = 3;
  double spacing = 0.0;
  std::vector<double> knots;  // grid_size + 2 * degree + 1 entries

  std::size_t basis_count() const noexcept {
    return static_cast<std::size_t>(grid_size + degree);
  }

  /// Position of knot i on the infinite uniform extension; equals knots[i]
  /// for 0 <= i < knots.size().
  double knot(std::ptrdiff_t i) const noexcept {
    return range_lo + static_cast<double>(i - degree) * spacing;
  }

  friend bool operator==(const KnotGrid&, const KnotGrid&) = default;
};

/// Throws std::invalid_argument for non-finite or inverted bounds, grid_size
/// < 1, or a degree outside [0, kMaxSplineDegree].
KnotGrid make_grid(double range_lo, double range_hi, int grid_size, int degree);

/// One trainable edge function:
///   phi(x) = w_base * silu(x) + w_spline * sum_i coeffs[i] * B_i(x)
struct EdgeActivation {
  std::vector<double> coeffs;
  double w_base = 1.0;
  double w_spline = 1.0;

  friend bool operator==(const EdgeActivation&, const EdgeActivation&) = default;
};

double silu(double x) noexcept;
double silu_derivative(double x) noexcept;

/// Degree-k B-spline basis values (and first derivatives when `derivs` is
/// non-empty) at x. Both spans must hold grid.basis_count() entries. Outside
/// the knot span every value is zero. Throws on non-finite x.
void basis_eval(const KnotGrid& grid, double x, std::span<double> values,
                std::span<double> derivs);

struct BasisValues {
  std::vector<double> values;
  std::vector<double> derivs;
};
BasisValues basis_eval(const KnotGrid& grid, double x);

/// Same as basis_eval but never throws: non-finite x yields all zeros. Used on
/// the network hot path where divergence is detected from the loss instead.
void basis_eval_unchecked(const KnotGrid& grid, double x, std::span<double> values,
                          std::span<double> derivs) noexcept;

double edge_forward(const KnotGrid& grid, const EdgeActivation& edge, double x);

/// Edge output from precomputed basis values at x.
double edge_forward_from_basis(const EdgeActivation& edge, double silu_x,
                               std::span<const double> basis) noexcept;

struct EdgeGradient {
  double d_x = 0.0;
  std::vector<double> d_coeffs;
  double d_w_base = 0.0;
  double d_w_spline = 0.0;
};

/// Partial derivatives of edge_forward, each multiplied by `upstream`.
EdgeGradient edge_backward(const KnotGrid& grid, const EdgeActivation& edge, double x,
                           double upstream);

/// Returns an edge whose output is exactly alpha times the original. Only the
/// two weights are scaled; the output is bilinear in (w_spline, coeffs).
EdgeActivation scaled_edge(const EdgeActivation& edge, double alpha);

}  // namespace kanagg
