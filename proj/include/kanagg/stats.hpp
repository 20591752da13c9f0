#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace kanagg {

/// Averaged ranks, 1 = best. Tied scores share the mean of the positions they
/// span. Throws std::invalid_argument on empty or non-finite input.
std::vector<double> rank_with_ties(std::span<const double> scores, bool higher_is_better);

struct RankSummary {
  std::size_t row = 0;  // index into the input rows
  double mean = 0.0;
  double std = 0.0;     // population std across datasets
};

/// `ranks[row][dataset]`. Returns one summary per row sorted ascending by mean
/// (ties keep row order). Throws std::invalid_argument on ragged input.
std::vector<RankSummary> average_rank(const std::vector<std::vector<double>>& ranks);

enum class WilcoxonMethod { Exact, NormalApproximation };
std::string_view to_string(WilcoxonMethod method) noexcept;

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n_effective = 0;  // non-zero differences
  double p_value = 1.0;         // two-sided
  WilcoxonMethod method = WilcoxonMethod::Exact;
  bool degenerate = false;      // every difference was zero

  bool significant(double alpha = 0.05) const noexcept { return !degenerate && p_value < alpha; }
};

inline constexpr std::size_t kWilcoxonExactLimit = 20;

/// Paired signed-rank test on d = a - b. Zero differences are dropped; |d| is
/// ranked with averaged ties. Exact null distribution for n_effective <= 20,
/// normal approximation with tie-corrected variance and continuity correction
/// above. Two-sided p = min(1, 2 * smaller tail). Throws on length mismatch.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace kanagg
