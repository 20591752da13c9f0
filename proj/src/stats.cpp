#include "kanagg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kanagg {

std::vector<double> rank_with_ties(std::span<const double> scores, bool higher_is_better) {
  if (scores.empty()) throw std::invalid_argument("rank_with_ties: empty input");
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("rank_with_ties: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return higher_is_better ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  std::vector<double> ranks(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // positions i+1 .. j share their mean
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
    i = j;
  }
  return ranks;
}

std::vector<RankSummary> average_rank(const std::vector<std::vector<double>>& ranks) {
  if (ranks.empty()) throw std::invalid_argument("average_rank: no rows");
  const std::size_t d = ranks.front().size();
  if (d == 0) throw std::invalid_argument("average_rank: no datasets");
  std::vector<RankSummary> out;
  out.reserve(ranks.size());
  for (std::size_t r = 0; r < ranks.size(); ++r) {
    if (ranks[r].size() != d) throw std::invalid_argument("average_rank: ragged rank matrix");
    double mean = 0.0;
    for (double v : ranks[r]) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : ranks[r]) var += (v - mean) * (v - mean);
    out.push_back({r, mean, std::sqrt(var / static_cast<double>(d))});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankSummary& a, const RankSummary& b) { return a.mean < b.mean; });
  return out;
}

std::string_view to_string(WilcoxonMethod method) noexcept {
  return method == WilcoxonMethod::Exact ? "exact" : "normal-approximation";
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon_signed_rank: length mismatch");
  if (a.empty()) throw std::invalid_argument("wilcoxon_signed_rank: empty samples");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (!std::isfinite(d)) throw std::invalid_argument("wilcoxon_signed_rank: non-finite difference");
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult res;
  res.n_effective = diffs.size();
  if (diffs.empty()) {
    res.degenerate = true;
    res.p_value = 1.0;
    return res;
  }

  const std::size_t n = diffs.size();
  std::vector<double> magnitudes(n);
  for (std::size_t i = 0; i < n; ++i) magnitudes[i] = std::fabs(diffs[i]);
  const std::vector<double> ranks = rank_with_ties(magnitudes, /*higher_is_better=*/false);

  // Averaged ranks are multiples of 1/2, so doubled ranks are exact integers.
  std::vector<std::size_t> doubled(n);
  std::size_t observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    doubled[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
    if (diffs[i] > 0.0) {
      res.w_plus += ranks[i];
      observed += doubled[i];
    } else {
      res.w_minus += ranks[i];
    }
  }

  if (n <= kWilcoxonExactLimit) {
    res.method = WilcoxonMethod::Exact;
    const std::size_t total = n * (n + 1);  // doubled maximum of W+
    // counts[s] = number of sign patterns whose doubled W+ equals s
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled) {
      for (std::size_t s = reach + 1; s-- > 0;) {
        if (counts[s] != 0.0) counts[s + r] += counts[s];
      }
      reach += r;
    }
    const double patterns = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0;
    double upper = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s <= observed) lower += counts[s];
      if (s >= observed) upper += counts[s];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
    return res;
  }

  res.method = WilcoxonMethod::NormalApproximation;
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = magnitudes;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i + 1;
      while (j < n && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
  }
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) {
    res.p_value = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::fabs(res.w_plus - mean) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

}  // namespace kanagg
