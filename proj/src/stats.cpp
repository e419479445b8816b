#include "focus/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "focus/dynamics.hpp"
#include "focus/error.hpp"
#include "focus/rng.hpp"

namespace focus::stats {

double mean(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::numerical, "mean of an empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double wilcoxon_less(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::shape, "wilcoxon needs paired samples of equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (!std::isfinite(diff)) fail(ErrorKind::numerical, "wilcoxon on non-finite values");
    if (diff != 0.0) d.push_back(diff);
  }
  const std::size_t n = d.size();
  if (n == 0) return 1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled ranks stay integral under averaging of ties.
  std::vector<std::size_t> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const std::size_t r2 = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    i = j + 1;
  }
  std::size_t w_plus = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank2[i];
    if (d[i] > 0.0) w_plus += rank2[i];
  }
  // counts[s] = number of sign assignments with positive-rank sum s.
  std::vector<double> counts(total + 1, 0.0);
  counts[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = total; s + 1 > rank2[i]; --s) counts[s] += counts[s - rank2[i]];
  }
  double below = 0.0;
  for (std::size_t s = 0; s <= w_plus; ++s) below += counts[s];
  return std::min(1.0, below / std::ldexp(1.0, static_cast<int>(n)));
}

Interval bootstrap_mean_ci(std::span<const double> values, std::size_t resamples, double level,
                           std::uint64_t seed) {
  if (values.empty()) fail(ErrorKind::numerical, "bootstrap of an empty sample");
  if (resamples == 0) fail(ErrorKind::config, "bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::config, "bootstrap level must lie in (0, 1)");
  Rng rng(seed);
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.index(n)];
    m = s / static_cast<double>(n);
  }
  Interval out;
  out.mean = mean(values);
  out.lo = dynamics::percentile(means, 50.0 * (1.0 - level));
  out.hi = dynamics::percentile(std::move(means), 50.0 * (1.0 + level));
  return out;
}

}  // namespace focus::stats
