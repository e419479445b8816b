#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace focus::stats {

// Paired one-sided Wilcoxon signed-rank test, exact null distribution.
// Alternative: x tends to be smaller than y. Zero differences are dropped,
// tied magnitudes share the average rank. Returns 1 when no pair differs.
double wilcoxon_less(std::span<const double> x, std::span<const double> y);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap of the mean: resample with replacement, take the
// (1-level)/2 and (1+level)/2 percentiles of the resampled means with linear
// interpolation between order statistics. Resample r draws its n indices as
// consecutive Rng(seed).index(n) calls, resamples in order.
Interval bootstrap_mean_ci(std::span<const double> values, std::size_t resamples, double level,
                           std::uint64_t seed);

double mean(std::span<const double> values);

}  // namespace focus::stats
