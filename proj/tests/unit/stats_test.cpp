#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "focus/error.hpp"
#include "focus/stats.hpp"

using namespace focus;

namespace {

// Exhaustive sign enumeration with averaged (real-valued) ranks.
double wilcoxon_brute(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) less += 1.0;
      if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) observed += rank[i];
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) w += rank[i];
    if (w <= observed + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

// Second implementation of the percentile bootstrap straight from its
// definition, driving mt19937_64 directly.
stats::Interval bootstrap_reference(const std::vector<double>& v, std::size_t resamples, double level,
                                    std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  const std::size_t n = v.size();
  std::vector<double> means;
  for (std::size_t r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>((static_cast<unsigned __int128>(eng()) * n) >> 64);
      s += v[idx];
    }
    means.push_back(s / static_cast<double>(n));
  }
  std::sort(means.begin(), means.end());
  auto pct = [&](double q) {
    const double pos = q / 100.0 * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  double m = 0.0;
  for (double x : v) m += x;
  return {m / static_cast<double>(n), pct(50.0 * (1.0 - level)), pct(50.0 * (1.0 + level))};
}

}  // namespace

TEST_CASE("wilcoxon self-comparison gives p = 1") {
  const std::vector<double> x{0.3, 0.1, 0.7, 0.2, 0.9};
  CHECK(stats::wilcoxon_less(x, x) == 1.0);
}

TEST_CASE("wilcoxon known values") {
  std::vector<double> x(10), y(10);
  for (int i = 0; i < 10; ++i) {
    x[i] = i;
    y[i] = i + 1.0 + 0.1 * i;
  }
  CHECK(stats::wilcoxon_less(x, y) == 1.0 / 1024.0);
  CHECK(stats::wilcoxon_less(y, x) == 1.0);
  CHECK_THROWS_AS(stats::wilcoxon_less(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("wilcoxon matches exhaustive enumeration") {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + eng() % 12;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(eng);
      // Coarse offsets produce zero differences and tied magnitudes.
      y[i] = (trial % 2 == 0) ? x[i] + std::round(u(eng) * 3.0) * 0.25 : u(eng);
    }
    CHECK(stats::wilcoxon_less(x, y) == doctest::Approx(wilcoxon_brute(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap CI of a constant collapses") {
  const std::vector<double> v(10, 0.35);
  const auto ci = stats::bootstrap_mean_ci(v, 10000, 0.95, 1);
  CHECK(ci.mean == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(std::abs(ci.lo - 0.35) < 1e-15);
  CHECK(std::abs(ci.hi - 0.35) < 1e-15);
}

TEST_CASE("bootstrap matches an independent implementation") {
  const std::vector<double> fixture{0.1, 0.4, 0.35, 0.8, 0.55, 0.2, 0.65, 0.3, 0.9, 0.45};
  for (std::uint64_t seed : {0ull, 17ull, 123456789ull}) {
    const auto a = stats::bootstrap_mean_ci(fixture, 10000, 0.95, seed);
    const auto b = bootstrap_reference(fixture, 10000, 0.95, seed);
    CHECK(std::abs(a.mean - b.mean) < 1e-9);
    CHECK(std::abs(a.lo - b.lo) < 1e-9);
    CHECK(std::abs(a.hi - b.hi) < 1e-9);
    CHECK(a.lo <= a.mean);
    CHECK(a.mean <= a.hi);
  }
  CHECK_THROWS_AS(stats::bootstrap_mean_ci(std::vector<double>{}, 10, 0.95, 1), Error);
  CHECK_THROWS_AS(stats::bootstrap_mean_ci(fixture, 10, 1.5, 1), Error);
}
