#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace focus {

std::uint64_t splitmix64(std::uint64_t& state);

// Named and indexed substream derivation. A run's master seed expands into
// independent streams ("env", "planner", "shuffle", "bootstrap", ...) so a
// component can be re-run in isolation:
//   derive_seed(parent, name)  = splitmix64(parent ^ fnv1a64(name))
//   derive_seed(parent, index) = splitmix64(parent + (index + 1) * 0x9E3779B97F4A7C15)
std::uint64_t derive_seed(std::uint64_t parent, std::string_view name);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

// mt19937_64 is bit-specified by the standard; the conversions below are
// spelled out instead of using std::*_distribution, whose output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace focus
