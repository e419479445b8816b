#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "focus/envs.hpp"
#include "focus/nn.hpp"
#include "focus/planner.hpp"

namespace focus::test {

inline std::vector<double> flatten(const nn::Gradients& g) {
  std::vector<double> out;
  for (const auto& w : g.weights) out.insert(out.end(), w.begin(), w.end());
  for (const auto& b : g.biases) out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Largest elementwise |a - f| / max(|a|, |f|, floor), floor = 1e-3 * max|a|
// so that entries at rounding level do not dominate.
inline double max_rel_error(const nn::Gradients& analytic, const nn::Gradients& numeric) {
  const auto a = flatten(analytic);
  const auto f = flatten(numeric);
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(f[i]), floor});
    worst = std::max(worst, std::abs(a[i] - f[i]) / denom);
  }
  return worst;
}

// Exact simulator as a planner propagator.
inline planner::Propagator oracle_propagator(const envs::EnvSpec& spec) {
  auto buf = std::make_shared<envs::State>();
  return [spec, buf](std::span<const double> s, std::span<const double> a) -> std::span<const double> {
    *buf = envs::env_step(spec, s, a);
    return *buf;
  };
}

inline planner::Estimator constant_estimator(double value) {
  return [value](std::span<const double>, std::span<const double>, std::span<const double>) { return value; };
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("focus_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str(const std::string& rel = "") const { return rel.empty() ? path.string() : (path / rel).string(); }
};

}  // namespace focus::test
