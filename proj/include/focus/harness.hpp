#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "focus/config.hpp"
#include "focus/dynamics.hpp"
#include "focus/envs.hpp"
#include "focus/online.hpp"
#include "focus/stats.hpp"

// Experiment drivers shared by the CLI and the acceptance suite: source data
// and model, the validation benchmark, multi-seed validation, online runs,
// and the figure-data emitters.
namespace focus::harness {

using envs::Transition;

struct SourceData {
  std::vector<Transition> train;
  std::vector<Transition> validation;
};

SourceData collect_source(const config::RunConfig& cfg, std::uint64_t seed);

struct SourceModel {
  dynamics::DynamicsModel model;
  dynamics::TrainReport report;
  double gamma = 0.0;  // adapt.gamma, or the percentile rule on validation
};

SourceModel train_source_model(const config::RunConfig& cfg, const SourceData& data, std::uint64_t seed);

struct Benchmark {
  std::vector<Transition> train;
  std::vector<Transition> validation;
  std::size_t train_dissimilar = 0;
  std::size_t free_rollouts = 0;
  std::size_t steered_rollouts = 0;
  std::size_t validation_rollouts = 0;
  std::size_t validation_candidates = 0;
  std::size_t validation_rejected = 0;  // labelled dissimilar
  std::size_t validation_duplicates = 0;

  double distractor_fraction() const;
};

// Training rollouts start from env_reset and are either free (random actions)
// or steered toward a distractor region; a rollout is steered whenever the
// running dissimilar fraction is below the requested one. Validation rollouts
// follow the same policy on a separate stream and keep only similar-labelled
// transitions whose content hash does not occur in the training set.
Benchmark make_benchmark(const envs::EnvSpec& source, const envs::EnvSpec& target, double similarity_gamma,
                         const config::BenchmarkSection& bench, std::uint64_t seed);

// Content hash over state, action and next_state.
std::string transition_hash(const Transition& t);

struct ValidationRow {
  dynamics::AdaptMode mode = dynamics::AdaptMode::focus;
  std::uint64_t seed = 0;
  double val_mse = 0.0;
  double val_mean_dist = 0.0;
  dynamics::TrainReport report;
};

struct SummaryRow {
  dynamics::AdaptMode mode = dynamics::AdaptMode::focus;
  std::size_t n_seeds = 0;
  double mean_val_mse = 0.0;
  double mean_val_mean_dist = 0.0;
  double p_focus_less = 1.0;  // one-sided Wilcoxon, focus vs this mode on val_mse
};

ValidationRow adapt_and_score(const config::RunConfig& cfg, const dynamics::DynamicsModel& model0, double gamma,
                              const Benchmark& bench, dynamics::AdaptMode mode, std::uint64_t seed,
                              dynamics::DynamicsModel* adapted = nullptr);

// Every (mode, seed) pair; jobs run in parallel, results in mode-major order.
std::vector<ValidationRow> run_validation(const config::RunConfig& cfg, const dynamics::DynamicsModel& model0,
                                          double gamma, const Benchmark& bench);

std::vector<SummaryRow> summarize_validation(const std::vector<ValidationRow>& rows);

std::string validation_csv(const std::vector<ValidationRow>& rows);
std::vector<ValidationRow> validation_from_csv(const std::string& text);
std::string summary_csv(const std::vector<SummaryRow>& rows);

// Online learning for one method and seed with per-iteration evaluation of
// iterations 0..I. Writes the run layout under run_dir when non-empty.
std::vector<online::MetricsRow> run_online(const config::RunConfig& cfg, online::Method method, std::uint64_t seed,
                                           const dynamics::DynamicsModel& model0, double gamma,
                                           std::span<const Transition> source_train, const std::string& run_dir);

// Re-evaluates saved iter_<i> checkpoints of one online run directory.
std::vector<online::MetricsRow> evaluate_run_dir(const config::RunConfig& cfg, online::Method method,
                                                 std::uint64_t seed, double gamma, const std::string& run_dir);

std::uint64_t eval_seed(std::uint64_t seed, int iteration);

// Long format: epoch,bin_low,bin_high,count.
std::string weight_histogram_csv(const dynamics::TrainReport& report);

struct CurvePoint {
  std::string method;
  int iteration = 0;
  std::string metric;
  std::size_t n_seeds = 0;
  stats::Interval ci;
};

inline constexpr std::size_t kBootstrapResamples = 10000;

// Mean and 95% percentile-bootstrap CI over seeds of success,
// success_given_plan (defined rows only) and frac_plans_reach_goal.
std::vector<CurvePoint> online_curves(const std::vector<online::MetricsRow>& rows, std::uint64_t seed);
std::string curves_csv(const std::vector<CurvePoint>& points);

}  // namespace focus::harness
