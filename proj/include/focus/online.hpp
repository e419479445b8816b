#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "focus/dynamics.hpp"
#include "focus/envs.hpp"
#include "focus/mde.hpp"
#include "focus/planner.hpp"

// Plan/execute episodes in the target environment, data aggregation, model
// and estimator fine-tuning per iteration, and frozen-checkpoint evaluation.
namespace focus::online {

using envs::EnvSpec;
using envs::State;
using envs::Transition;
using planner::GoalRegion;
using planner::Plan;
using planner::PlannerConfig;

struct ExecConfig {
  double replan_threshold = 0.05;
  int max_steps = 30;
  int max_replans = 5;

  bool operator==(const ExecConfig&) const = default;
};

enum class TerminatedBy { goal, timeout, budget };
std::string_view to_string(TerminatedBy t);
TerminatedBy terminated_by_from_string(std::string_view s);

struct EpisodeRecord {
  std::int64_t episode_id = 0;
  State start_state;
  GoalRegion goal;
  std::vector<Plan> plans;
  std::vector<Transition> executed_transitions;
  bool success = false;
  bool plan_reached_goal = false;
  int replan_count = 0;
  TerminatedBy terminated_by = TerminatedBy::timeout;

  bool operator==(const EpisodeRecord&) const = default;
};

// Where an episode starts and what it aims for. Without a fixed start the
// environment is reset from the episode seed. A non-empty goal_centers list
// replaces goal.center with one entry drawn per episode (radius is kept).
struct Task {
  std::optional<State> start;
  GoalRegion goal;
  std::vector<std::vector<double>> goal_centers;
};

GoalRegion episode_goal(const Task& task, std::uint64_t rng_seed);

// Plans from the observed state, executes open loop in the true simulator,
// and replans whenever the observed state leaves the plan by more than the
// replan threshold (strict) or the plan runs out. Ends on observed goal entry
// (goal), the step budget (timeout) or the replan budget (budget).
EpisodeRecord run_episode(const EnvSpec& spec, const planner::Propagator& propagate,
                          const planner::Estimator* estimator, const Task& task, const PlannerConfig& cfg,
                          const ExecConfig& exec, std::uint64_t rng_seed, std::int64_t episode_id = 0);

EpisodeRecord run_episode(const EnvSpec& spec, const dynamics::DynamicsModel& model, const mde::MdeModel* mde,
                          const Task& task, const PlannerConfig& cfg, const ExecConfig& exec,
                          std::uint64_t rng_seed, std::int64_t episode_id = 0);

nlohmann::ordered_json episode_to_json(const EpisodeRecord& e);
EpisodeRecord episode_from_json(const nlohmann::json& doc);

enum class Method { focus, all_data, all_data_no_mde };
std::string_view to_string(Method m);
Method method_from_string(std::string_view s);
dynamics::AdaptMode adapt_mode(Method m);
bool uses_mde(Method m);

struct OnlineSettings {
  EnvSpec source_spec;
  EnvSpec target_spec;
  double similarity_gamma = 0.02;  // ground-truth labelling only
  Task task;
  int iterations = 20;
  int episodes_per_iteration = 10;
  dynamics::WeightSchedule schedule;
  dynamics::TrainConfig adapt_train;
  mde::MdeNetConfig mde_net;
  int resolution = 16;
  double k_mde = mde::kDefaultK;
  mde::MdeTrainConfig mde_train;
  PlannerConfig planner;
  ExecConfig exec;
};

struct IterationSummary {
  int iteration = 0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::size_t new_transitions = 0;
  std::size_t cumulative_transitions = 0;
  std::size_t similar_transitions = 0;  // by the ground-truth oracle
  double mde_final_loss = 0.0;

  double similar_fraction() const;
};

nlohmann::ordered_json summary_to_json(const IterationSummary& s);
IterationSummary summary_from_json(const nlohmann::json& doc);

struct OnlineRunState {
  int iteration = 0;
  dynamics::DynamicsModel dynamics;
  mde::MdeModel mde;
  std::vector<Transition> dataset;
  std::vector<IterationSummary> summaries;
};

// Estimator used before any target data exists: fitted to model0's errors on
// source transitions, paired with the target occupancy grid.
mde::MdeModel initial_estimator(const dynamics::DynamicsModel& model0, const OnlineSettings& settings,
                                std::span<const Transition> source_data, std::uint64_t seed);

// Called with iteration 0 (the initial models) and after every iteration.
using IterationHook = std::function<void(int, const dynamics::DynamicsModel&, const mde::MdeModel&)>;

// Runs iterations 1..settings.iterations. When run_dir is non-empty, writes
// iter_0/{dynamics.ckpt, mde.ckpt} and per iteration
// iter_<i>/{dynamics.ckpt, mde.ckpt, episodes.jsonl, dataset_shard.jsonl,
// train_report.csv, manifest.json}.
OnlineRunState online_learn(const OnlineSettings& settings, Method method, const dynamics::DynamicsModel& model0,
                            const mde::MdeModel& mde0, std::uint64_t seed, const std::string& run_dir = "",
                            const IterationHook& hook = {});

// One iteration's episodes with fixed models; used by online_learn and by
// exploration comparisons.
std::vector<EpisodeRecord> run_episodes(const OnlineSettings& settings, const dynamics::DynamicsModel& model,
                                        const mde::MdeModel* mde, const PlannerConfig& cfg, const ExecConfig& exec,
                                        int n_episodes, std::uint64_t seed, std::int64_t first_episode_id);

struct MetricsRow {
  std::string method;
  std::uint64_t seed = 0;
  int iteration = 0;
  double success = 0.0;
  std::optional<double> success_given_plan;
  double frac_plans_reach_goal = 0.0;
  std::size_t n_episodes = 0;

  bool operator==(const MetricsRow&) const = default;
};

struct EvalConfig {
  int n_episodes = 20;
  int step_budget_factor = 2;
};

// Random accepts off, step budget scaled by step_budget_factor.
MetricsRow evaluate_checkpoint(const dynamics::DynamicsModel& model, const mde::MdeModel* mde,
                               const OnlineSettings& settings, bool use_mde, const EvalConfig& eval,
                               std::uint64_t seed);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);
std::vector<MetricsRow> metrics_from_csv(const std::string& text);

// Random-action rollouts of episode_len from env_reset until n_transitions
// are recorded.
std::vector<Transition> collect_random_source_data(const EnvSpec& spec, std::size_t n_transitions,
                                                   std::size_t episode_len, std::uint64_t seed,
                                                   std::int64_t first_episode_id = 0);

}  // namespace focus::online
