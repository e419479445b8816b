#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/dynamics.hpp"
#include "focus/envs.hpp"
#include "focus/kernels.hpp"
#include "focus/mde.hpp"
#include "focus/online.hpp"
#include "focus/planner.hpp"

// Run configuration: one JSON document, every section optional, unknown keys
// rejected. config_to_json emits the fully resolved form that manifests echo.
namespace focus::config {

struct EnvSection {
  envs::EnvSpec source = envs::default_spec(envs::EnvId::drag_point, envs::Variant::source);
  envs::EnvSpec target = envs::default_spec(envs::EnvId::drag_point, envs::Variant::target);
  // Unsquared distance threshold of the ground-truth similarity oracle.
  double similarity_gamma = 0.02;
};

struct NnSection {
  std::vector<std::size_t> hidden{64, 64};
  nn::Activation activation = nn::Activation::tanh;
};

struct TrainSection {
  std::size_t source_transitions = 5000;
  std::size_t source_validation = 1000;
  std::size_t episode_len = 10;
  int epochs = 300;
  std::size_t batch_size = 32;
  double learning_rate = 3e-4;
  double final_learning_rate = 1e-5;
  kernels::Exec exec = kernels::Exec::parallel;
};

struct AdaptSection {
  dynamics::AdaptMode mode = dynamics::AdaptMode::focus;
  dynamics::WeightSchedule schedule;  // gamma is resolved separately
  std::optional<double> gamma;        // fixed override of the percentile rule
  double gamma_percentile = 97.0;
  int epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
};

struct MdeSection {
  int resolution = 16;
  double k_mde = mde::kDefaultK;
  std::vector<std::size_t> hidden{64, 64};
  nn::Activation activation = nn::Activation::relu;
  int epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double final_learning_rate = 0.0;  // 0 keeps the rate constant
  std::optional<double> d_max;  // distance units; default d_max_factor * sqrt(gamma)
  double d_max_factor = 1.5;
};

struct PlannerSection {
  double random_accept_prob = 0.01;
  double goal_bias = 0.1;
  std::size_t max_nodes = 2000;
  std::size_t candidate_actions_per_expand = 8;
  bool allow_random_accepts = true;
};

struct OnlineSection {
  int iterations = 20;
  int episodes_per_iteration = 10;
  online::ExecConfig exec;
  std::optional<envs::State> start;
  planner::GoalRegion goal{{0.8, 0.5}, 0.08};
  std::vector<std::vector<double>> goal_centers;  // multi-goal mode when non-empty
  std::vector<online::Method> methods{online::Method::focus, online::Method::all_data,
                                      online::Method::all_data_no_mde};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct EvalSection {
  int n_episodes = 20;
  int step_budget_factor = 2;
};

struct BenchmarkSection {
  std::size_t train_size = 2000;
  std::size_t validation_size = 300;
  double distractor_fraction = 0.3;
  std::size_t episode_len = 10;
  // Cap on rollouts while filling the similar-only validation set.
  std::size_t max_validation_rollouts = 10000;
};

struct ValidateSection {
  std::vector<dynamics::AdaptMode> modes{dynamics::AdaptMode::focus, dynamics::AdaptMode::all_data,
                                         dynamics::AdaptMode::low_initial_error};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
};

struct IoSection {
  std::string run_root = "runs";
};

struct RunConfig {
  std::uint64_t seed = 0;
  EnvSection env;
  NnSection nn;
  TrainSection train;
  AdaptSection adapt;
  MdeSection mde;
  PlannerSection planner;
  OnlineSection online;
  EvalSection eval;
  BenchmarkSection benchmark;
  ValidateSection validate;
  IoSection io;
};

// Strict parse; throws config errors naming the offending key.
RunConfig parse_config(const nlohmann::json& doc);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// Accepts a config document or a manifest carrying "resolved_config".
RunConfig load_config(const std::string& path);

// Derived settings.
dynamics::NetConfig net_config(const RunConfig& cfg);
dynamics::TrainConfig source_train_config(const RunConfig& cfg);
dynamics::TrainConfig adapt_train_config(const RunConfig& cfg);
dynamics::WeightSchedule schedule_with_gamma(const RunConfig& cfg, double gamma);
mde::MdeNetConfig mde_net_config(const RunConfig& cfg);
mde::MdeTrainConfig mde_train_config(const RunConfig& cfg);
planner::PlannerConfig planner_config(const RunConfig& cfg, double gamma);
online::OnlineSettings online_settings(const RunConfig& cfg, double gamma);

}  // namespace focus::config
