#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "focus/dynamics.hpp"
#include "focus/envs.hpp"
#include "focus/mde.hpp"
#include "focus/rng.hpp"

// Kinodynamic RRT over a learned (or oracle) dynamics model, with an
// estimator-based validity gate and rare random accepts for exploration.
namespace focus::planner {

using envs::Action;
using envs::EnvSpec;
using envs::State;

// Disc around a target position for the goal feature (the point itself for
// drag_point, the chain midpoint for chain_rope_2d).
struct GoalRegion {
  std::vector<double> center;
  double radius = 0.05;

  bool operator==(const GoalRegion&) const = default;
};

enum class Gate { root, normal, random_accept };
enum class GateDecision { accept_normal, accept_random, reject };

std::string_view to_string(Gate g);
Gate gate_from_string(std::string_view s);

struct PlanNode {
  State state;
  std::optional<std::size_t> parent;
  std::optional<Action> action_from_parent;
  Gate gate = Gate::root;
  std::optional<double> mde_value;

  bool operator==(const PlanNode&) const = default;
};

struct Plan {
  std::vector<PlanNode> nodes;  // root first
  std::vector<Action> actions;  // actions[i] leads from nodes[i] to nodes[i + 1]
  bool reached_goal = false;
  std::size_t tree_size = 0;
  double wall_time = 0.0;  // seconds; diagnostic only, not serialised
  std::uint64_t rng_seed = 0;

  bool operator==(const Plan& o) const {
    return nodes == o.nodes && actions == o.actions && reached_goal == o.reached_goal &&
           tree_size == o.tree_size && rng_seed == o.rng_seed;
  }
};

struct PlannerConfig {
  double d_max = 0.05;
  double random_accept_prob = 0.01;
  double goal_bias = 0.1;
  std::size_t max_nodes = 2000;
  std::size_t candidate_actions_per_expand = 8;
  bool use_mde = true;
  bool allow_random_accepts = true;

  bool operator==(const PlannerConfig&) const = default;
};

void validate(const PlannerConfig& cfg);

// Next-state model used to grow the tree.
using Propagator = std::function<std::span<const double>(std::span<const double> s, std::span<const double> a)>;
// Predicted model error of (s, a, s_pred).
using Estimator = std::function<double(std::span<const double> s, std::span<const double> a,
                                       std::span<const double> s_pred)>;

GateDecision mde_gate(double d_hat, const PlannerConfig& cfg, Rng& rng);

// Lowest-id node minimising state_distance to the sample. Internal error on
// an empty tree.
std::size_t nearest(envs::EnvId id, std::span<const PlanNode> tree, std::span<const double> sample);

// Strict: a feature exactly on the boundary is outside.
bool goal_check(std::span<const double> state, const GoalRegion& goal, envs::EnvId id);

Plan plan(const Propagator& propagate, const Estimator* estimator, const EnvSpec& spec, std::span<const double> start,
          const GoalRegion& goal, const PlannerConfig& cfg, std::uint64_t rng_seed);

// Convenience form over a learned model and optional estimator.
Plan plan(const dynamics::DynamicsModel& model, const mde::MdeModel* mde, const EnvSpec& spec,
          std::span<const double> start, const GoalRegion& goal, const PlannerConfig& cfg, std::uint64_t rng_seed);

nlohmann::ordered_json plan_to_json(const Plan& p);
Plan plan_from_json(const nlohmann::json& doc);

nlohmann::ordered_json goal_to_json(const GoalRegion& g);
GoalRegion goal_from_json(const nlohmann::json& doc);

}  // namespace focus::planner
