#include "focus/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "focus/error.hpp"
#include "focus/json_util.hpp"

namespace focus::planner {

std::string_view to_string(Gate g) {
  switch (g) {
    case Gate::root: return "root";
    case Gate::normal: return "normal";
    case Gate::random_accept: return "random_accept";
  }
  return "root";
}

Gate gate_from_string(std::string_view s) {
  if (s == "root") return Gate::root;
  if (s == "normal") return Gate::normal;
  if (s == "random_accept") return Gate::random_accept;
  fail(ErrorKind::io, "unknown gate '" + std::string(s) + "'");
}

void validate(const PlannerConfig& cfg) {
  if (!(cfg.d_max > 0.0)) fail(ErrorKind::config, "planner d_max must be > 0");
  if (!(cfg.random_accept_prob >= 0.0 && cfg.random_accept_prob <= 1.0)) {
    fail(ErrorKind::config, "random_accept_prob must lie in [0, 1]");
  }
  if (!(cfg.goal_bias >= 0.0 && cfg.goal_bias <= 1.0)) fail(ErrorKind::config, "goal_bias must lie in [0, 1]");
  if (cfg.max_nodes < 1) fail(ErrorKind::config, "max_nodes must be >= 1");
  if (cfg.candidate_actions_per_expand < 1) fail(ErrorKind::config, "candidate_actions_per_expand must be >= 1");
}

GateDecision mde_gate(double d_hat, const PlannerConfig& cfg, Rng& rng) {
  if (d_hat < cfg.d_max) return GateDecision::accept_normal;
  if (cfg.allow_random_accepts && rng.bernoulli(cfg.random_accept_prob)) return GateDecision::accept_random;
  return GateDecision::reject;
}

std::size_t nearest(envs::EnvId id, std::span<const PlanNode> tree, std::span<const double> sample) {
  if (tree.empty()) fail(ErrorKind::internal, "nearest on an empty tree");
  std::size_t best = 0;
  double best_d = envs::state_distance(id, tree[0].state, sample);
  for (std::size_t i = 1; i < tree.size(); ++i) {
    const double d = envs::state_distance(id, tree[i].state, sample);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

namespace {

double goal_distance(std::span<const double> state, const GoalRegion& goal, envs::EnvId id) {
  if (goal.center.size() != 2) fail(ErrorKind::shape, "goal center must be a 2-vector");
  const auto f = envs::goal_feature(id, state);
  return std::hypot(f[0] - goal.center[0], f[1] - goal.center[1]);
}

Plan extract(const std::vector<PlanNode>& tree, std::size_t leaf, bool reached, std::uint64_t seed) {
  std::vector<std::size_t> path;
  for (std::optional<std::size_t> i = leaf; i; i = tree[*i].parent) path.push_back(*i);
  std::reverse(path.begin(), path.end());
  Plan p;
  p.reached_goal = reached;
  p.tree_size = tree.size();
  p.rng_seed = seed;
  for (std::size_t k = 0; k < path.size(); ++k) {
    PlanNode n = tree[path[k]];
    n.parent = k == 0 ? std::nullopt : std::optional<std::size_t>(k - 1);
    if (n.action_from_parent) p.actions.push_back(*n.action_from_parent);
    p.nodes.push_back(std::move(n));
  }
  return p;
}

}  // namespace

bool goal_check(std::span<const double> state, const GoalRegion& goal, envs::EnvId id) {
  return goal_distance(state, goal, id) < goal.radius;
}

Plan plan(const Propagator& propagate, const Estimator* estimator, const EnvSpec& spec, std::span<const double> start,
          const GoalRegion& goal, const PlannerConfig& cfg, std::uint64_t rng_seed) {
  validate(cfg);
  if (cfg.use_mde && estimator == nullptr) fail(ErrorKind::config, "use_mde requires an estimator");
  if (!(goal.radius > 0.0)) fail(ErrorKind::config, "goal radius must be > 0");
  if (start.size() != envs::state_dim(spec)) fail(ErrorKind::shape, "start state has the wrong dimension");
  const auto t0 = std::chrono::steady_clock::now();
  const auto id = spec.env_id;
  std::vector<PlanNode> tree;
  tree.push_back(PlanNode{State(start.begin(), start.end()), std::nullopt, std::nullopt, Gate::root, std::nullopt});

  auto finish = [&](std::size_t leaf, bool reached) {
    Plan p = extract(tree, leaf, reached, rng_seed);
    p.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return p;
  };
  if (goal_check(start, goal, id)) return finish(0, true);

  Rng rng(rng_seed);
  const auto start_feature = envs::goal_feature(id, start);
  const std::size_t k = cfg.candidate_actions_per_expand;
  State sample(start.begin(), start.end());
  std::vector<Action> actions(k);
  std::vector<State> next(k);
  std::vector<double> dist(k);
  std::vector<std::size_t> order(k);
  // Expansion attempts are capped so a closed gate still terminates.
  const std::size_t max_attempts = 4 * cfg.max_nodes;
  for (std::size_t attempt = 0; attempt < max_attempts && tree.size() < cfg.max_nodes; ++attempt) {
    envs::Vec2 target;
    if (rng.bernoulli(cfg.goal_bias)) {
      target = {goal.center[0], goal.center[1]};
    } else {
      target = {rng.uniform(spec.bounds.lo[0], spec.bounds.hi[0]), rng.uniform(spec.bounds.lo[1], spec.bounds.hi[1])};
    }
    const double dx = target[0] - start_feature[0];
    const double dy = target[1] - start_feature[1];
    for (std::size_t i = 0; i + 1 < sample.size(); i += 2) {
      sample[i] = start[i] + dx;
      sample[i + 1] = start[i + 1] + dy;
    }
    const std::size_t near = nearest(id, tree, sample);
    const State from = tree[near].state;
    for (std::size_t c = 0; c < k; ++c) {
      actions[c] = envs::sample_random_action(spec, rng);
      auto s_next = propagate(from, actions[c]);
      next[c].assign(s_next.begin(), s_next.end());
      dist[c] = envs::state_distance(id, next[c], sample);
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    for (std::size_t c : order) {
      Gate gate = Gate::normal;
      std::optional<double> value;
      if (cfg.use_mde) {
        value = (*estimator)(from, actions[c], next[c]);
        const auto decision = mde_gate(*value, cfg, rng);
        if (decision == GateDecision::reject) continue;
        gate = decision == GateDecision::accept_normal ? Gate::normal : Gate::random_accept;
      }
      tree.push_back(PlanNode{next[c], near, actions[c], gate, value});
      if (goal_check(tree.back().state, goal, id)) return finish(tree.size() - 1, true);
      break;
    }
  }
  std::size_t best = 0;
  double best_d = goal_distance(tree[0].state, goal, id);
  for (std::size_t i = 1; i < tree.size(); ++i) {
    const double d = goal_distance(tree[i].state, goal, id);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return finish(best, false);
}

Plan plan(const dynamics::DynamicsModel& model, const mde::MdeModel* mde, const EnvSpec& spec,
          std::span<const double> start, const GoalRegion& goal, const PlannerConfig& cfg, std::uint64_t rng_seed) {
  if (model.env_id != spec.env_id) fail(ErrorKind::config, "dynamics model and spec describe different envs");
  dynamics::Predictor predictor(model);
  const Propagator propagate = [&](std::span<const double> s, std::span<const double> a) { return predictor(s, a); };
  if (cfg.use_mde) {
    if (mde == nullptr) fail(ErrorKind::config, "use_mde requires an estimator");
    mde::MdeScorer scorer(*mde, spec);
    const Estimator estimate = [&](std::span<const double> s, std::span<const double> a,
                                   std::span<const double> sp) { return scorer(s, a, sp); };
    return plan(propagate, &estimate, spec, start, goal, cfg, rng_seed);
  }
  return plan(propagate, nullptr, spec, start, goal, cfg, rng_seed);
}

nlohmann::ordered_json plan_to_json(const Plan& p) {
  nlohmann::ordered_json states = nlohmann::ordered_json::array();
  nlohmann::ordered_json gates = nlohmann::ordered_json::array();
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  for (const auto& n : p.nodes) {
    states.push_back(n.state);
    gates.push_back(to_string(n.gate));
    values.push_back(n.mde_value ? nlohmann::ordered_json(*n.mde_value) : nlohmann::ordered_json(nullptr));
  }
  nlohmann::ordered_json doc;
  doc["reached_goal"] = p.reached_goal;
  doc["actions"] = p.actions;
  doc["predicted_states"] = std::move(states);
  doc["gates"] = std::move(gates);
  doc["mde_values"] = std::move(values);
  doc["tree_size"] = p.tree_size;
  doc["rng_seed"] = p.rng_seed;
  return doc;
}

Plan plan_from_json(const nlohmann::json& doc) {
  try {
    Plan p;
    p.reached_goal = doc.at("reached_goal").get<bool>();
    p.actions = doc.at("actions").get<std::vector<Action>>();
    const auto states = doc.at("predicted_states").get<std::vector<State>>();
    const auto& gates = doc.at("gates");
    const auto& values = doc.at("mde_values");
    if (states.size() != p.actions.size() + 1 || gates.size() != states.size() || values.size() != states.size()) {
      fail(ErrorKind::io, "plan arrays have inconsistent lengths");
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      PlanNode n;
      n.state = states[i];
      if (i > 0) {
        n.parent = i - 1;
        n.action_from_parent = p.actions[i - 1];
      }
      n.gate = gate_from_string(gates[i].get<std::string>());
      if (!values[i].is_null()) n.mde_value = values[i].get<double>();
      p.nodes.push_back(std::move(n));
    }
    p.tree_size = doc.at("tree_size").get<std::size_t>();
    p.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed plan: ") + e.what());
  }
}

nlohmann::ordered_json goal_to_json(const GoalRegion& g) { return {{"center", g.center}, {"radius", g.radius}}; }

GoalRegion goal_from_json(const nlohmann::json& doc) {
  ObjectReader r(doc, "goal");
  GoalRegion g;
  g.center = r.require<std::vector<double>>("center");
  g.radius = r.require<double>("radius");
  r.finish();
  if (g.center.size() != 2) fail(ErrorKind::config, "goal center must be a 2-vector");
  if (!(g.radius > 0.0)) fail(ErrorKind::config, "goal radius must be > 0");
  return g;
}

}  // namespace focus::planner
