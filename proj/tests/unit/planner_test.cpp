#include <doctest.h>

#include <cmath>

#include "focus/error.hpp"
#include "focus/planner.hpp"
#include "support.hpp"

using namespace focus;
using namespace focus::planner;

namespace {

const envs::EnvSpec kFree = envs::default_spec(envs::EnvId::drag_point, envs::Variant::source);

PlannerConfig no_mde() {
  PlannerConfig c;
  c.use_mde = false;
  return c;
}

}  // namespace

TEST_CASE("gate decisions") {
  PlannerConfig cfg;
  cfg.d_max = 0.05;
  Rng rng(1);
  CHECK(mde_gate(0.0, cfg, rng) == GateDecision::accept_normal);
  CHECK(mde_gate(0.0499, cfg, rng) == GateDecision::accept_normal);

  CHECK(cfg.random_accept_prob == 0.01);
  const int n = 100000;
  int accepted = 0;
  Rng trials(2);
  for (int i = 0; i < n; ++i) {
    const auto d = mde_gate(cfg.d_max * (1.0 + trials.uniform()), cfg, trials);
    REQUIRE(d != GateDecision::accept_normal);
    if (d == GateDecision::accept_random) ++accepted;
  }
  const double p = 0.01;
  const double sigma = std::sqrt(p * (1 - p) / n);
  const double frac = static_cast<double>(accepted) / n;
  MESSAGE("random-accept fraction " << frac);
  CHECK(std::abs(frac - p) <= 3 * sigma);

  cfg.allow_random_accepts = false;
  for (int i = 0; i < 10000; ++i) CHECK(mde_gate(cfg.d_max, cfg, trials) == GateDecision::reject);
}

TEST_CASE("config validation") {
  PlannerConfig c;
  c.random_accept_prob = 1.5;
  CHECK_THROWS_AS(validate(c), Error);
  c = PlannerConfig{};
  c.max_nodes = 0;
  CHECK_THROWS_AS(validate(c), Error);
  c = PlannerConfig{};
  c.d_max = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
}

TEST_CASE("nearest") {
  std::vector<PlanNode> tree(1);
  tree[0].state = {0.3, 0.3};
  CHECK(nearest(envs::EnvId::drag_point, tree, std::vector<double>{0.9, 0.1}) == 0);
  std::vector<PlanNode> empty;
  try {
    nearest(envs::EnvId::drag_point, empty, std::vector<double>{0.0, 0.0});
    FAIL("expected an internal error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::internal);
  }

  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(60);
    std::vector<PlanNode> nodes(n);
    for (auto& node : nodes) {
      // Coarse grid values produce exact ties.
      node.state = {static_cast<double>(rng.index(5)) * 0.25, static_cast<double>(rng.index(5)) * 0.25};
    }
    const std::vector<double> sample{static_cast<double>(rng.index(9)) * 0.125, static_cast<double>(rng.index(9)) * 0.125};
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (envs::state_distance(envs::EnvId::drag_point, nodes[i].state, sample) <
          envs::state_distance(envs::EnvId::drag_point, nodes[best].state, sample))
        best = i;
    }
    CHECK(nearest(envs::EnvId::drag_point, nodes, sample) == best);
    const std::size_t pick = rng.index(n);
    const auto hit = nearest(envs::EnvId::drag_point, nodes, nodes[pick].state);
    CHECK(nodes[hit].state == nodes[pick].state);
    CHECK(hit <= pick);
  }
}

TEST_CASE("goal_check") {
  const GoalRegion g{{0.5, 0.5}, 0.25};
  CHECK(goal_check(std::vector<double>{0.5, 0.5}, g, envs::EnvId::drag_point));
  CHECK_FALSE(goal_check(std::vector<double>{0.75, 0.5}, g, envs::EnvId::drag_point));
  CHECK(goal_check(std::vector<double>{0.7499999, 0.5}, g, envs::EnvId::drag_point));

  // 8-point chain: the goal feature is point index 3 (entries 6 and 7).
  std::vector<double> chain(16, 9.0);
  chain[6] = 0.5;
  chain[7] = 0.5;
  CHECK(goal_check(chain, g, envs::EnvId::chain_rope_2d));
  chain[6] = 9.0;
  chain[8] = 0.5;
  chain[9] = 0.5;
  CHECK_FALSE(goal_check(chain, g, envs::EnvId::chain_rope_2d));
}

TEST_CASE("start inside the goal gives an empty plan") {
  const auto prop = test::oracle_propagator(kFree);
  const auto p = plan(prop, nullptr, kFree, std::vector<double>{0.4, 0.4}, GoalRegion{{0.41, 0.4}, 0.05}, no_mde(), 1);
  CHECK(p.reached_goal);
  CHECK(p.actions.empty());
  CHECK(p.nodes.size() == 1);
}

TEST_CASE("closed gate leaves a root-only plan") {
  PlannerConfig cfg;
  cfg.allow_random_accepts = false;
  cfg.max_nodes = 200;
  const auto est = test::constant_estimator(2.0 * cfg.d_max);
  const auto prop = test::oracle_propagator(kFree);
  const auto p = plan(prop, &est, kFree, std::vector<double>{0.2, 0.2}, GoalRegion{{0.8, 0.8}, 0.05}, cfg, 4);
  CHECK_FALSE(p.reached_goal);
  CHECK(p.nodes.size() == 1);
  CHECK(p.actions.empty());
  CHECK(p.tree_size == 1);
}

TEST_CASE("oracle planning in free space") {
  int reached = 0;
  Rng rng(5);
  for (int run = 0; run < 100; ++run) {
    const auto start = envs::env_reset(kFree, rng.next());
    const GoalRegion goal{{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}, 0.05};
    const auto prop = test::oracle_propagator(kFree);
    const auto p = plan(prop, nullptr, kFree, start, goal, no_mde(), rng.next());
    if (p.reached_goal) ++reached;
    // Consecutive nodes are linked by the propagator and the flag matches the last node.
    for (std::size_t i = 0; i < p.actions.size(); ++i)
      CHECK(envs::env_step(kFree, p.nodes[i].state, p.actions[i]) == p.nodes[i + 1].state);
    CHECK(p.reached_goal == goal_check(p.nodes.back().state, goal, envs::EnvId::drag_point));
  }
  MESSAGE("oracle plans reaching the goal: " << reached << "/100");
  CHECK(reached >= 95);
}

TEST_CASE("learned-model plans: tree validity, gate records, determinism, round-trip") {
  const auto spec = envs::default_spec(envs::EnvId::drag_point, envs::Variant::target);
  dynamics::DynamicsModel model;
  model.net = nn::mlp_init({4, 16, 2}, nn::Activation::tanh, nn::OutputActivation::identity, 3);
  model.input_norm = dynamics::Normalizer::identity(4);
  model.output_norm = dynamics::Normalizer{{0.5, 0.5}, {0.05, 0.05}};
  PlannerConfig cfg;
  cfg.d_max = 0.03;
  cfg.max_nodes = 300;
  cfg.random_accept_prob = 0.2;
  // Deterministic estimate in [0, 2 d_max) so both gate outcomes occur.
  const Estimator est = [&](std::span<const double>, std::span<const double>, std::span<const double> sp) {
    const double u = std::abs(sp[0] * 7919.0 + sp[1] * 104729.0);
    return 2.0 * cfg.d_max * (u - std::floor(u));
  };
  const GoalRegion goal{{0.8, 0.2}, 0.08};
  int random_nodes = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto start = envs::env_reset(spec, seed);
    dynamics::Predictor predictor(model);
    const Propagator prop = [&](std::span<const double> s, std::span<const double> a) { return predictor(s, a); };
    const auto p = plan(prop, &est, spec, start, goal, cfg, seed);
    CHECK(p == plan(prop, &est, spec, start, goal, cfg, seed));
    CHECK(p.nodes.front().gate == Gate::root);
    CHECK_FALSE(p.nodes.front().parent.has_value());
    for (std::size_t i = 0; i < p.actions.size(); ++i) {
      const auto& node = p.nodes[i + 1];
      CHECK(dynamics::predict(model, p.nodes[i].state, p.actions[i]) == node.state);
      REQUIRE(node.mde_value.has_value());
      if (node.gate == Gate::normal) CHECK(*node.mde_value < cfg.d_max);
      if (node.gate == Gate::random_accept) {
        CHECK(*node.mde_value >= cfg.d_max);
        ++random_nodes;
      }
    }
    const auto back = plan_from_json(nlohmann::json::parse(plan_to_json(p).dump()));
    CHECK(back.nodes.size() == p.nodes.size());
    CHECK(back.actions == p.actions);
    CHECK(back.reached_goal == p.reached_goal);
    for (std::size_t i = 0; i < p.nodes.size(); ++i) {
      CHECK(back.nodes[i].state == p.nodes[i].state);
      CHECK(back.nodes[i].gate == p.nodes[i].gate);
      CHECK(back.nodes[i].mde_value == p.nodes[i].mde_value);
    }
  }
  MESSAGE("random-accept nodes on plan paths: " << random_nodes);
  CHECK(random_nodes > 0);
  CHECK(goal_from_json(nlohmann::json::parse(goal_to_json(goal).dump())) == goal);
}
