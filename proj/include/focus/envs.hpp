#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "focus/rng.hpp"

// Deterministic desk-scale source/target environment pairs.
//
// drag_point: a point in the unit square pushed by bounded displacements.
// The target scales every displacement by global_gain; inside a distractor
// patch the displacement is further scaled by the patch gain and rotated by
// the patch deflection angle.
//
// chain_rope_2d: a planar chain of n points with both endpoints held by
// grippers. Endpoint motion is followed by position-based relaxation
// (segment-length projection, gravity pull, obstacle projection).
namespace focus::envs {

enum class EnvId { drag_point, chain_rope_2d };
enum class Variant { source, target };

std::string_view to_string(EnvId id);
std::string_view to_string(Variant v);
EnvId env_id_from_string(std::string_view s);
Variant variant_from_string(std::string_view s);

using Vec2 = std::array<double, 2>;
using State = std::vector<double>;
using Action = std::vector<double>;

struct Box {
  Vec2 lo{0.0, 0.0};
  Vec2 hi{1.0, 1.0};
  bool operator==(const Box&) const = default;
};

struct Circle {
  Vec2 center{0.0, 0.0};
  double radius = 0.0;
  bool contains(const Vec2& p) const;
  bool operator==(const Circle&) const = default;
};

struct Patch {
  Circle region;
  double gain = 1.0;        // in (0, 1]
  double deflection = 0.0;  // radians
  bool operator==(const Patch&) const = default;
};

struct ChainParams {
  int n_points = 8;
  double segment_length = 0.08;
  int relax_iters = 20;
  double gravity_pull = 0.005;
  bool operator==(const ChainParams&) const = default;
};

struct EnvSpec {
  EnvId env_id = EnvId::drag_point;
  Variant variant = Variant::source;
  Box bounds;
  std::vector<Circle> obstacles;
  std::vector<Patch> distractor_patches;
  double global_gain = 1.0;
  ChainParams chain;
  double action_limit = 0.1;

  bool operator==(const EnvSpec&) const = default;
};

// Throws config error on any violated EnvSpec invariant.
void validate(const EnvSpec& spec);

EnvSpec default_spec(EnvId id, Variant variant);

std::size_t state_dim(const EnvSpec& spec);
std::size_t action_dim(EnvId id);
// Number of independently limited 2D displacements in an action.
std::size_t controlled_points(EnvId id);

struct Transition {
  EnvId env_id = EnvId::drag_point;
  Variant variant = Variant::source;
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;
  State state;
  Action action;
  State next_state;

  bool operator==(const Transition&) const = default;
};

// Free-space start state, at least action_limit away from every obstacle and
// patch. Throws environment error after 10,000 rejected samples.
State env_reset(const EnvSpec& spec, std::uint64_t rng_seed);

// Pure transition function. Actions beyond action_limit are clipped per
// controlled point.
State env_step(const EnvSpec& spec, std::span<const double> state, std::span<const double> action);

Action clip_action(const EnvSpec& spec, std::span<const double> action);

// Per controlled point: direction uniform on the circle, magnitude uniform
// in [0, action_limit].
Action sample_random_action(const EnvSpec& spec, Rng& rng);

// Ground-truth labelling of D_ST membership: steps both simulators from
// t.state with t.action and compares the unsquared distance to gamma.
// Only used to build validation sets and report metrics.
bool is_similar_region(const EnvSpec& spec_target, const EnvSpec& spec_source,
                       const Transition& t, double gamma);

// resolution x resolution row-major grid over bounds, 1 where the cell centre
// lies inside an obstacle. Distractor patches are never encoded.
std::vector<double> occupancy_grid(const EnvSpec& spec, int resolution);

double state_distance(EnvId id, std::span<const double> a, std::span<const double> b);

// Index of the point whose position is the goal feature for chain_rope_2d:
// the ceil(n/2)-th point, zero-based.
std::size_t chain_midpoint_index(int n_points);

// Position used for goal tests and planner sampling: the point itself for
// drag_point, the chain midpoint for chain_rope_2d.
Vec2 goal_feature(EnvId id, std::span<const double> state);

// Interior points settled under gravity with endpoints pinned.
State settle_chain(const EnvSpec& spec, State state);

bool in_any_patch(const EnvSpec& spec, const Vec2& p);

nlohmann::ordered_json spec_to_json(const EnvSpec& spec);
EnvSpec spec_from_json(const nlohmann::json& doc);

nlohmann::ordered_json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& doc);

// JSON Lines, one transition per line.
void write_transitions(const std::string& path, const std::vector<Transition>& data);
std::vector<Transition> read_transitions(const std::string& path);

}  // namespace focus::envs
