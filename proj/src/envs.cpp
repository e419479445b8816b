#include "focus/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "focus/error.hpp"
#include "focus/json_util.hpp"

namespace focus::envs {

std::string_view to_string(EnvId id) {
  return id == EnvId::drag_point ? "drag_point" : "chain_rope_2d";
}

std::string_view to_string(Variant v) { return v == Variant::source ? "source" : "target"; }

EnvId env_id_from_string(std::string_view s) {
  if (s == "drag_point") return EnvId::drag_point;
  if (s == "chain_rope_2d") return EnvId::chain_rope_2d;
  fail(ErrorKind::config, "unknown env_id '" + std::string(s) + "'");
}

Variant variant_from_string(std::string_view s) {
  if (s == "source") return Variant::source;
  if (s == "target") return Variant::target;
  fail(ErrorKind::config, "unknown variant '" + std::string(s) + "'");
}

bool Circle::contains(const Vec2& p) const {
  return std::hypot(p[0] - center[0], p[1] - center[1]) < radius;
}

void validate(const EnvSpec& spec) {
  if (!(spec.action_limit > 0.0)) fail(ErrorKind::config, "action_limit must be positive");
  if (!(spec.global_gain > 0.0)) fail(ErrorKind::config, "global_gain must be positive");
  for (int k = 0; k < 2; ++k) {
    if (!(spec.bounds.hi[k] > spec.bounds.lo[k])) fail(ErrorKind::config, "bounds must have positive extent");
  }
  for (const auto& c : spec.obstacles) {
    if (!(c.radius > 0.0)) fail(ErrorKind::config, "obstacle radius must be positive");
  }
  for (const auto& p : spec.distractor_patches) {
    if (!(p.region.radius > 0.0)) fail(ErrorKind::config, "patch radius must be positive");
    if (!(p.gain > 0.0 && p.gain <= 1.0)) fail(ErrorKind::config, "patch gain must lie in (0, 1]");
  }
  if (spec.variant == Variant::source && (!spec.obstacles.empty() || !spec.distractor_patches.empty())) {
    fail(ErrorKind::config, "source variants have no obstacles or distractor patches");
  }
  if (spec.env_id == EnvId::chain_rope_2d) {
    if (spec.chain.n_points < 3) fail(ErrorKind::config, "chain needs at least 3 points");
    if (!(spec.chain.segment_length > 0.0)) fail(ErrorKind::config, "segment_length must be positive");
    if (spec.chain.relax_iters < 0) fail(ErrorKind::config, "relax_iters must be non-negative");
    if (!spec.distractor_patches.empty()) fail(ErrorKind::config, "distractor patches apply to drag_point only");
  }
}

EnvSpec default_spec(EnvId id, Variant variant) {
  EnvSpec s;
  s.env_id = id;
  s.variant = variant;
  if (id == EnvId::drag_point) {
    s.action_limit = 0.1;
    if (variant == Variant::target) {
      s.global_gain = 0.9;
      s.distractor_patches = {
          Patch{Circle{{0.5, 0.5}, 0.2}, 0.2, 1.5707963267948966},
          Patch{Circle{{0.2, 0.15}, 0.1}, 0.2, 1.5707963267948966},
      };
    }
  } else {
    s.action_limit = 0.05;
    s.chain = ChainParams{8, 0.08, 20, 0.005};
    if (variant == Variant::target) {
      s.global_gain = 0.9;
      s.obstacles = {Circle{{0.5, 0.3}, 0.1}};
    }
  }
  return s;
}

std::size_t state_dim(const EnvSpec& spec) {
  return spec.env_id == EnvId::drag_point ? 2 : 2 * static_cast<std::size_t>(spec.chain.n_points);
}

std::size_t action_dim(EnvId id) { return 2 * controlled_points(id); }

std::size_t controlled_points(EnvId id) { return id == EnvId::drag_point ? 1 : 2; }

std::size_t chain_midpoint_index(int n_points) {
  return static_cast<std::size_t>((n_points + 1) / 2 - 1);
}

Vec2 goal_feature(EnvId id, std::span<const double> state) {
  if (id == EnvId::drag_point) return {state[0], state[1]};
  const std::size_t m = chain_midpoint_index(static_cast<int>(state.size() / 2));
  return {state[2 * m], state[2 * m + 1]};
}

double state_distance(EnvId id, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::shape, "state_distance on states of different length");
  if (id == EnvId::drag_point && a.size() != 2) fail(ErrorKind::shape, "drag_point states have 2 entries");
  if (id == EnvId::chain_rope_2d && (a.size() < 6 || a.size() % 2 != 0)) {
    fail(ErrorKind::shape, "chain states hold an even number (>= 6) of entries");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

bool in_any_patch(const EnvSpec& spec, const Vec2& p) {
  return std::any_of(spec.distractor_patches.begin(), spec.distractor_patches.end(),
                     [&](const Patch& patch) { return patch.region.contains(p); });
}

namespace {

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

Vec2 clamp_to_bounds(const Box& b, Vec2 p) {
  return {clampd(p[0], b.lo[0], b.hi[0]), clampd(p[1], b.lo[1], b.hi[1])};
}

// Pushes p radially onto the boundary of every obstacle containing it.
Vec2 project_out(const std::vector<Circle>& obstacles, Vec2 p) {
  for (const auto& c : obstacles) {
    const double dx = p[0] - c.center[0];
    const double dy = p[1] - c.center[1];
    const double d = std::hypot(dx, dy);
    if (d >= c.radius) continue;
    if (d < 1e-12) {
      p = {c.center[0], c.center[1] + c.radius};
    } else {
      p = {c.center[0] + dx / d * c.radius, c.center[1] + dy / d * c.radius};
    }
  }
  return p;
}

double clearance(const EnvSpec& spec, const Vec2& p) {
  double best = std::numeric_limits<double>::infinity();
  auto check = [&](const Circle& c) {
    best = std::min(best, std::hypot(p[0] - c.center[0], p[1] - c.center[1]) - c.radius);
  };
  for (const auto& c : spec.obstacles) check(c);
  for (const auto& patch : spec.distractor_patches) check(patch.region);
  return best;
}

Vec2 point(std::span<const double> s, std::size_t i) { return {s[2 * i], s[2 * i + 1]}; }

void set_point(State& s, std::size_t i, const Vec2& p) {
  s[2 * i] = p[0];
  s[2 * i + 1] = p[1];
}

State step_drag_point(const EnvSpec& spec, std::span<const double> state, const Action& a) {
  if (state.size() != 2) fail(ErrorKind::shape, "drag_point state has 2 entries");
  const Vec2 s{state[0], state[1]};
  double dx = spec.global_gain * a[0];
  double dy = spec.global_gain * a[1];
  for (const auto& patch : spec.distractor_patches) {
    if (!patch.region.contains(s)) continue;
    const double c = std::cos(patch.deflection);
    const double sn = std::sin(patch.deflection);
    const double rx = patch.gain * (c * dx - sn * dy);
    const double ry = patch.gain * (sn * dx + c * dy);
    dx = rx;
    dy = ry;
    break;
  }
  Vec2 next{s[0] + dx, s[1] + dy};
  next = project_out(spec.obstacles, next);
  next = clamp_to_bounds(spec.bounds, next);
  return {next[0], next[1]};
}

struct ChainSolver {
  const EnvSpec& spec;
  std::size_t n;
  double length;

  // Gauss-Seidel distance projection with both endpoints pinned.
  void project_lengths(State& s, bool reverse) const {
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const std::size_t i = reverse ? n - 2 - k : k;
      const std::size_t j = i + 1;
      const double dx = s[2 * j] - s[2 * i];
      const double dy = s[2 * j + 1] - s[2 * i + 1];
      const double d = std::hypot(dx, dy);
      if (d < 1e-12) continue;
      const double f = (d - length) / d;
      const double cx = f * dx;
      const double cy = f * dy;
      const bool pin_i = i == 0;
      const bool pin_j = j == n - 1;
      if (pin_i && pin_j) continue;
      if (pin_i) {
        s[2 * j] -= cx;
        s[2 * j + 1] -= cy;
      } else if (pin_j) {
        s[2 * i] += cx;
        s[2 * i + 1] += cy;
      } else {
        s[2 * i] += 0.5 * cx;
        s[2 * i + 1] += 0.5 * cy;
        s[2 * j] -= 0.5 * cx;
        s[2 * j + 1] -= 0.5 * cy;
      }
    }
  }

  void project_interior(State& s) const {
    for (std::size_t i = 1; i + 1 < n; ++i) {
      Vec2 p = project_out(spec.obstacles, point(s, i));
      set_point(s, i, clamp_to_bounds(spec.bounds, p));
    }
  }

  void gravity(State& s) const {
    for (std::size_t i = 1; i + 1 < n; ++i) s[2 * i + 1] -= spec.chain.gravity_pull;
  }

  double length_violation(const State& s) const {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double d = std::hypot(s[2 * i + 2] - s[2 * i], s[2 * i + 3] - s[2 * i + 1]);
      worst = std::max(worst, std::abs(d - length));
    }
    return worst;
  }

  double penetration(const State& s) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = point(s, i);
      for (const auto& c : spec.obstacles) {
        worst = std::max(worst, c.radius - std::hypot(p[0] - c.center[0], p[1] - c.center[1]));
      }
    }
    return worst;
  }

  // relax_iters rounds of (length projection, gravity, obstacle projection),
  // then constraint-only sweeps until lengths and obstacles hold to 1e-9.
  bool relax(State& s) const {
    for (int it = 0; it < spec.chain.relax_iters; ++it) {
      project_lengths(s, false);
      gravity(s);
      project_interior(s);
    }
    for (int it = 0; it < 20000; ++it) {
      project_lengths(s, false);
      project_lengths(s, true);
      project_interior(s);
      if (length_violation(s) < 1e-9 && penetration(s) < 1e-9) return true;
    }
    return false;
  }
};

double endpoint_separation(const Vec2& a, const Vec2& b) { return std::hypot(b[0] - a[0], b[1] - a[1]); }

State step_chain(const EnvSpec& spec, std::span<const double> state, const Action& a) {
  const std::size_t n = static_cast<std::size_t>(spec.chain.n_points);
  if (state.size() != 2 * n) fail(ErrorKind::shape, "chain state length does not match n_points");
  const ChainSolver solver{spec, n, spec.chain.segment_length};
  const double max_sep = 0.98 * spec.chain.segment_length * static_cast<double>(n - 1);

  const Vec2 e0 = point(state, 0);
  const Vec2 e1 = point(state, n - 1);
  auto moved = [&](double t) {
    Vec2 m0{e0[0] + t * spec.global_gain * a[0], e0[1] + t * spec.global_gain * a[1]};
    Vec2 m1{e1[0] + t * spec.global_gain * a[2], e1[1] + t * spec.global_gain * a[3]};
    m0 = clamp_to_bounds(spec.bounds, project_out(spec.obstacles, m0));
    m1 = clamp_to_bounds(spec.bounds, project_out(spec.obstacles, m1));
    return std::pair{m0, m1};
  };

  // Grippers stop where the chain would go taut.
  double t = 1.0;
  if (auto [m0, m1] = moved(1.0); endpoint_separation(m0, m1) > max_sep) {
    double lo = 0.0;
    double hi = 1.0;
    for (int k = 0; k < 40; ++k) {
      const double mid = 0.5 * (lo + hi);
      auto [p0, p1] = moved(mid);
      (endpoint_separation(p0, p1) > max_sep ? hi : lo) = mid;
    }
    t = lo;
  }
  auto [m0, m1] = moved(t);
  State prev(state.begin(), state.end());
  if (endpoint_separation(m0, m1) > max_sep) return prev;

  State next = prev;
  set_point(next, 0, m0);
  set_point(next, n - 1, m1);
  if (!solver.relax(next)) return prev;  // snagged: constraints cannot all hold
  return next;
}

}  // namespace

Action clip_action(const EnvSpec& spec, std::span<const double> action) {
  const std::size_t k = controlled_points(spec.env_id);
  if (action.size() != 2 * k) fail(ErrorKind::shape, "action length does not match env");
  Action out(action.begin(), action.end());
  for (std::size_t i = 0; i < k; ++i) {
    const double m = std::hypot(out[2 * i], out[2 * i + 1]);
    if (m > spec.action_limit) {
      out[2 * i] *= spec.action_limit / m;
      out[2 * i + 1] *= spec.action_limit / m;
    }
  }
  return out;
}

State env_step(const EnvSpec& spec, std::span<const double> state, std::span<const double> action) {
  const Action a = clip_action(spec, action);
  return spec.env_id == EnvId::drag_point ? step_drag_point(spec, state, a) : step_chain(spec, state, a);
}

State settle_chain(const EnvSpec& spec, State state) {
  const std::size_t n = static_cast<std::size_t>(spec.chain.n_points);
  const ChainSolver solver{spec, n, spec.chain.segment_length};
  for (int round = 0; round < 5000; ++round) {
    State next = state;
    if (!solver.relax(next)) return state;
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) change = std::max(change, std::abs(next[i] - state[i]));
    state = std::move(next);
    if (change < 1e-13) break;
  }
  return state;
}

State env_reset(const EnvSpec& spec, std::uint64_t rng_seed) {
  validate(spec);
  Rng rng(rng_seed);
  const auto& b = spec.bounds;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    if (spec.env_id == EnvId::drag_point) {
      const Vec2 p{rng.uniform(b.lo[0], b.hi[0]), rng.uniform(b.lo[1], b.hi[1])};
      if (clearance(spec, p) >= spec.action_limit) return {p[0], p[1]};
      continue;
    }
    const std::size_t n = static_cast<std::size_t>(spec.chain.n_points);
    const double sep = 0.7 * spec.chain.segment_length * static_cast<double>(n - 1);
    const double h = b.hi[1] - b.lo[1];
    const Vec2 c{rng.uniform(b.lo[0] + 0.5 * sep, b.hi[0] - 0.5 * sep),
                 rng.uniform(b.lo[1] + 0.55 * h, b.hi[1] - 0.1 * h)};
    State s(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double f = static_cast<double>(i) / static_cast<double>(n - 1);
      set_point(s, i, {c[0] - 0.5 * sep + f * sep, c[1]});
    }
    s = settle_chain(spec, std::move(s));
    bool clear = true;
    for (std::size_t i = 0; i < n && clear; ++i) clear = clearance(spec, point(s, i)) >= spec.action_limit;
    if (clear) return s;
  }
  fail(ErrorKind::environment, "environment too cluttered: no free start state after 10000 attempts");
}

Action sample_random_action(const EnvSpec& spec, Rng& rng) {
  const std::size_t k = controlled_points(spec.env_id);
  Action a(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double mag = rng.uniform(0.0, spec.action_limit);
    a[2 * i] = mag * std::cos(theta);
    a[2 * i + 1] = mag * std::sin(theta);
  }
  return a;
}

bool is_similar_region(const EnvSpec& spec_target, const EnvSpec& spec_source, const Transition& t,
                       double gamma) {
  if (spec_target.env_id != spec_source.env_id || t.env_id != spec_target.env_id) {
    fail(ErrorKind::config, "is_similar_region needs specs and transition of one env_id");
  }
  const State via_source = env_step(spec_source, t.state, t.action);
  const State via_target = env_step(spec_target, t.state, t.action);
  return state_distance(t.env_id, via_source, via_target) < gamma;
}

std::vector<double> occupancy_grid(const EnvSpec& spec, int resolution) {
  if (resolution < 4) fail(ErrorKind::config, "occupancy grid resolution must be >= 4");
  const auto& b = spec.bounds;
  const std::size_t r = static_cast<std::size_t>(resolution);
  std::vector<double> grid(r * r, 0.0);
  const double cw = (b.hi[0] - b.lo[0]) / resolution;
  const double ch = (b.hi[1] - b.lo[1]) / resolution;
  for (std::size_t row = 0; row < r; ++row) {
    for (std::size_t col = 0; col < r; ++col) {
      const Vec2 centre{b.lo[0] + (static_cast<double>(col) + 0.5) * cw,
                        b.lo[1] + (static_cast<double>(row) + 0.5) * ch};
      const bool occupied = std::any_of(spec.obstacles.begin(), spec.obstacles.end(),
                                        [&](const Circle& c) { return c.contains(centre); });
      grid[row * r + col] = occupied ? 1.0 : 0.0;
    }
  }
  return grid;
}

nlohmann::ordered_json spec_to_json(const EnvSpec& spec) {
  nlohmann::ordered_json j;
  j["env_id"] = to_string(spec.env_id);
  j["variant"] = to_string(spec.variant);
  j["bounds"] = {{"lo", spec.bounds.lo}, {"hi", spec.bounds.hi}};
  auto obstacles = nlohmann::ordered_json::array();
  for (const auto& c : spec.obstacles) obstacles.push_back({{"center", c.center}, {"radius", c.radius}});
  j["obstacles"] = obstacles;
  auto patches = nlohmann::ordered_json::array();
  for (const auto& p : spec.distractor_patches) {
    patches.push_back({{"center", p.region.center},
                       {"radius", p.region.radius},
                       {"gain", p.gain},
                       {"deflection", p.deflection}});
  }
  j["distractor_patches"] = patches;
  j["global_gain"] = spec.global_gain;
  j["chain"] = {{"n_points", spec.chain.n_points},
                {"segment_length", spec.chain.segment_length},
                {"relax_iters", spec.chain.relax_iters},
                {"gravity_pull", spec.chain.gravity_pull}};
  j["action_limit"] = spec.action_limit;
  return j;
}

EnvSpec spec_from_json(const nlohmann::json& doc) {
  ObjectReader r(doc, "env spec");
  const EnvId id = env_id_from_string(r.require<std::string>("env_id"));
  const Variant variant = variant_from_string(r.require<std::string>("variant"));
  EnvSpec s = default_spec(id, variant);
  if (r.has("bounds")) {
    ObjectReader br(r.at("bounds"), "env spec.bounds");
    s.bounds.lo = br.require<Vec2>("lo");
    s.bounds.hi = br.require<Vec2>("hi");
    br.finish();
  }
  if (r.has("obstacles")) {
    s.obstacles.clear();
    for (const auto& o : r.at("obstacles")) {
      ObjectReader orr(o, "env spec.obstacles[]");
      s.obstacles.push_back(Circle{orr.require<Vec2>("center"), orr.require<double>("radius")});
      orr.finish();
    }
  }
  if (r.has("distractor_patches")) {
    s.distractor_patches.clear();
    for (const auto& p : r.at("distractor_patches")) {
      ObjectReader pr(p, "env spec.distractor_patches[]");
      Patch patch;
      patch.region = Circle{pr.require<Vec2>("center"), pr.require<double>("radius")};
      patch.gain = pr.require<double>("gain");
      patch.deflection = pr.get<double>("deflection", 0.0);
      pr.finish();
      s.distractor_patches.push_back(patch);
    }
  }
  s.global_gain = r.get<double>("global_gain", s.global_gain);
  if (r.has("chain")) {
    ObjectReader cr(r.at("chain"), "env spec.chain");
    s.chain.n_points = cr.get<int>("n_points", s.chain.n_points);
    s.chain.segment_length = cr.get<double>("segment_length", s.chain.segment_length);
    s.chain.relax_iters = cr.get<int>("relax_iters", s.chain.relax_iters);
    s.chain.gravity_pull = cr.get<double>("gravity_pull", s.chain.gravity_pull);
    cr.finish();
  }
  s.action_limit = r.get<double>("action_limit", s.action_limit);
  r.finish();
  validate(s);
  return s;
}

nlohmann::ordered_json transition_to_json(const Transition& t) {
  nlohmann::ordered_json j;
  j["env_id"] = to_string(t.env_id);
  j["variant"] = to_string(t.variant);
  j["episode_id"] = t.episode_id;
  j["step_index"] = t.step_index;
  j["state"] = t.state;
  j["action"] = t.action;
  j["next_state"] = t.next_state;
  return j;
}

Transition transition_from_json(const nlohmann::json& doc) {
  try {
    Transition t;
    t.env_id = env_id_from_string(doc.at("env_id").get<std::string>());
    t.variant = variant_from_string(doc.at("variant").get<std::string>());
    t.episode_id = doc.at("episode_id").get<std::int64_t>();
    t.step_index = doc.at("step_index").get<std::int64_t>();
    t.state = doc.at("state").get<State>();
    t.action = doc.at("action").get<Action>();
    t.next_state = doc.at("next_state").get<State>();
    if (t.action.size() != action_dim(t.env_id) || t.state.size() != t.next_state.size()) {
      fail(ErrorKind::shape, "transition dimensions inconsistent with env_id");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed transition: ") + e.what());
  }
}

void write_transitions(const std::string& path, const std::vector<Transition>& data) {
  std::ostringstream out;
  for (const auto& t : data) out << transition_to_json(t).dump() << '\n';
  write_text_file(path, out.str());
}

std::vector<Transition> read_transitions(const std::string& path) {
  std::vector<Transition> out;
  for (const auto& row : read_json_lines(path)) out.push_back(transition_from_json(row));
  return out;
}

}  // namespace focus::envs
