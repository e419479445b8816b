#include "focus/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "focus/error.hpp"
#include "focus/json_util.hpp"
#include "focus/mde.hpp"
#include "focus/rng.hpp"

namespace focus::harness {

SourceData collect_source(const config::RunConfig& cfg, std::uint64_t seed) {
  const auto& t = cfg.train;
  SourceData d;
  d.train = online::collect_random_source_data(cfg.env.source, t.source_transitions, t.episode_len,
                                               derive_seed(seed, "source_train"), 0);
  const auto first_val = static_cast<std::int64_t>((t.source_transitions + t.episode_len - 1) / t.episode_len);
  d.validation = online::collect_random_source_data(cfg.env.source, t.source_validation, t.episode_len,
                                                    derive_seed(seed, "source_validation"), first_val);
  return d;
}

SourceModel train_source_model(const config::RunConfig& cfg, const SourceData& data, std::uint64_t seed) {
  auto r = dynamics::train_source(data.train, config::net_config(cfg), config::source_train_config(cfg),
                                  derive_seed(seed, "source_model"));
  SourceModel out;
  out.model = std::move(r.model);
  out.report = std::move(r.report);
  out.gamma = cfg.adapt.gamma ? *cfg.adapt.gamma
                              : dynamics::error_percentile(out.model, data.validation, cfg.adapt.gamma_percentile);
  if (!(out.gamma > 0.0)) fail(ErrorKind::numerical, "gamma resolved to a non-positive value");
  return out;
}

double Benchmark::distractor_fraction() const {
  return train.empty() ? 0.0 : static_cast<double>(train_dissimilar) / static_cast<double>(train.size());
}

std::string transition_hash(const Transition& t) {
  nlohmann::ordered_json j;
  j["state"] = t.state;
  j["action"] = t.action;
  j["next_state"] = t.next_state;
  return git_blob_hash(j.dump());
}

namespace {

std::vector<envs::Circle> steer_targets(const envs::EnvSpec& spec) {
  std::vector<envs::Circle> out;
  for (const auto& p : spec.distractor_patches) out.push_back(p.region);
  for (const auto& o : spec.obstacles) out.push_back(o);
  return out;
}

// Heads for the region centre with jittered heading until well inside, then
// moves in a random direction; magnitudes stay in the upper half of the limit.
envs::Action steer_action(const envs::EnvSpec& spec, const envs::State& s, const envs::Circle& region, Rng& rng) {
  const auto f = envs::goal_feature(spec.env_id, s);
  const double vx = region.center[0] - f[0];
  const double vy = region.center[1] - f[1];
  const bool inside = std::hypot(vx, vy) < 0.5 * region.radius;
  const std::size_t points = envs::controlled_points(spec.env_id);
  envs::Action a(2 * points);
  for (std::size_t p = 0; p < points; ++p) {
    const double heading = inside ? rng.uniform(-std::numbers::pi, std::numbers::pi)
                                  : std::atan2(vy, vx) + rng.uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
    const double mag = spec.action_limit * rng.uniform(0.5, 1.0);
    a[2 * p] = mag * std::cos(heading);
    a[2 * p + 1] = mag * std::sin(heading);
  }
  return a;
}

constexpr std::uint64_t kSteerStartCandidates = 16;

struct RolloutStream {
  const envs::EnvSpec& source;
  const envs::EnvSpec& target;
  double gamma;
  std::size_t len;
  double want;  // requested dissimilar fraction
  std::uint64_t seed;
  std::vector<envs::Circle> regions;
  std::size_t seen = 0;
  std::size_t dissimilar = 0;
  std::size_t free_count = 0;
  std::size_t steered_count = 0;

  // One rollout of labelled transitions.
  std::vector<std::pair<Transition, bool>> next(std::int64_t episode_id, std::uint64_t index) {
    const bool steer = static_cast<double>(dissimilar) < want * static_cast<double>(seen);
    if (steer && regions.empty()) fail(ErrorKind::benchmark, "no distractor region to steer toward");
    const std::uint64_t r_seed = derive_seed(seed, index);
    Rng rng(derive_seed(r_seed, "actions"));
    const envs::Circle* region = steer ? &regions[rng.index(regions.size())] : nullptr;
    (steer ? steered_count : free_count) += 1;
    std::vector<std::pair<Transition, bool>> out;
    envs::State s = envs::env_reset(target, derive_seed(r_seed, "reset"));
    if (region) {
      // Steered rollouts start from the reset candidate closest to the region.
      double best = std::hypot(envs::goal_feature(target.env_id, s)[0] - region->center[0],
                               envs::goal_feature(target.env_id, s)[1] - region->center[1]);
      for (std::uint64_t c = 1; c < kSteerStartCandidates; ++c) {
        auto cand = envs::env_reset(target, derive_seed(derive_seed(r_seed, "reset"), c));
        const auto f = envs::goal_feature(target.env_id, cand);
        const double d = std::hypot(f[0] - region->center[0], f[1] - region->center[1]);
        if (d < best) {
          best = d;
          s = std::move(cand);
        }
      }
    }
    for (std::size_t k = 0; k < len; ++k) {
      Transition t;
      t.env_id = target.env_id;
      t.variant = envs::Variant::target;
      t.episode_id = episode_id;
      t.step_index = static_cast<std::int64_t>(k);
      t.state = s;
      t.action = envs::clip_action(target, region ? steer_action(target, s, *region, rng)
                                                  : envs::sample_random_action(target, rng));
      t.next_state = envs::env_step(target, t.state, t.action);
      s = t.next_state;
      const bool similar = envs::is_similar_region(target, source, t, gamma);
      ++seen;
      if (!similar) ++dissimilar;
      out.emplace_back(std::move(t), similar);
    }
    return out;
  }
};

}  // namespace

Benchmark make_benchmark(const envs::EnvSpec& source, const envs::EnvSpec& target, double similarity_gamma,
                         const config::BenchmarkSection& bench, std::uint64_t seed) {
  envs::validate(source);
  envs::validate(target);
  if (source.env_id != target.env_id) fail(ErrorKind::config, "benchmark source and target differ in env_id");
  if (target.variant != envs::Variant::target) fail(ErrorKind::config, "benchmark target must be a target variant");
  Benchmark b;
  RolloutStream train_stream{source, target, similarity_gamma, bench.episode_len, bench.distractor_fraction,
                             derive_seed(seed, "benchmark_train"), steer_targets(target)};
  std::int64_t episode = 0;
  while (b.train.size() < bench.train_size) {
    for (auto& [t, similar] : train_stream.next(episode, static_cast<std::uint64_t>(episode))) {
      if (b.train.size() == bench.train_size) break;
      if (!similar) ++b.train_dissimilar;
      b.train.push_back(std::move(t));
    }
    ++episode;
  }
  b.free_rollouts = train_stream.free_count;
  b.steered_rollouts = train_stream.steered_count;

  std::unordered_set<std::string> train_hashes;
  for (const auto& t : b.train) train_hashes.insert(transition_hash(t));
  RolloutStream val_stream{source, target, similarity_gamma, bench.episode_len, bench.distractor_fraction,
                           derive_seed(seed, "benchmark_validation"), steer_targets(target)};
  for (std::uint64_t r = 0; b.validation.size() < bench.validation_size; ++r) {
    if (r == bench.max_validation_rollouts) {
      fail(ErrorKind::benchmark, "only " + std::to_string(b.validation.size()) + " similar validation transitions of " +
                                     std::to_string(bench.validation_size) + " requested after " +
                                     std::to_string(r) + " rollouts (" + std::to_string(b.validation_candidates) +
                                     " candidates, " + std::to_string(b.validation_rejected) + " dissimilar)");
    }
    for (auto& [t, similar] : val_stream.next(episode, r)) {
      if (b.validation.size() == bench.validation_size) break;
      ++b.validation_candidates;
      if (!similar) {
        ++b.validation_rejected;
        continue;
      }
      if (train_hashes.count(transition_hash(t))) {
        ++b.validation_duplicates;
        continue;
      }
      b.validation.push_back(std::move(t));
    }
    ++episode;
    ++b.validation_rollouts;
  }
  return b;
}

ValidationRow adapt_and_score(const config::RunConfig& cfg, const dynamics::DynamicsModel& model0, double gamma,
                              const Benchmark& bench, dynamics::AdaptMode mode, std::uint64_t seed,
                              dynamics::DynamicsModel* adapted) {
  auto r = dynamics::fine_tune_dynamics(model0, bench.train, mode, config::schedule_with_gamma(cfg, gamma),
                                        config::adapt_train_config(cfg), derive_seed(seed, "adapt"));
  const auto errs = dynamics::prediction_errors_sq(r.model, bench.validation, cfg.train.exec);
  ValidationRow row;
  row.mode = mode;
  row.seed = seed;
  double sq = 0.0;
  double dist = 0.0;
  for (double e : errs) {
    sq += e;
    dist += std::sqrt(e);
  }
  row.val_mse = sq / static_cast<double>(errs.size());
  row.val_mean_dist = dist / static_cast<double>(errs.size());
  row.report = std::move(r.report);
  if (adapted) *adapted = std::move(r.model);
  return row;
}

std::vector<ValidationRow> run_validation(const config::RunConfig& cfg, const dynamics::DynamicsModel& model0,
                                          double gamma, const Benchmark& bench) {
  const auto& modes = cfg.validate.modes;
  const auto& seeds = cfg.validate.seeds;
  const std::size_t jobs = modes.size() * seeds.size();
  std::vector<ValidationRow> rows(jobs);
  std::vector<std::exception_ptr> errors(jobs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < jobs; ++k) {
    try {
      rows[k] = adapt_and_score(cfg, model0, gamma, bench, modes[k / seeds.size()], seeds[k % seeds.size()]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::vector<SummaryRow> summarize_validation(const std::vector<ValidationRow>& rows) {
  std::vector<dynamics::AdaptMode> order;
  std::map<dynamics::AdaptMode, std::map<std::uint64_t, const ValidationRow*>> by_mode;
  for (const auto& r : rows) {
    if (!by_mode.count(r.mode)) order.push_back(r.mode);
    if (!by_mode[r.mode].emplace(r.seed, &r).second) fail(ErrorKind::io, "duplicate (mode, seed) validation row");
  }
  const auto focus_it = by_mode.find(dynamics::AdaptMode::focus);
  std::vector<SummaryRow> out;
  for (auto mode : order) {
    const auto& m = by_mode[mode];
    SummaryRow s;
    s.mode = mode;
    s.n_seeds = m.size();
    std::vector<double> mse;
    std::vector<double> dist;
    for (const auto& [seed, r] : m) {
      mse.push_back(r->val_mse);
      dist.push_back(r->val_mean_dist);
    }
    s.mean_val_mse = stats::mean(mse);
    s.mean_val_mean_dist = stats::mean(dist);
    if (focus_it != by_mode.end()) {
      std::vector<double> x;
      std::vector<double> y;
      for (const auto& [seed, r] : m) {
        auto f = focus_it->second.find(seed);
        if (f == focus_it->second.end()) continue;
        x.push_back(f->second->val_mse);
        y.push_back(r->val_mse);
      }
      s.p_focus_less = stats::wilcoxon_less(x, y);
    }
    out.push_back(s);
  }
  return out;
}

std::string validation_csv(const std::vector<ValidationRow>& rows) {
  std::ostringstream out;
  out << "mode,seed,val_mse,val_mean_dist\n";
  for (const auto& r : rows) {
    out << dynamics::to_string(r.mode) << ',' << r.seed << ',' << format_double(r.val_mse) << ','
        << format_double(r.val_mean_dist) << '\n';
  }
  return out.str();
}

std::vector<ValidationRow> validation_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "mode,seed,val_mse,val_mean_dist") {
    fail(ErrorKind::io, "per-seed validation CSV has an unexpected header");
  }
  std::vector<ValidationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string mode, seed, mse, dist;
    if (!std::getline(ls, mode, ',') || !std::getline(ls, seed, ',') || !std::getline(ls, mse, ',') ||
        !std::getline(ls, dist)) {
      fail(ErrorKind::io, "malformed validation row: " + line);
    }
    ValidationRow r;
    try {
      r.mode = dynamics::adapt_mode_from_string(mode);
      r.seed = std::stoull(seed);
      r.val_mse = std::stod(mse);
      r.val_mean_dist = std::stod(dist);
    } catch (const std::logic_error&) {
      fail(ErrorKind::io, "malformed validation row: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "mode,n_seeds,mean_val_mse,mean_val_mean_dist,p_focus_less\n";
  for (const auto& r : rows) {
    out << dynamics::to_string(r.mode) << ',' << r.n_seeds << ',' << format_double(r.mean_val_mse) << ','
        << format_double(r.mean_val_mean_dist) << ',' << format_double(r.p_focus_less) << '\n';
  }
  return out.str();
}

std::uint64_t eval_seed(std::uint64_t seed, int iteration) {
  return derive_seed(derive_seed(seed, "eval"), static_cast<std::uint64_t>(iteration));
}

namespace {

online::MetricsRow eval_row(const config::RunConfig& cfg, const online::OnlineSettings& settings, online::Method method,
                            std::uint64_t seed, int iteration, const dynamics::DynamicsModel& model,
                            const mde::MdeModel& mde) {
  online::EvalConfig ec{cfg.eval.n_episodes, cfg.eval.step_budget_factor};
  const bool use = online::uses_mde(method);
  auto row = online::evaluate_checkpoint(model, use ? &mde : nullptr, settings, use, ec, eval_seed(seed, iteration));
  row.method = std::string(online::to_string(method));
  row.seed = seed;
  row.iteration = iteration;
  return row;
}

}  // namespace

std::vector<online::MetricsRow> run_online(const config::RunConfig& cfg, online::Method method, std::uint64_t seed,
                                           const dynamics::DynamicsModel& model0, double gamma,
                                           std::span<const Transition> source_train, const std::string& run_dir) {
  const auto settings = config::online_settings(cfg, gamma);
  // The initial estimator depends on the seed only, so every method starts from the same one.
  const auto mde0 = online::initial_estimator(model0, settings, source_train, derive_seed(seed, "mde_init"));
  std::vector<online::MetricsRow> rows;
  online::online_learn(settings, method, model0, mde0, derive_seed(seed, "online"), run_dir,
                       [&](int i, const dynamics::DynamicsModel& m, const mde::MdeModel& e) {
                         rows.push_back(eval_row(cfg, settings, method, seed, i, m, e));
                       });
  return rows;
}

std::vector<online::MetricsRow> evaluate_run_dir(const config::RunConfig& cfg, online::Method method,
                                                 std::uint64_t seed, double gamma, const std::string& run_dir) {
  const auto settings = config::online_settings(cfg, gamma);
  std::vector<online::MetricsRow> rows;
  for (int i = 0;; ++i) {
    const auto dir = std::filesystem::path(run_dir) / ("iter_" + std::to_string(i));
    if (!std::filesystem::exists(dir / "dynamics.ckpt")) break;
    const auto model = dynamics::load_checkpoint((dir / "dynamics.ckpt").string()).model;
    const auto mde = mde::load_checkpoint((dir / "mde.ckpt").string());
    rows.push_back(eval_row(cfg, settings, method, seed, i, model, mde));
  }
  if (rows.empty()) fail(ErrorKind::io, "no iter_<i>/dynamics.ckpt under " + run_dir);
  return rows;
}

std::string weight_histogram_csv(const dynamics::TrainReport& report) {
  std::ostringstream out;
  out << "epoch,bin_low,bin_high,count\n";
  const double width = 1.0 / static_cast<double>(dynamics::kHistogramBins);
  for (const auto& e : report.epochs) {
    for (std::size_t b = 0; b < dynamics::kHistogramBins; ++b) {
      out << e.epoch << ',' << format_double(static_cast<double>(b) * width) << ','
          << format_double(static_cast<double>(b + 1) * width) << ',' << e.histogram[b] << '\n';
    }
  }
  return out.str();
}

std::vector<CurvePoint> online_curves(const std::vector<online::MetricsRow>& rows, std::uint64_t seed) {
  std::vector<std::string> methods;
  std::map<std::pair<std::string, int>, std::vector<const online::MetricsRow*>> groups;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    groups[{r.method, r.iteration}].push_back(&r);
  }
  std::vector<CurvePoint> out;
  std::uint64_t k = 0;
  for (const auto& m : methods) {
    for (const auto& [key, group] : groups) {
      if (key.first != m) continue;
      std::vector<double> success;
      std::vector<double> given;
      std::vector<double> reach;
      for (const auto* r : group) {
        success.push_back(r->success);
        if (r->success_given_plan) given.push_back(*r->success_given_plan);
        reach.push_back(r->frac_plans_reach_goal);
      }
      for (auto [name, values] : {std::pair<const char*, std::vector<double>*>{"success", &success},
                                  {"success_given_plan", &given},
                                  {"frac_plans_reach_goal", &reach}}) {
        const std::uint64_t s = derive_seed(derive_seed(seed, "bootstrap"), k++);
        if (values->empty()) continue;
        CurvePoint p;
        p.method = m;
        p.iteration = key.second;
        p.metric = name;
        p.n_seeds = values->size();
        p.ci = stats::bootstrap_mean_ci(*values, kBootstrapResamples, 0.95, s);
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::string curves_csv(const std::vector<CurvePoint>& points) {
  std::ostringstream out;
  out << "method,iteration,metric,n_seeds,mean,ci_low,ci_high\n";
  for (const auto& p : points) {
    out << p.method << ',' << p.iteration << ',' << p.metric << ',' << p.n_seeds << ',' << format_double(p.ci.mean)
        << ',' << format_double(p.ci.lo) << ',' << format_double(p.ci.hi) << '\n';
  }
  return out.str();
}

}  // namespace focus::harness
