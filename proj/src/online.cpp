#include "focus/online.hpp"

#include <filesystem>
#include <sstream>

#include "focus/error.hpp"
#include "focus/json_util.hpp"
#include "focus/rng.hpp"

namespace focus::online {

std::string_view to_string(TerminatedBy t) {
  switch (t) {
    case TerminatedBy::goal: return "goal";
    case TerminatedBy::timeout: return "timeout";
    case TerminatedBy::budget: return "budget";
  }
  return "timeout";
}

TerminatedBy terminated_by_from_string(std::string_view s) {
  if (s == "goal") return TerminatedBy::goal;
  if (s == "timeout") return TerminatedBy::timeout;
  if (s == "budget") return TerminatedBy::budget;
  fail(ErrorKind::io, "unknown termination '" + std::string(s) + "'");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::focus: return "focus";
    case Method::all_data: return "all_data";
    case Method::all_data_no_mde: return "all_data_no_mde";
  }
  return "focus";
}

Method method_from_string(std::string_view s) {
  if (s == "focus") return Method::focus;
  if (s == "all_data") return Method::all_data;
  if (s == "all_data_no_mde") return Method::all_data_no_mde;
  fail(ErrorKind::config, "unknown method '" + std::string(s) + "'");
}

dynamics::AdaptMode adapt_mode(Method m) {
  return m == Method::focus ? dynamics::AdaptMode::focus : dynamics::AdaptMode::all_data;
}

bool uses_mde(Method m) { return m != Method::all_data_no_mde; }

GoalRegion episode_goal(const Task& task, std::uint64_t rng_seed) {
  GoalRegion g = task.goal;
  if (!task.goal_centers.empty()) {
    Rng rng(derive_seed(rng_seed, "goal"));
    g.center = task.goal_centers[rng.index(task.goal_centers.size())];
    if (g.center.size() != 2) fail(ErrorKind::config, "goal centers must be 2-vectors");
  }
  return g;
}

EpisodeRecord run_episode(const EnvSpec& spec, const planner::Propagator& propagate,
                          const planner::Estimator* estimator, const Task& task, const PlannerConfig& cfg,
                          const ExecConfig& exec, std::uint64_t rng_seed, std::int64_t episode_id) {
  if (exec.max_steps < 1) fail(ErrorKind::config, "max_steps must be >= 1");
  if (exec.max_replans < 0) fail(ErrorKind::config, "max_replans must be >= 0");
  if (!(exec.replan_threshold >= 0.0)) fail(ErrorKind::config, "replan_threshold must be >= 0");
  EpisodeRecord rec;
  rec.episode_id = episode_id;
  rec.goal = episode_goal(task, rng_seed);
  const GoalRegion& goal = rec.goal;
  rec.start_state = task.start ? *task.start : envs::env_reset(spec, derive_seed(rng_seed, "reset"));
  State obs = rec.start_state;
  if (planner::goal_check(obs, goal, spec.env_id)) {
    rec.success = true;
    rec.terminated_by = TerminatedBy::goal;
    return rec;
  }
  int steps = 0;
  const std::uint64_t plan_seed = derive_seed(rng_seed, "planner");
  for (std::uint64_t plan_index = 0;; ++plan_index) {
    Plan p = planner::plan(propagate, estimator, spec, obs, goal, cfg, derive_seed(plan_seed, plan_index));
    rec.plan_reached_goal = rec.plan_reached_goal || p.reached_goal;
    rec.plans.push_back(p);
    for (std::size_t k = 0; k < p.actions.size(); ++k) {
      Transition t;
      t.env_id = spec.env_id;
      t.variant = spec.variant;
      t.episode_id = episode_id;
      t.step_index = steps;
      t.state = obs;
      t.action = p.actions[k];
      t.next_state = envs::env_step(spec, obs, p.actions[k]);
      obs = t.next_state;
      rec.executed_transitions.push_back(std::move(t));
      ++steps;
      if (planner::goal_check(obs, goal, spec.env_id)) {
        rec.success = true;
        rec.terminated_by = TerminatedBy::goal;
        return rec;
      }
      if (steps >= exec.max_steps) {
        rec.terminated_by = TerminatedBy::timeout;
        return rec;
      }
      if (envs::state_distance(spec.env_id, obs, p.nodes[k + 1].state) > exec.replan_threshold) break;
    }
    if (rec.replan_count >= exec.max_replans) {
      rec.terminated_by = TerminatedBy::budget;
      return rec;
    }
    ++rec.replan_count;
  }
}

EpisodeRecord run_episode(const EnvSpec& spec, const dynamics::DynamicsModel& model, const mde::MdeModel* mde,
                          const Task& task, const PlannerConfig& cfg, const ExecConfig& exec, std::uint64_t rng_seed,
                          std::int64_t episode_id) {
  if (model.env_id != spec.env_id) fail(ErrorKind::config, "dynamics model and spec describe different envs");
  dynamics::Predictor predictor(model);
  const planner::Propagator propagate = [&](std::span<const double> s, std::span<const double> a) {
    return predictor(s, a);
  };
  if (cfg.use_mde) {
    if (mde == nullptr) fail(ErrorKind::config, "use_mde requires an estimator");
    mde::MdeScorer scorer(*mde, spec);
    const planner::Estimator estimate = [&](std::span<const double> s, std::span<const double> a,
                                            std::span<const double> sp) { return scorer(s, a, sp); };
    return run_episode(spec, propagate, &estimate, task, cfg, exec, rng_seed, episode_id);
  }
  return run_episode(spec, propagate, nullptr, task, cfg, exec, rng_seed, episode_id);
}

nlohmann::ordered_json episode_to_json(const EpisodeRecord& e) {
  nlohmann::ordered_json plans = nlohmann::ordered_json::array();
  for (const auto& p : e.plans) plans.push_back(planner::plan_to_json(p));
  nlohmann::ordered_json transitions = nlohmann::ordered_json::array();
  for (const auto& t : e.executed_transitions) transitions.push_back(envs::transition_to_json(t));
  nlohmann::ordered_json doc;
  doc["episode_id"] = e.episode_id;
  doc["start_state"] = e.start_state;
  doc["goal"] = planner::goal_to_json(e.goal);
  doc["plans"] = std::move(plans);
  doc["executed_transitions"] = std::move(transitions);
  doc["success"] = e.success;
  doc["plan_reached_goal"] = e.plan_reached_goal;
  doc["replan_count"] = e.replan_count;
  doc["terminated_by"] = to_string(e.terminated_by);
  return doc;
}

EpisodeRecord episode_from_json(const nlohmann::json& doc) {
  try {
    EpisodeRecord e;
    e.episode_id = doc.at("episode_id").get<std::int64_t>();
    e.start_state = doc.at("start_state").get<State>();
    e.goal = planner::goal_from_json(doc.at("goal"));
    for (const auto& p : doc.at("plans")) e.plans.push_back(planner::plan_from_json(p));
    for (const auto& t : doc.at("executed_transitions")) e.executed_transitions.push_back(envs::transition_from_json(t));
    e.success = doc.at("success").get<bool>();
    e.plan_reached_goal = doc.at("plan_reached_goal").get<bool>();
    e.replan_count = doc.at("replan_count").get<int>();
    e.terminated_by = terminated_by_from_string(doc.at("terminated_by").get<std::string>());
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::io, std::string("malformed episode record: ") + ex.what());
  }
}

double IterationSummary::similar_fraction() const {
  return new_transitions == 0 ? 0.0 : static_cast<double>(similar_transitions) / static_cast<double>(new_transitions);
}

nlohmann::ordered_json summary_to_json(const IterationSummary& s) {
  return {{"iteration", s.iteration},
          {"episodes", s.episodes},
          {"successes", s.successes},
          {"new_transitions", s.new_transitions},
          {"cumulative_transitions", s.cumulative_transitions},
          {"similar_transitions", s.similar_transitions},
          {"mde_final_loss", s.mde_final_loss}};
}

IterationSummary summary_from_json(const nlohmann::json& doc) {
  ObjectReader r(doc, "iteration manifest");
  IterationSummary s;
  s.iteration = r.require<int>("iteration");
  s.episodes = r.require<std::size_t>("episodes");
  s.successes = r.require<std::size_t>("successes");
  s.new_transitions = r.require<std::size_t>("new_transitions");
  s.cumulative_transitions = r.require<std::size_t>("cumulative_transitions");
  s.similar_transitions = r.require<std::size_t>("similar_transitions");
  s.mde_final_loss = r.require<double>("mde_final_loss");
  r.finish();
  return s;
}

mde::MdeModel initial_estimator(const dynamics::DynamicsModel& model0, const OnlineSettings& settings,
                                std::span<const Transition> source_data, std::uint64_t seed) {
  const std::size_t ds = model0.state_dim();
  const std::size_t da = model0.action_dim();
  auto m = mde::make_mde(settings.resolution, settings.k_mde, ds, da, settings.mde_net, derive_seed(seed, "init"));
  if (source_data.empty()) fail(ErrorKind::config, "initial estimator needs source transitions");
  auto examples = mde::make_mde_examples(model0, settings.target_spec, source_data, settings.resolution);
  return mde::fine_tune_mde(m, examples, settings.mde_train, derive_seed(seed, "train")).model;
}

std::vector<EpisodeRecord> run_episodes(const OnlineSettings& settings, const dynamics::DynamicsModel& model,
                                        const mde::MdeModel* mde, const PlannerConfig& cfg, const ExecConfig& exec,
                                        int n_episodes, std::uint64_t seed, std::int64_t first_episode_id) {
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(n_episodes, 0)));
  for (int e = 0; e < n_episodes; ++e) {
    out.push_back(run_episode(settings.target_spec, model, mde, settings.task, cfg, exec,
                              derive_seed(seed, static_cast<std::uint64_t>(e)), first_episode_id + e));
  }
  return out;
}

namespace {

std::string iter_dir(const std::string& run_dir, int i) {
  return (std::filesystem::path(run_dir) / ("iter_" + std::to_string(i))).string();
}

void save_dynamics(const std::string& path, const dynamics::DynamicsModel& model, const OnlineSettings& settings,
                   std::string mode) {
  dynamics::DynamicsCheckpoint c;
  c.model = model;
  c.gamma_used = settings.schedule.gamma;
  c.mode = std::move(mode);
  c.schedule = settings.schedule;
  dynamics::save_checkpoint(path, c);
}

}  // namespace

OnlineRunState online_learn(const OnlineSettings& settings, Method method, const dynamics::DynamicsModel& model0,
                            const mde::MdeModel& mde0, std::uint64_t seed, const std::string& run_dir,
                            const IterationHook& hook) {
  if (settings.iterations < 0) fail(ErrorKind::config, "iterations must be >= 0");
  if (settings.episodes_per_iteration < 1) fail(ErrorKind::config, "episodes_per_iteration must be >= 1");
  if (settings.target_spec.variant != envs::Variant::target) fail(ErrorKind::config, "online learning runs in a target spec");
  OnlineRunState state;
  state.dynamics = model0;
  state.mde = mde0;
  const bool write = !run_dir.empty();
  if (write) {
    save_dynamics(iter_dir(run_dir, 0) + "/dynamics.ckpt", model0, settings, "source");
    mde::save_checkpoint(iter_dir(run_dir, 0) + "/mde.ckpt", mde0);
  }
  if (hook) hook(0, model0, mde0);
  PlannerConfig cfg = settings.planner;
  cfg.use_mde = uses_mde(method);
  const int e_count = settings.episodes_per_iteration;
  for (int i = 1; i <= settings.iterations; ++i) {
    const std::uint64_t iter_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    auto episodes = run_episodes(settings, state.dynamics, cfg.use_mde ? &state.mde : nullptr, cfg, settings.exec,
                                 e_count, derive_seed(iter_seed, "episodes"),
                                 static_cast<std::int64_t>(i - 1) * e_count);
    IterationSummary summary;
    summary.iteration = i;
    summary.episodes = episodes.size();
    std::vector<Transition> shard;
    for (const auto& ep : episodes) {
      if (ep.success) ++summary.successes;
      for (const auto& t : ep.executed_transitions) {
        if (envs::is_similar_region(settings.target_spec, settings.source_spec, t, settings.similarity_gamma)) {
          ++summary.similar_transitions;
        }
        shard.push_back(t);
      }
    }
    summary.new_transitions = shard.size();
    state.dataset.insert(state.dataset.end(), shard.begin(), shard.end());
    summary.cumulative_transitions = state.dataset.size();

    dynamics::TrainReport report;
    if (!state.dataset.empty()) {
      auto ft = dynamics::fine_tune_dynamics(model0, state.dataset, adapt_mode(method), settings.schedule,
                                             settings.adapt_train, derive_seed(iter_seed, "dynamics"));
      state.dynamics = std::move(ft.model);
      report = std::move(ft.report);
      auto examples = mde::make_mde_examples(state.dynamics, settings.target_spec, state.dataset, settings.resolution);
      auto mt = mde::fine_tune_mde(state.mde, examples, settings.mde_train, derive_seed(iter_seed, "mde"));
      state.mde = std::move(mt.model);
      summary.mde_final_loss = mt.epoch_losses.empty() ? 0.0 : mt.epoch_losses.back();
    }
    state.iteration = i;
    state.summaries.push_back(summary);

    if (write) {
      const std::string dir = iter_dir(run_dir, i);
      save_dynamics(dir + "/dynamics.ckpt", state.dynamics, settings, std::string(dynamics::to_string(adapt_mode(method))));
      mde::save_checkpoint(dir + "/mde.ckpt", state.mde);
      std::ostringstream eps;
      for (const auto& ep : episodes) eps << episode_to_json(ep).dump() << '\n';
      write_text_file(dir + "/episodes.jsonl", eps.str());
      envs::write_transitions(dir + "/dataset_shard.jsonl", shard);
      write_text_file(dir + "/train_report.csv", dynamics::train_report_csv(report));
      write_text_file(dir + "/manifest.json", summary_to_json(summary).dump(2) + "\n");
    }
    if (hook) hook(i, state.dynamics, state.mde);
  }
  return state;
}

MetricsRow evaluate_checkpoint(const dynamics::DynamicsModel& model, const mde::MdeModel* mde,
                               const OnlineSettings& settings, bool use_mde, const EvalConfig& eval,
                               std::uint64_t seed) {
  if (eval.n_episodes <= 0) fail(ErrorKind::config, "evaluation needs n_episodes >= 1");
  if (eval.step_budget_factor < 1) fail(ErrorKind::config, "step_budget_factor must be >= 1");
  PlannerConfig cfg = settings.planner;
  cfg.use_mde = use_mde;
  cfg.allow_random_accepts = false;
  ExecConfig exec = settings.exec;
  exec.max_steps *= eval.step_budget_factor;
  const auto episodes = run_episodes(settings, model, mde, cfg, exec, eval.n_episodes, seed, 0);
  MetricsRow row;
  row.seed = seed;
  row.n_episodes = episodes.size();
  std::size_t success = 0;
  std::size_t planned = 0;
  std::size_t planned_success = 0;
  for (const auto& ep : episodes) {
    if (ep.success) ++success;
    if (ep.plan_reached_goal) {
      ++planned;
      if (ep.success) ++planned_success;
    }
  }
  const double n = static_cast<double>(episodes.size());
  row.success = static_cast<double>(success) / n;
  row.frac_plans_reach_goal = static_cast<double>(planned) / n;
  if (planned > 0) row.success_given_plan = static_cast<double>(planned_success) / static_cast<double>(planned);
  return row;
}

std::string metrics_csv_header() {
  return "method,seed,iteration,success,success_given_plan,frac_plans_reach_goal,n_episodes\n";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out << row.method << ',' << row.seed << ',' << row.iteration << ',' << format_double(row.success) << ','
      << (row.success_given_plan ? format_double(*row.success_given_plan) : "null") << ','
      << format_double(row.frac_plans_reach_goal) << ',' << row.n_episodes << '\n';
  return out.str();
}

std::vector<MetricsRow> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line + "\n" != metrics_csv_header()) fail(ErrorKind::io, "unexpected metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 7) fail(ErrorKind::io, "metrics row has wrong column count");
    MetricsRow r;
    r.method = c[0];
    r.seed = std::stoull(c[1]);
    r.iteration = std::stoi(c[2]);
    r.success = std::stod(c[3]);
    if (c[4] != "null") r.success_given_plan = std::stod(c[4]);
    r.frac_plans_reach_goal = std::stod(c[5]);
    r.n_episodes = std::stoull(c[6]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<Transition> collect_random_source_data(const EnvSpec& spec, std::size_t n_transitions,
                                                   std::size_t episode_len, std::uint64_t seed,
                                                   std::int64_t first_episode_id) {
  if (spec.variant != envs::Variant::source) fail(ErrorKind::config, "source data must come from a source spec");
  if (episode_len == 0) fail(ErrorKind::config, "episode_len must be >= 1");
  std::vector<Transition> out;
  out.reserve(n_transitions);
  for (std::uint64_t ep = 0; out.size() < n_transitions; ++ep) {
    const std::uint64_t ep_seed = derive_seed(seed, ep);
    State s = envs::env_reset(spec, derive_seed(ep_seed, "reset"));
    Rng rng(derive_seed(ep_seed, "actions"));
    for (std::size_t k = 0; k < episode_len && out.size() < n_transitions; ++k) {
      Transition t;
      t.env_id = spec.env_id;
      t.variant = spec.variant;
      t.episode_id = first_episode_id + static_cast<std::int64_t>(ep);
      t.step_index = static_cast<std::int64_t>(k);
      t.state = s;
      t.action = envs::sample_random_action(spec, rng);
      t.next_state = envs::env_step(spec, s, t.action);
      s = t.next_state;
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace focus::online
