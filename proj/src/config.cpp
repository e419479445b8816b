#include "focus/config.hpp"

#include <cmath>

#include "focus/error.hpp"
#include "focus/json_util.hpp"

namespace focus::config {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void parse_env(const json& doc, EnvSection& s) {
  ObjectReader r(doc, "env");
  const auto id = envs::env_id_from_string(r.get<std::string>("id", "drag_point"));
  s.source = r.has("source") ? envs::spec_from_json(r.at("source")) : envs::default_spec(id, envs::Variant::source);
  s.target = r.has("target") ? envs::spec_from_json(r.at("target")) : envs::default_spec(id, envs::Variant::target);
  s.similarity_gamma = r.get<double>("similarity_gamma", s.similarity_gamma);
  r.finish();
  if (s.source.env_id != id || s.target.env_id != id) fail(ErrorKind::config, "env.source/env.target must match env.id");
  if (s.source.variant != envs::Variant::source) fail(ErrorKind::config, "env.source must be a source variant");
  if (s.target.variant != envs::Variant::target) fail(ErrorKind::config, "env.target must be a target variant");
  if (!(s.similarity_gamma >= 0.0)) fail(ErrorKind::config, "env.similarity_gamma must be >= 0");
}

void parse_nn(const json& doc, NnSection& s) {
  ObjectReader r(doc, "nn");
  s.hidden = r.get<std::vector<std::size_t>>("hidden", s.hidden);
  s.activation = nn::activation_from_string(r.get<std::string>("activation", std::string(nn::to_string(s.activation))));
  r.finish();
}

void parse_train(const json& doc, TrainSection& s) {
  ObjectReader r(doc, "train");
  s.source_transitions = r.get<std::size_t>("source_transitions", s.source_transitions);
  s.source_validation = r.get<std::size_t>("source_validation", s.source_validation);
  s.episode_len = r.get<std::size_t>("episode_len", s.episode_len);
  s.epochs = r.get<int>("epochs", s.epochs);
  s.batch_size = r.get<std::size_t>("batch_size", s.batch_size);
  s.learning_rate = r.get<double>("learning_rate", s.learning_rate);
  s.final_learning_rate = r.get<double>("final_learning_rate", s.final_learning_rate);
  s.exec = kernels::exec_from_string(r.get<std::string>("exec", std::string(kernels::to_string(s.exec))));
  r.finish();
  if (s.source_transitions == 0 || s.source_validation == 0) fail(ErrorKind::config, "train: dataset sizes must be >= 1");
}

void parse_adapt(const json& doc, AdaptSection& s) {
  ObjectReader r(doc, "adapt");
  s.mode = dynamics::adapt_mode_from_string(r.get<std::string>("mode", std::string(dynamics::to_string(s.mode))));
  if (r.has("schedule")) {
    ObjectReader sr(r.at("schedule"), "adapt.schedule");
    s.schedule.kind = dynamics::schedule_kind_from_string(sr.get<std::string>("kind", "affine"));
    const bool linear = s.schedule.kind == dynamics::ScheduleKind::linear;
    s.schedule.slope = sr.get<double>("slope", linear ? 0.5 : 5.0);
    s.schedule.offset = sr.get<double>("offset", linear ? 0.0 : 3.0);
    s.schedule.scale_by_gamma = sr.get<bool>("scale_by_gamma", false);
    sr.finish();
  }
  if (r.has("gamma") && !r.at("gamma").is_null()) s.gamma = r.require<double>("gamma");
  s.gamma_percentile = r.get<double>("gamma_percentile", s.gamma_percentile);
  s.epochs = r.get<int>("epochs", s.epochs);
  s.batch_size = r.get<std::size_t>("batch_size", s.batch_size);
  s.learning_rate = r.get<double>("learning_rate", s.learning_rate);
  r.finish();
  if (s.gamma && !(*s.gamma > 0.0)) fail(ErrorKind::config, "adapt.gamma must be > 0");
  if (!(s.gamma_percentile >= 0.0 && s.gamma_percentile <= 100.0)) {
    fail(ErrorKind::config, "adapt.gamma_percentile must lie in [0, 100]");
  }
}

void parse_mde(const json& doc, MdeSection& s) {
  ObjectReader r(doc, "mde");
  s.resolution = r.get<int>("resolution", s.resolution);
  s.k_mde = r.get<double>("k_mde", s.k_mde);
  s.hidden = r.get<std::vector<std::size_t>>("hidden", s.hidden);
  s.activation = nn::activation_from_string(r.get<std::string>("activation", std::string(nn::to_string(s.activation))));
  s.epochs = r.get<int>("epochs", s.epochs);
  s.batch_size = r.get<std::size_t>("batch_size", s.batch_size);
  s.learning_rate = r.get<double>("learning_rate", s.learning_rate);
  s.final_learning_rate = r.get<double>("final_learning_rate", s.final_learning_rate);
  if (r.has("d_max") && !r.at("d_max").is_null()) s.d_max = r.require<double>("d_max");
  s.d_max_factor = r.get<double>("d_max_factor", s.d_max_factor);
  r.finish();
  if (s.resolution < 4) fail(ErrorKind::config, "mde.resolution must be >= 4");
  if (!(s.k_mde > 0.0)) fail(ErrorKind::config, "mde.k_mde must be > 0");
  if (s.d_max && !(*s.d_max > 0.0)) fail(ErrorKind::config, "mde.d_max must be > 0");
  if (!(s.d_max_factor > 0.0)) fail(ErrorKind::config, "mde.d_max_factor must be > 0");
  if (s.final_learning_rate < 0.0) fail(ErrorKind::config, "mde.final_learning_rate must be >= 0");
}

void parse_planner(const json& doc, PlannerSection& s) {
  ObjectReader r(doc, "planner");
  s.random_accept_prob = r.get<double>("random_accept_prob", s.random_accept_prob);
  s.goal_bias = r.get<double>("goal_bias", s.goal_bias);
  s.max_nodes = r.get<std::size_t>("max_nodes", s.max_nodes);
  s.candidate_actions_per_expand = r.get<std::size_t>("candidate_actions_per_expand", s.candidate_actions_per_expand);
  s.allow_random_accepts = r.get<bool>("allow_random_accepts", s.allow_random_accepts);
  r.finish();
  if (!(s.random_accept_prob >= 0.0 && s.random_accept_prob <= 1.0)) {
    fail(ErrorKind::config, "planner.random_accept_prob must lie in [0, 1]");
  }
  if (!(s.goal_bias >= 0.0 && s.goal_bias <= 1.0)) fail(ErrorKind::config, "planner.goal_bias must lie in [0, 1]");
  if (s.max_nodes == 0) fail(ErrorKind::config, "planner.max_nodes must be >= 1");
  if (s.candidate_actions_per_expand == 0) {
    fail(ErrorKind::config, "planner.candidate_actions_per_expand must be >= 1");
  }
}

void parse_online(const json& doc, OnlineSection& s) {
  ObjectReader r(doc, "online");
  s.iterations = r.get<int>("iterations", s.iterations);
  s.episodes_per_iteration = r.get<int>("episodes_per_iteration", s.episodes_per_iteration);
  s.exec.max_steps = r.get<int>("max_steps", s.exec.max_steps);
  s.exec.max_replans = r.get<int>("max_replans", s.exec.max_replans);
  s.exec.replan_threshold = r.get<double>("replan_threshold", s.exec.replan_threshold);
  if (r.has("start") && !r.at("start").is_null()) s.start = r.require<envs::State>("start");
  if (r.has("goal")) s.goal = planner::goal_from_json(r.at("goal"));
  s.goal_centers = r.get<std::vector<std::vector<double>>>("goal_centers", s.goal_centers);
  for (const auto& c : s.goal_centers) {
    if (c.size() != 2) fail(ErrorKind::config, "online.goal_centers entries must be 2-vectors");
  }
  if (r.has("methods")) {
    s.methods.clear();
    for (const auto& m : r.require<std::vector<std::string>>("methods")) s.methods.push_back(online::method_from_string(m));
  }
  s.seeds = r.get<std::vector<std::uint64_t>>("seeds", s.seeds);
  r.finish();
  if (s.iterations < 0) fail(ErrorKind::config, "online.iterations must be >= 0");
  if (s.episodes_per_iteration < 1) fail(ErrorKind::config, "online.episodes_per_iteration must be >= 1");
  if (s.exec.max_steps < 1) fail(ErrorKind::config, "online.max_steps must be >= 1");
  if (s.exec.max_replans < 0) fail(ErrorKind::config, "online.max_replans must be >= 0");
  if (!(s.exec.replan_threshold >= 0.0)) fail(ErrorKind::config, "online.replan_threshold must be >= 0");
}

void parse_eval(const json& doc, EvalSection& s) {
  ObjectReader r(doc, "eval");
  s.n_episodes = r.get<int>("n_episodes", s.n_episodes);
  s.step_budget_factor = r.get<int>("step_budget_factor", s.step_budget_factor);
  r.finish();
  if (s.n_episodes < 1) fail(ErrorKind::config, "eval.n_episodes must be >= 1");
  if (s.step_budget_factor < 1) fail(ErrorKind::config, "eval.step_budget_factor must be >= 1");
}

void parse_benchmark(const json& doc, BenchmarkSection& s) {
  ObjectReader r(doc, "benchmark");
  s.train_size = r.get<std::size_t>("train_size", s.train_size);
  s.validation_size = r.get<std::size_t>("validation_size", s.validation_size);
  s.distractor_fraction = r.get<double>("distractor_fraction", s.distractor_fraction);
  s.episode_len = r.get<std::size_t>("episode_len", s.episode_len);
  s.max_validation_rollouts = r.get<std::size_t>("max_validation_rollouts", s.max_validation_rollouts);
  r.finish();
  if (s.train_size == 0 || s.validation_size == 0) fail(ErrorKind::config, "benchmark sizes must be >= 1");
  if (!(s.distractor_fraction >= 0.0 && s.distractor_fraction < 1.0)) {
    fail(ErrorKind::config, "benchmark.distractor_fraction must lie in [0, 1)");
  }
  if (s.episode_len == 0) fail(ErrorKind::config, "benchmark.episode_len must be >= 1");
}

void parse_validate(const json& doc, ValidateSection& s) {
  ObjectReader r(doc, "validate");
  if (r.has("modes")) {
    s.modes.clear();
    for (const auto& m : r.require<std::vector<std::string>>("modes")) s.modes.push_back(dynamics::adapt_mode_from_string(m));
  }
  s.seeds = r.get<std::vector<std::uint64_t>>("seeds", s.seeds);
  r.finish();
  if (s.seeds.empty()) fail(ErrorKind::config, "validate.seeds must not be empty");
}

void parse_io(const json& doc, IoSection& s) {
  ObjectReader r(doc, "io");
  s.run_root = r.get<std::string>("run_root", s.run_root);
  r.finish();
}

}  // namespace

RunConfig parse_config(const json& doc) {
  ObjectReader r(doc, "config");
  RunConfig c;
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  if (r.has("env")) parse_env(r.at("env"), c.env);
  if (r.has("nn")) parse_nn(r.at("nn"), c.nn);
  if (r.has("train")) parse_train(r.at("train"), c.train);
  if (r.has("adapt")) parse_adapt(r.at("adapt"), c.adapt);
  if (r.has("mde")) parse_mde(r.at("mde"), c.mde);
  if (r.has("planner")) parse_planner(r.at("planner"), c.planner);
  if (r.has("online")) parse_online(r.at("online"), c.online);
  if (r.has("eval")) parse_eval(r.at("eval"), c.eval);
  if (r.has("benchmark")) parse_benchmark(r.at("benchmark"), c.benchmark);
  if (r.has("validate")) parse_validate(r.at("validate"), c.validate);
  if (r.has("io")) parse_io(r.at("io"), c.io);
  r.finish();
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["env"] = {{"id", envs::to_string(c.env.source.env_id)},
              {"source", envs::spec_to_json(c.env.source)},
              {"target", envs::spec_to_json(c.env.target)},
              {"similarity_gamma", c.env.similarity_gamma}};
  j["nn"] = {{"hidden", c.nn.hidden}, {"activation", nn::to_string(c.nn.activation)}};
  j["train"] = {{"source_transitions", c.train.source_transitions},
                {"source_validation", c.train.source_validation},
                {"episode_len", c.train.episode_len},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"final_learning_rate", c.train.final_learning_rate},
                {"exec", kernels::to_string(c.train.exec)}};
  j["adapt"] = {{"mode", dynamics::to_string(c.adapt.mode)},
                {"schedule",
                 {{"kind", dynamics::to_string(c.adapt.schedule.kind)},
                  {"slope", c.adapt.schedule.slope},
                  {"offset", c.adapt.schedule.offset},
                  {"scale_by_gamma", c.adapt.schedule.scale_by_gamma}}},
                {"gamma", c.adapt.gamma ? ordered_json(*c.adapt.gamma) : ordered_json(nullptr)},
                {"gamma_percentile", c.adapt.gamma_percentile},
                {"epochs", c.adapt.epochs},
                {"batch_size", c.adapt.batch_size},
                {"learning_rate", c.adapt.learning_rate}};
  j["mde"] = {{"resolution", c.mde.resolution},
              {"k_mde", c.mde.k_mde},
              {"hidden", c.mde.hidden},
              {"activation", nn::to_string(c.mde.activation)},
              {"epochs", c.mde.epochs},
              {"batch_size", c.mde.batch_size},
              {"learning_rate", c.mde.learning_rate},
              {"final_learning_rate", c.mde.final_learning_rate},
              {"d_max", c.mde.d_max ? ordered_json(*c.mde.d_max) : ordered_json(nullptr)},
              {"d_max_factor", c.mde.d_max_factor}};
  j["planner"] = {{"random_accept_prob", c.planner.random_accept_prob},
                  {"goal_bias", c.planner.goal_bias},
                  {"max_nodes", c.planner.max_nodes},
                  {"candidate_actions_per_expand", c.planner.candidate_actions_per_expand},
                  {"allow_random_accepts", c.planner.allow_random_accepts}};
  ordered_json methods = ordered_json::array();
  for (auto m : c.online.methods) methods.push_back(online::to_string(m));
  j["online"] = {{"iterations", c.online.iterations},
                 {"episodes_per_iteration", c.online.episodes_per_iteration},
                 {"max_steps", c.online.exec.max_steps},
                 {"max_replans", c.online.exec.max_replans},
                 {"replan_threshold", c.online.exec.replan_threshold},
                 {"start", c.online.start ? ordered_json(*c.online.start) : ordered_json(nullptr)},
                 {"goal", planner::goal_to_json(c.online.goal)},
                 {"goal_centers", c.online.goal_centers},
                 {"methods", methods},
                 {"seeds", c.online.seeds}};
  j["eval"] = {{"n_episodes", c.eval.n_episodes}, {"step_budget_factor", c.eval.step_budget_factor}};
  j["benchmark"] = {{"train_size", c.benchmark.train_size},
                    {"validation_size", c.benchmark.validation_size},
                    {"distractor_fraction", c.benchmark.distractor_fraction},
                    {"episode_len", c.benchmark.episode_len},
                    {"max_validation_rollouts", c.benchmark.max_validation_rollouts}};
  ordered_json modes = ordered_json::array();
  for (auto m : c.validate.modes) modes.push_back(dynamics::to_string(m));
  j["validate"] = {{"modes", modes}, {"seeds", c.validate.seeds}};
  j["io"] = {{"run_root", c.io.run_root}};
  return j;
}

RunConfig load_config(const std::string& path) {
  const json doc = read_json_file(path);
  if (doc.is_object() && doc.contains("resolved_config")) return parse_config(doc.at("resolved_config"));
  return parse_config(doc);
}

dynamics::NetConfig net_config(const RunConfig& c) { return {c.nn.hidden, c.nn.activation}; }

dynamics::TrainConfig source_train_config(const RunConfig& c) {
  dynamics::TrainConfig t;
  t.opt.learning_rate = c.train.learning_rate;
  t.final_learning_rate = c.train.final_learning_rate;
  t.epochs = c.train.epochs;
  t.batch_size = c.train.batch_size;
  t.exec = c.train.exec;
  return t;
}

dynamics::TrainConfig adapt_train_config(const RunConfig& c) {
  dynamics::TrainConfig t;
  t.opt.learning_rate = c.adapt.learning_rate;
  t.epochs = c.adapt.epochs;
  t.batch_size = c.adapt.batch_size;
  t.exec = c.train.exec;
  return t;
}

dynamics::WeightSchedule schedule_with_gamma(const RunConfig& c, double gamma) {
  auto s = c.adapt.schedule;
  s.gamma = c.adapt.gamma ? *c.adapt.gamma : gamma;
  dynamics::validate(s);
  return s;
}

mde::MdeNetConfig mde_net_config(const RunConfig& c) { return {c.mde.hidden, c.mde.activation}; }

mde::MdeTrainConfig mde_train_config(const RunConfig& c) {
  mde::MdeTrainConfig t;
  t.opt.learning_rate = c.mde.learning_rate;
  t.epochs = c.mde.epochs;
  t.batch_size = c.mde.batch_size;
  t.final_learning_rate = c.mde.final_learning_rate;
  t.exec = c.train.exec;
  return t;
}

planner::PlannerConfig planner_config(const RunConfig& c, double gamma) {
  planner::PlannerConfig p;
  const double g = c.adapt.gamma ? *c.adapt.gamma : gamma;
  p.d_max = c.mde.d_max ? *c.mde.d_max : c.mde.d_max_factor * std::sqrt(g);
  p.random_accept_prob = c.planner.random_accept_prob;
  p.goal_bias = c.planner.goal_bias;
  p.max_nodes = c.planner.max_nodes;
  p.candidate_actions_per_expand = c.planner.candidate_actions_per_expand;
  p.allow_random_accepts = c.planner.allow_random_accepts;
  planner::validate(p);
  return p;
}

online::OnlineSettings online_settings(const RunConfig& c, double gamma) {
  online::OnlineSettings s;
  s.source_spec = c.env.source;
  s.target_spec = c.env.target;
  s.similarity_gamma = c.env.similarity_gamma;
  s.task.start = c.online.start;
  s.task.goal = c.online.goal;
  s.task.goal_centers = c.online.goal_centers;
  s.iterations = c.online.iterations;
  s.episodes_per_iteration = c.online.episodes_per_iteration;
  s.schedule = schedule_with_gamma(c, gamma);
  s.adapt_train = adapt_train_config(c);
  s.mde_net = mde_net_config(c);
  s.resolution = c.mde.resolution;
  s.k_mde = c.mde.k_mde;
  s.mde_train = mde_train_config(c);
  s.planner = planner_config(c, gamma);
  s.exec = c.online.exec;
  return s;
}

}  // namespace focus::config
