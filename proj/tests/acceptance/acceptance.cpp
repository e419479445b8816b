// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "focus/cli.hpp"
#include "focus/config.hpp"
#include "focus/dynamics.hpp"
#include "focus/harness.hpp"
#include "focus/json_util.hpp"
#include "focus/mde.hpp"
#include "focus/online.hpp"
#include "focus/planner.hpp"
#include "focus/rng.hpp"
#include "../unit/support.hpp"

using namespace focus;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

config::RunConfig shipped() { return config::load_config(FOCUS_SOURCE_DIR "/configs/drag_point.json"); }

// ---- shared source model ---------------------------------------------------

struct Source {
  harness::SourceData data;
  harness::SourceModel model;
};

const Source& source() {
  static const Source s = [] {
    const auto cfg = shipped();
    Source out;
    out.data = harness::collect_source(cfg, cfg.seed);
    out.model = harness::train_source_model(cfg, out.data, cfg.seed);
    std::cerr << "source model: gamma " << out.model.gamma << '\n';
    return out;
  }();
  return s;
}

// ---- criteria 1 and 2 ------------------------------------------------------

struct Validation {
  harness::Benchmark bench;
  std::vector<harness::ValidationRow> rows;
  double seconds = 0.0;
};

const Validation& validation() {
  static const Validation v = [] {
    const auto cfg = shipped();
    const auto t0 = std::chrono::steady_clock::now();
    const auto& src = source();
    Validation out;
    out.bench = harness::make_benchmark(cfg.env.source, cfg.env.target, cfg.env.similarity_gamma, cfg.benchmark,
                                        cfg.seed);
    out.rows = harness::run_validation(cfg, src.model.model, src.model.gamma, out.bench);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return v;
}

Outcome criterion_1() {
  const auto cfg = shipped();
  const auto& v = validation();
  const auto summary = harness::summarize_validation(v.rows);
  std::map<dynamics::AdaptMode, harness::SummaryRow> by;
  for (const auto& s : summary) by[s.mode] = s;
  const auto& f = by.at(dynamics::AdaptMode::focus);
  const auto& a = by.at(dynamics::AdaptMode::all_data);
  const auto& l = by.at(dynamics::AdaptMode::low_initial_error);
  const bool sizes = v.bench.train.size() == 2000 && v.bench.validation.size() == 300 && f.n_seeds == 10;
  const bool pass = sizes && f.mean_val_mse < a.mean_val_mse && f.mean_val_mse < l.mean_val_mse &&
                    a.p_focus_less < 0.05 && l.p_focus_less < 0.05;
  std::string d = "distractor " + fmt("%.3f", v.bench.distractor_fraction()) + ", mean val mse focus " +
                  fmt("%.4g", f.mean_val_mse) + " all_data " + fmt("%.4g", a.mean_val_mse) + " (p " +
                  fmt("%.4g", a.p_focus_less) + ") low_initial_error " + fmt("%.4g", l.mean_val_mse) + " (p " +
                  fmt("%.4g", l.p_focus_less) + "), " + std::to_string(f.n_seeds) + " seeds, " +
                  fmt("%.0f", v.seconds) + " s";
  (void)cfg;
  return {pass, d};
}

Outcome criterion_2() {
  const auto& v = validation();
  const double bin = 1.0 / static_cast<double>(dynamics::kHistogramBins);
  bool pass = true;
  double min_gain = std::numeric_limits<double>::infinity();
  double max_mid = 0.0;
  double min_low = 1.0;
  std::size_t seeds = 0;
  for (const auto& r : v.rows) {
    if (r.mode != dynamics::AdaptMode::focus) continue;
    ++seeds;
    const dynamics::EpochStats* e1 = nullptr;
    const dynamics::EpochStats* e20 = nullptr;
    for (const auto& e : r.report.epochs) {
      if (e.epoch == 1) e1 = &e;
      if (e.epoch == 20) e20 = &e;
    }
    if (!e1 || !e20 || &r.report.epochs.back() != e20) {
      pass = false;
      continue;
    }
    // A bin counts toward (0.1, 0.9) whenever it overlaps that interval and
    // toward the near-zero mass only when it lies wholly below 0.1.
    std::size_t total = 0, mid = 0, low = 0;
    for (std::size_t k = 0; k < dynamics::kHistogramBins; ++k) {
      const double lo = static_cast<double>(k) * bin;
      const double hi = static_cast<double>(k + 1) * bin;
      total += e20->histogram[k];
      if (hi > 0.1 && lo < 0.9) mid += e20->histogram[k];
      if (hi <= 0.1) low += e20->histogram[k];
    }
    const double gain = e20->frac_below_gamma - e1->frac_below_gamma;
    const double mid_frac = static_cast<double>(mid) / static_cast<double>(total);
    const double low_frac = static_cast<double>(low) / static_cast<double>(total);
    min_gain = std::min(min_gain, gain);
    max_mid = std::max(max_mid, mid_frac);
    min_low = std::min(min_low, low_frac);
    pass = pass && gain >= 0.15 && mid_frac <= 0.10 && low_frac >= 0.05;
  }
  pass = pass && seeds > 0;
  return {pass, "over " + std::to_string(seeds) + " focus seeds: min below-gamma gain " + fmt("%.3f", min_gain) +
                    ", max mid-weight mass " + fmt("%.4f", max_mid) + ", min near-zero mass " +
                    fmt("%.3f", min_low)};
}

// ---- criteria 3 and 8 ------------------------------------------------------

struct OnlineRuns {
  std::map<online::Method, std::vector<std::vector<online::MetricsRow>>> rows;  // per seed
  std::vector<double> gated_similar;
  std::vector<double> ungated_similar;
  double seconds = 0.0;
};

double similar_fraction(const online::OnlineSettings& s, const std::vector<online::EpisodeRecord>& eps) {
  std::size_t n = 0, similar = 0;
  for (const auto& ep : eps) {
    for (const auto& t : ep.executed_transitions) {
      ++n;
      if (envs::is_similar_region(s.target_spec, s.source_spec, t, s.similarity_gamma)) ++similar;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(similar) / static_cast<double>(n);
}

const OnlineRuns& online_runs() {
  static const OnlineRuns r = [] {
    const auto cfg = shipped();
    const auto& src = source();
    const auto t0 = std::chrono::steady_clock::now();
    OnlineRuns out;
    test::TempDir dir("acceptance_online");
    const std::vector<online::Method> methods{online::Method::focus, online::Method::all_data,
                                              online::Method::all_data_no_mde};
    for (auto m : methods) {
      for (auto seed : cfg.online.seeds) {
        const std::string run_dir =
            m == online::Method::focus ? dir.str("focus_seed" + std::to_string(seed)) : std::string();
        out.rows[m].push_back(
            harness::run_online(cfg, m, seed, src.model.model, src.model.gamma, src.data.train, run_dir));
      }
      std::cerr << online::to_string(m) << " done after " << seconds_since(t0) << " s\n";
    }
    // Exploration comparison with the iteration-1 models of each focus run.
    const auto settings = config::online_settings(cfg, src.model.gamma);
    for (auto seed : cfg.online.seeds) {
      const fs::path it1 = fs::path(dir.str("focus_seed" + std::to_string(seed))) / "iter_1";
      const auto model = dynamics::load_checkpoint((it1 / "dynamics.ckpt").string()).model;
      const auto mde = mde::load_checkpoint((it1 / "mde.ckpt").string());
      const std::uint64_t s = derive_seed(seed, "exploration");
      auto gated = settings.planner;
      gated.use_mde = true;
      auto ungated = settings.planner;
      ungated.use_mde = false;
      const int e = settings.episodes_per_iteration;
      out.gated_similar.push_back(
          similar_fraction(settings, online::run_episodes(settings, model, &mde, gated, settings.exec, e, s, 0)));
      out.ungated_similar.push_back(
          similar_fraction(settings, online::run_episodes(settings, model, nullptr, ungated, settings.exec, e, s, 0)));
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

std::vector<double> seed_mean(const std::vector<std::vector<online::MetricsRow>>& runs,
                              double online::MetricsRow::*field) {
  std::vector<double> m(runs.front().size(), 0.0);
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.size(); ++i) m[i] += run[i].*field / static_cast<double>(runs.size());
  }
  return m;
}

std::string curve(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.2f", x);
  return s;
}

Outcome criterion_3() {
  const auto& r = online_runs();
  const auto cfg = shipped();
  const auto f = seed_mean(r.rows.at(online::Method::focus), &online::MetricsRow::success);
  const auto n = seed_mean(r.rows.at(online::Method::all_data_no_mde), &online::MetricsRow::success);
  const auto fp = seed_mean(r.rows.at(online::Method::focus), &online::MetricsRow::frac_plans_reach_goal);
  const auto ap = seed_mean(r.rows.at(online::Method::all_data), &online::MetricsRow::frac_plans_reach_goal);
  const int last = cfg.online.iterations;
  const double threshold = 0.8 * f.at(last);
  // Iterations needed to reach the threshold; never reaching it counts as infinite.
  auto reach = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] >= threshold) return static_cast<int>(i);
    return std::numeric_limits<int>::max();
  };
  const int rf = reach(f);
  const int rn = reach(n);
  const bool final_ok = f.at(last) >= n.at(last);
  const bool speed_ok = rf <= rn;
  const bool alldata_ok = ap.at(1) <= fp.at(1);
  auto it = [](int i) { return i == std::numeric_limits<int>::max() ? std::string("never") : std::to_string(i); };
  const std::string d = "success focus [" + curve(f) + "] no_mde [" + curve(n) + "]; 80% of focus final reached at " +
                        it(rf) + " vs " + it(rn) + "; iteration-1 plan reach all_data " + fmt("%.2f", ap.at(1)) +
                        " focus " + fmt("%.2f", fp.at(1)) + "; " + fmt("%.0f", r.seconds) + " s";
  return {final_ok && speed_ok && alldata_ok, d};
}

Outcome criterion_8() {
  const auto& r = online_runs();
  std::size_t wins = 0;
  std::string d;
  for (std::size_t k = 0; k < r.gated_similar.size(); ++k) {
    if (r.gated_similar[k] > r.ungated_similar[k]) ++wins;
    d += (d.empty() ? "" : ", ") + fmt("%.3f", r.gated_similar[k]) + " vs " + fmt("%.3f", r.ungated_similar[k]);
  }
  const bool pass = 2 * wins > r.gated_similar.size();
  return {pass, "similar fraction gated vs ungated per seed: " + d + "; gated higher in " + std::to_string(wins) + "/" +
                    std::to_string(r.gated_similar.size())};
}

// ---- criterion 4 -----------------------------------------------------------

std::vector<envs::Transition> random_transitions(const envs::EnvSpec& spec, std::size_t n, Rng& rng) {
  std::vector<envs::Transition> out;
  for (std::size_t i = 0; i < n; ++i) {
    envs::Transition t;
    t.env_id = spec.env_id;
    t.variant = spec.variant;
    t.state = envs::env_reset(spec, rng.next());
    t.action = envs::sample_random_action(spec, rng);
    t.next_state = envs::env_step(spec, t.state, t.action);
    out.push_back(std::move(t));
  }
  return out;
}

dynamics::DynamicsModel random_model(Rng& rng, const std::vector<envs::Transition>& data) {
  dynamics::DynamicsModel m;
  m.env_id = envs::EnvId::drag_point;
  m.net = nn::mlp_init({4, 12, 2}, nn::Activation::tanh, nn::OutputActivation::identity, rng.next());
  RowMatrix in, out;
  for (const auto& t : data) {
    std::vector<double> x = t.state;
    x.insert(x.end(), t.action.begin(), t.action.end());
    in.push_row(x);
    out.push_row(t.next_state);
  }
  m.input_norm = dynamics::Normalizer::fit(in);
  m.output_norm = dynamics::Normalizer::fit(out);
  return m;
}

Outcome criterion_4() {
  constexpr int kInstances = 100;
  constexpr double kEps = 1e-5;
  const auto spec = envs::default_spec(envs::EnvId::drag_point, envs::Variant::target);
  double mse_worst = 0.0, focus_worst = 0.0, mde_worst = 0.0;
  Rng rng(4);
  for (int inst = 0; inst < kInstances; ++inst) {
    const auto p = nn::mlp_init({3, 10, 2}, nn::Activation::tanh, nn::OutputActivation::identity, rng.next());
    RowMatrix x(6, 3), y(6, 2);
    for (double& v : x.data) v = rng.uniform(-1, 1);
    for (double& v : y.data) v = rng.uniform(-1, 1);
    const nn::OutputLoss loss = [&](std::size_t r, std::span<const double> o, std::span<double> d) {
      double v = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) {
        const double e = o[i] - y.row(r)[i];
        v += e * e;
        d[i] = 2.0 * e;
      }
      return v;
    };
    const auto fd = nn::finite_diff_grad(p, [&](const nn::MlpParams& q) { return nn::loss_and_grad(q, x, loss).loss; }, kEps);
    mse_worst = std::max(mse_worst, test::max_rel_error(nn::loss_and_grad(p, x, loss).grads, fd));
  }
  for (int inst = 0; inst < kInstances; ++inst) {
    const auto batch = random_transitions(spec, 8, rng);
    const auto model = random_model(rng, batch);
    dynamics::WeightSchedule sched;
    sched.gamma = rng.uniform(0.01, 2.0);
    const int j = static_cast<int>(rng.index(20));
    std::vector<double> w;
    for (const auto& t : batch) w.push_back(dynamics::focus_weight(dynamics::prediction_error_sq(model, t), j, sched));
    const auto fd = nn::finite_diff_grad(
        model.net,
        [&](const nn::MlpParams& q) {
          auto m = model;
          m.net = q;
          return dynamics::weighted_loss(m, batch, w);
        },
        kEps);
    focus_worst = std::max(focus_worst,
                           test::max_rel_error(dynamics::focused_loss_and_grad(model, batch, j, sched).grads, fd));
  }
  for (int inst = 0; inst < kInstances; ++inst) {
    const auto data = random_transitions(spec, 10, rng);
    const auto model = random_model(rng, data);
    const auto examples = mde::make_mde_examples(model, spec, data, 4);
    mde::MdeNetConfig net;
    net.hidden = {8};
    net.activation = nn::Activation::tanh;
    mde::MdeTrainConfig fit;
    fit.epochs = 0;
    const auto m = mde::fine_tune_mde(mde::make_mde(4, mde::kDefaultK, 2, 2, net, rng.next()), examples, fit, 1).model;
    const auto fd = nn::finite_diff_grad(
        m.net,
        [&](const nn::MlpParams& q) {
          auto mm = m;
          mm.net = q;
          return mde::mean_mde_loss(mm, examples);
        },
        kEps);
    mde_worst = std::max(mde_worst, test::max_rel_error(mde::mde_loss_and_grad(m, examples).grads, fd));
  }
  const bool pass = mse_worst < 1e-4 && focus_worst < 1e-4 && mde_worst < 1e-4;
  return {pass, "max relative error mse " + fmt("%.2e", mse_worst) + ", focused " + fmt("%.2e", focus_worst) +
                    ", estimator " + fmt("%.2e", mde_worst)};
}

// ---- criterion 5 -----------------------------------------------------------

Outcome criterion_5() {
  const double a = mde::mde_loss(0.5, 0.0, 10.0);
  const double b = mde::mde_loss(0.0, 0.5, 10.0);
  bool pass = std::abs(a - 0.25) < 1e-12 && std::abs(b - 0.25 * std::exp(-5.0)) < 1e-12;
  dynamics::WeightSchedule s{dynamics::ScheduleKind::affine, 5.0, 3.0, 0.08, false};
  double worst_half = 0.0;
  for (int j = 0; j < 100; ++j) worst_half = std::max(worst_half, std::abs(dynamics::focus_weight(s.gamma, j, s) - 0.5));
  pass = pass && worst_half < 1e-12;
  const double w = dynamics::focus_weight(s.gamma + 1.0, 0, s);  // phi(0) = 3
  pass = pass && std::abs(w - 0.047425873) < 1e-9;
  return {pass, "mde_loss " + fmt("%.17g", a) + ", " + fmt("%.17g", b) + "; max |w(gamma) - 0.5| " +
                    fmt("%.1e", worst_half) + "; w(phi=3, +1) " + fmt("%.12f", w)};
}

// ---- criterion 6 -----------------------------------------------------------

Outcome criterion_6() {
  planner::PlannerConfig cfg;
  cfg.d_max = 0.05;
  const int n = 100000;
  int accepted = 0;
  Rng rng(6);
  for (int i = 0; i < n; ++i) {
    if (planner::mde_gate(cfg.d_max * (1.0 + rng.uniform()), cfg, rng) == planner::GateDecision::accept_random)
      ++accepted;
  }
  const double p = 0.01;
  const double frac = static_cast<double>(accepted) / n;
  const bool gate_ok = std::abs(frac - p) <= 3.0 * std::sqrt(p * (1.0 - p) / n);

  const auto free = envs::default_spec(envs::EnvId::drag_point, envs::Variant::source);
  planner::PlannerConfig oracle_cfg;
  oracle_cfg.use_mde = false;
  int reached = 0;
  for (int run = 0; run < 100; ++run) {
    const auto start = envs::env_reset(free, rng.next());
    const planner::GoalRegion goal{{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}, 0.05};
    const auto prop = test::oracle_propagator(free);
    if (planner::plan(prop, nullptr, free, start, goal, oracle_cfg, rng.next()).reached_goal) ++reached;
  }
  return {gate_ok && reached >= 95,
          "random-accept fraction " + fmt("%.5f", frac) + " over 1e5 trials; oracle plans reaching goal " +
              std::to_string(reached) + "/100"};
}

// ---- criterion 7 -----------------------------------------------------------

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  if (code != 0) std::cerr << err.str();
  return code;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

// Parses an artifact and re-serializes it; empty string for unknown kinds.
std::optional<std::string> reserialize(const fs::path& p) {
  const std::string name = p.filename().string();
  const std::string parent = p.parent_path().filename().string();
  const std::string text = read_text_file(p.string());
  auto per_line = [&](auto fn) {
    std::istringstream in(text);
    std::string out;
    for (std::string line; std::getline(in, line);) out += fn(json::parse(line)) + "\n";
    return out;
  };
  if (name == "dynamics.ckpt") return dynamics::checkpoint_to_json(dynamics::load_checkpoint(p.string())).dump() + "\n";
  if (name == "mde.ckpt") return mde::checkpoint_to_json(mde::load_checkpoint(p.string())).dump() + "\n";
  if (name == "episodes.jsonl")
    return per_line([](const json& j) { return online::episode_to_json(online::episode_from_json(j)).dump(); });
  if (name.ends_with(".jsonl"))
    return per_line([](const json& j) { return envs::transition_to_json(envs::transition_from_json(j)).dump(); });
  if (name == "train_report.csv") return dynamics::train_report_csv(dynamics::train_report_from_csv(text));
  if (name == "per_seed.csv" || (name == "validation.csv" && parent != "eval"))
    return harness::validation_csv(harness::validation_from_csv(text));
  if (name == "metrics.csv") {
    std::string out = online::metrics_csv_header();
    for (const auto& r : online::metrics_from_csv(text)) out += online::metrics_csv_row(r);
    return out;
  }
  if (name == "manifest.json" && parent.starts_with("iter_"))
    return online::summary_to_json(online::summary_from_json(json::parse(text))).dump(2) + "\n";
  return std::nullopt;
}

Outcome criterion_7() {
  test::TempDir dir("acceptance_replay");
  auto cfg = shipped();
  cfg.nn.hidden = {16, 16};
  cfg.train.source_transitions = 400;
  cfg.train.source_validation = 100;
  cfg.train.epochs = 5;
  cfg.adapt.epochs = 3;
  cfg.mde.hidden = {16};
  cfg.mde.epochs = 3;
  cfg.planner.max_nodes = 150;
  cfg.online.iterations = 2;
  cfg.online.episodes_per_iteration = 2;
  cfg.online.exec.max_steps = 6;
  cfg.online.seeds = {0, 1};
  cfg.eval.n_episodes = 3;
  cfg.benchmark.train_size = 300;
  cfg.benchmark.validation_size = 50;
  cfg.validate.seeds = {0, 1, 2};
  const std::string config_path = dir.str("small.json");
  std::ofstream(config_path) << config::config_to_json(cfg).dump(2);
  const fs::path root = dir.path;
  auto p = [&](const char* rel) { return (root / rel).string(); };

  struct Step {
    const char* out;
    std::vector<std::string> args;
  };
  const std::vector<Step> steps{
      {"collect", {"collect-source", "--config", config_path}},
      {"model", {"train-source", "--config", config_path, "--source", p("collect")}},
      {"bench", {"make-benchmark", "--config", config_path}},
      {"adapt", {"adapt", "--config", config_path, "--source", p("model"), "--benchmark", p("bench")}},
      {"validate", {"validate", "--config", config_path, "--source", p("model"), "--benchmark", p("bench")}},
      {"online", {"online", "--config", config_path, "--source", p("model")}},
      {"eval", {"eval", "--config", config_path, "--run", p("online")}},
      {"report", {"report", "--run", p("adapt"), "--run", p("validate"), "--run", p("online")}},
  };
  std::size_t csv_compared = 0, roundtrips = 0;
  std::vector<std::string> problems;
  for (const auto& s : steps) {
    auto args = s.args;
    args.insert(args.end(), {"--out", p(s.out)});
    if (cli(args) != 0) {
      problems.push_back(std::string(s.out) + " failed");
      continue;
    }
    const fs::path again = root / (std::string(s.out) + "_replay");
    const std::string command = s.args.front();
    if (cli({command, "--config", (root / s.out / "manifest.json").string(), "--out", again.string()}) != 0) {
      problems.push_back(std::string(s.out) + " replay failed");
      continue;
    }
    const auto first = files_under(root / s.out);
    if (first != files_under(again)) problems.push_back(std::string(s.out) + " replay wrote a different file set");
    for (const auto& rel : first) {
      const auto a = read_text_file((root / s.out / rel).string());
      if (rel.extension() == ".csv") {
        ++csv_compared;
        if (!fs::exists(again / rel) || read_text_file((again / rel).string()) != a)
          problems.push_back(std::string(s.out) + "/" + rel.string() + " differs on replay");
      }
      if (const auto back = reserialize(root / s.out / rel)) {
        ++roundtrips;
        if (*back != a) problems.push_back(std::string(s.out) + "/" + rel.string() + " does not round-trip");
      }
    }
    const auto m1 = read_json_file((root / s.out / "manifest.json").string());
    const auto m2 = read_json_file((again / "manifest.json").string());
    if (m1.at("outputs") != m2.at("outputs")) problems.push_back(std::string(s.out) + " output hashes differ");
  }
  std::string d = std::to_string(steps.size()) + " commands replayed, " + std::to_string(csv_compared) +
                  " CSV files compared, " + std::to_string(roundtrips) + " artifacts round-tripped";
  for (const auto& pr : problems) d += "; " + pr;
  return {problems.empty() && csv_compared > 0, d};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> all{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},
      {5, criterion_5}, {6, criterion_6}, {7, criterion_7}, {8, criterion_8},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& [id, fn] : all) {
    if (!chosen.empty() && !chosen.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d: %s (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
