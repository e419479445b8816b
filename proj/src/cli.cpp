#include "focus/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <optional>
#include <sstream>

#include "focus/config.hpp"
#include "focus/harness.hpp"
#include "focus/json_util.hpp"
#include "focus/logging.hpp"
#include "focus/mde.hpp"
#include "focus/rng.hpp"

namespace focus::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::benchmark: return 5;
    case ErrorKind::numerical: return 6;
    case ErrorKind::shape: return 7;
    case ErrorKind::environment: return 8;
    case ErrorKind::internal: return 9;
  }
  return 9;
}

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string method;
  std::string out;
  std::string source;
  std::string benchmark;
  std::vector<std::string> runs;
  bool json_logs = false;
};

// Per-command state; the manifest is written last.
struct Run {
  std::string command;
  config::RunConfig cfg;
  Args args;
  fs::path out;
  Logger* log = nullptr;
  ordered_json inputs = ordered_json::object();
  ordered_json results = ordered_json::object();

  std::string path(const std::string& rel) const { return (out / rel).string(); }
  void write(const std::string& rel, const std::string& content) const { write_text_file(path(rel), content); }
};

ordered_json args_json(const Args& a) {
  ordered_json j;
  j["mode"] = a.mode;
  j["method"] = a.method;
  j["source"] = a.source;
  j["benchmark"] = a.benchmark;
  j["run"] = a.runs;
  return j;
}

// Flags absent on the command line fall back to the manifest they came from.
void merge_manifest_args(Args& a, const json& manifest_args) {
  auto take = [&](std::string& field, const char* key) {
    if (field.empty() && manifest_args.contains(key)) field = manifest_args.at(key).get<std::string>();
  };
  take(a.mode, "mode");
  take(a.method, "method");
  take(a.source, "source");
  take(a.benchmark, "benchmark");
  if (a.runs.empty() && manifest_args.contains("run")) a.runs = manifest_args.at("run").get<std::vector<std::string>>();
}

std::string run_root(const config::RunConfig& cfg) {
  if (const char* env = std::getenv("FOCUS_RUN_ROOT"); env != nullptr && *env != '\0') return env;
  return cfg.io.run_root;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) fail(ErrorKind::io, "missing input " + p.string());
}

std::string hash_file(const fs::path& p) { return git_blob_hash(read_text_file(p.string())); }

void record_input(Run& run, const std::string& name, const fs::path& p) {
  require_file(p);
  run.inputs[name] = {{"path", p.string()}, {"sha1", hash_file(p)}};
}

void write_manifest(const Run& run) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(run.out)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), run.out).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  ordered_json outputs = ordered_json::object();
  for (const auto& f : files) outputs[f] = hash_file(run.out / f);
  const auto resolved = config::config_to_json(run.cfg);
  ordered_json m;
  m["command"] = run.command;
  m["seed"] = run.cfg.seed;
  m["args"] = args_json(run.args);
  m["resolved_config"] = resolved;
  m["config_hash"] = git_blob_hash(resolved.dump());
  m["inputs"] = run.inputs;
  m["results"] = run.results;
  m["outputs"] = std::move(outputs);
  run.write("manifest.json", m.dump(2) + "\n");
}

std::string transitions_text(const std::vector<envs::Transition>& data) {
  std::ostringstream out;
  for (const auto& t : data) out << envs::transition_to_json(t).dump() << '\n';
  return out.str();
}

json read_manifest(const fs::path& dir) {
  require_file(dir / "manifest.json");
  return read_json_file((dir / "manifest.json").string());
}

// ---- commands ------------------------------------------------------------

void cmd_collect_source(Run& run) {
  const auto data = harness::collect_source(run.cfg, run.cfg.seed);
  run.write("source_train.jsonl", transitions_text(data.train));
  run.write("source_validation.jsonl", transitions_text(data.validation));
  run.results = {{"train_size", data.train.size()}, {"validation_size", data.validation.size()}};
  run.log->info("collected", {{"train", data.train.size()}, {"validation", data.validation.size()}});
}

harness::SourceData load_source_data(Run& run, const fs::path& dir) {
  record_input(run, "source_train", dir / "source_train.jsonl");
  record_input(run, "source_validation", dir / "source_validation.jsonl");
  harness::SourceData d;
  d.train = envs::read_transitions((dir / "source_train.jsonl").string());
  d.validation = envs::read_transitions((dir / "source_validation.jsonl").string());
  return d;
}

void cmd_train_source(Run& run) {
  harness::SourceData data;
  if (run.args.source.empty()) {
    data = harness::collect_source(run.cfg, run.cfg.seed);
  } else {
    data = load_source_data(run, run.args.source);
  }
  run.write("source_train.jsonl", transitions_text(data.train));
  run.write("source_validation.jsonl", transitions_text(data.validation));
  const auto sm = harness::train_source_model(run.cfg, data, run.cfg.seed);
  dynamics::DynamicsCheckpoint ckpt;
  ckpt.model = sm.model;
  ckpt.gamma_used = sm.gamma;
  ckpt.mode = "source";
  run.write("dynamics.ckpt", dynamics::checkpoint_to_json(ckpt).dump() + "\n");
  run.write("train_report.csv", dynamics::train_report_csv(sm.report));
  run.results = {{"gamma", sm.gamma}, {"final_loss", sm.report.epochs.empty() ? 0.0 : sm.report.epochs.back().mean_loss}};
  run.log->info("trained_source", run.results);
}

void cmd_make_benchmark(Run& run) {
  const auto b = harness::make_benchmark(run.cfg.env.source, run.cfg.env.target, run.cfg.env.similarity_gamma,
                                         run.cfg.benchmark, run.cfg.seed);
  run.write("train.jsonl", transitions_text(b.train));
  run.write("validation.jsonl", transitions_text(b.validation));
  run.results = {{"train_size", b.train.size()},
                 {"train_similar", b.train.size() - b.train_dissimilar},
                 {"train_dissimilar", b.train_dissimilar},
                 {"distractor_fraction", b.distractor_fraction()},
                 {"free_rollouts", b.free_rollouts},
                 {"steered_rollouts", b.steered_rollouts},
                 {"validation_size", b.validation.size()},
                 {"validation_similar", b.validation.size()},
                 {"validation_rollouts", b.validation_rollouts},
                 {"validation_candidates", b.validation_candidates},
                 {"validation_rejected_dissimilar", b.validation_rejected},
                 {"validation_rejected_duplicate", b.validation_duplicates}};
  run.log->info("benchmark", run.results);
}

struct SourceModelFiles {
  dynamics::DynamicsModel model;
  double gamma = 0.0;
};

SourceModelFiles load_source_model(Run& run) {
  if (run.args.source.empty()) fail(ErrorKind::usage, run.command + " needs --source <train-source run dir>");
  const fs::path p = fs::path(run.args.source) / "dynamics.ckpt";
  record_input(run, "source_model", p);
  auto c = dynamics::load_checkpoint(p.string());
  if (!c.gamma_used) fail(ErrorKind::io, p.string() + " carries no gamma");
  return {std::move(c.model), *c.gamma_used};
}

harness::Benchmark load_benchmark(Run& run) {
  if (run.args.benchmark.empty()) fail(ErrorKind::usage, run.command + " needs --benchmark <make-benchmark run dir>");
  const fs::path dir = run.args.benchmark;
  record_input(run, "benchmark_train", dir / "train.jsonl");
  record_input(run, "benchmark_validation", dir / "validation.jsonl");
  harness::Benchmark b;
  b.train = envs::read_transitions((dir / "train.jsonl").string());
  b.validation = envs::read_transitions((dir / "validation.jsonl").string());
  if (b.train.empty() || b.validation.empty()) fail(ErrorKind::io, "benchmark files are empty under " + dir.string());
  return b;
}

void cmd_adapt(Run& run) {
  const auto src = load_source_model(run);
  const auto bench = load_benchmark(run);
  const auto mode = run.args.mode.empty() ? run.cfg.adapt.mode : dynamics::adapt_mode_from_string(run.args.mode);
  run.cfg.adapt.mode = mode;
  dynamics::DynamicsModel adapted;
  const auto row = harness::adapt_and_score(run.cfg, src.model, src.gamma, bench, mode, run.cfg.seed, &adapted);
  dynamics::DynamicsCheckpoint ckpt;
  ckpt.model = adapted;
  ckpt.gamma_used = config::schedule_with_gamma(run.cfg, src.gamma).gamma;
  ckpt.mode = std::string(dynamics::to_string(mode));
  ckpt.schedule = config::schedule_with_gamma(run.cfg, src.gamma);
  run.write("dynamics.ckpt", dynamics::checkpoint_to_json(ckpt).dump() + "\n");
  run.write("train_report.csv", dynamics::train_report_csv(row.report));
  run.write("weight_histogram.csv", harness::weight_histogram_csv(row.report));
  run.write("validation.csv", harness::validation_csv({row}));
  run.results = {{"mode", dynamics::to_string(mode)}, {"val_mse", row.val_mse}, {"val_mean_dist", row.val_mean_dist}};
  run.log->info("adapted", run.results);
}

void cmd_validate(Run& run) {
  const auto src = load_source_model(run);
  const auto bench = load_benchmark(run);
  if (!run.args.mode.empty()) run.cfg.validate.modes = {dynamics::adapt_mode_from_string(run.args.mode)};
  run.log->info("validate_start", {{"modes", run.cfg.validate.modes.size()}, {"seeds", run.cfg.validate.seeds.size()}});
  const auto rows = harness::run_validation(run.cfg, src.model, src.gamma, bench);
  const auto summary = harness::summarize_validation(rows);
  run.write("per_seed.csv", harness::validation_csv(rows));
  run.write("summary.csv", harness::summary_csv(summary));
  for (const auto& r : rows) {
    const std::string dir = "runs/" + std::string(dynamics::to_string(r.mode)) + "_seed" + std::to_string(r.seed) + "/";
    run.write(dir + "train_report.csv", dynamics::train_report_csv(r.report));
  }
  ordered_json s = ordered_json::array();
  for (const auto& r : summary) {
    s.push_back({{"mode", dynamics::to_string(r.mode)},
                 {"mean_val_mse", r.mean_val_mse},
                 {"p_focus_less", r.p_focus_less}});
  }
  run.results = {{"summary", s}};
  run.log->info("validated", run.results);
}

std::vector<online::Method> selected_methods(const Run& run) {
  if (!run.args.method.empty()) return {online::method_from_string(run.args.method)};
  return run.cfg.online.methods;
}

std::string metrics_text(const std::vector<online::MetricsRow>& rows) {
  std::string text = online::metrics_csv_header();
  for (const auto& r : rows) text += online::metrics_csv_row(r);
  return text;
}

std::string online_subdir(online::Method m, std::uint64_t seed) {
  return std::string(online::to_string(m)) + "/seed_" + std::to_string(seed);
}

void cmd_online(Run& run, bool seed_given) {
  const auto src = load_source_model(run);
  record_input(run, "source_train", fs::path(run.args.source) / "source_train.jsonl");
  const auto source_train = envs::read_transitions((fs::path(run.args.source) / "source_train.jsonl").string());
  if (seed_given) run.cfg.online.seeds = {run.cfg.seed};
  const auto methods = selected_methods(run);
  run.cfg.online.methods = methods;
  const auto& seeds = run.cfg.online.seeds;
  const std::size_t jobs = methods.size() * seeds.size();
  std::vector<std::vector<online::MetricsRow>> results(jobs);
  std::vector<std::exception_ptr> errors(jobs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < jobs; ++k) {
    const auto method = methods[k / seeds.size()];
    const auto seed = seeds[k % seeds.size()];
    try {
      results[k] = harness::run_online(run.cfg, method, seed, src.model, src.gamma, source_train,
                                       run.path(online_subdir(method, seed)));
      const auto& last = results[k].back();
#pragma omp critical(focus_log)
      run.log->info("online_done", {{"method", online::to_string(method)},
                                    {"seed", seed},
                                    {"final_success", last.success}});
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<online::MetricsRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  run.write("eval/metrics.csv", metrics_text(rows));
  run.results = {{"gamma", src.gamma}, {"rows", rows.size()}};
}

void cmd_eval(Run& run) {
  if (run.args.runs.size() != 1) fail(ErrorKind::usage, "eval needs exactly one --run <online run dir>");
  const fs::path dir = run.args.runs.front();
  const auto m = read_manifest(dir);
  record_input(run, "online_manifest", dir / "manifest.json");
  if (m.at("command").get<std::string>() != "online") fail(ErrorKind::io, dir.string() + " is not an online run");
  const double gamma = m.at("results").at("gamma").get<double>();
  const auto resolved = config::parse_config(m.at("resolved_config"));
  std::vector<online::Method> methods = resolved.online.methods;
  if (!run.args.method.empty()) methods = {online::method_from_string(run.args.method)};
  std::vector<online::MetricsRow> rows;
  for (auto method : methods) {
    for (auto seed : resolved.online.seeds) {
      const auto sub = dir / online_subdir(method, seed);
      if (!fs::exists(sub)) fail(ErrorKind::io, "missing input " + sub.string());
      auto r = harness::evaluate_run_dir(run.cfg, method, seed, gamma, sub.string());
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }
  run.write("eval/metrics.csv", metrics_text(rows));
  run.results = {{"rows", rows.size()}};
  run.log->info("evaluated", run.results);
}

void cmd_report(Run& run) {
  if (run.args.runs.empty()) fail(ErrorKind::usage, "report needs at least one --run <dir>");
  std::vector<std::string> missing;
  for (const auto& r : run.args.runs) {
    if (!fs::is_regular_file(fs::path(r) / "manifest.json")) missing.push_back((fs::path(r) / "manifest.json").string());
  }
  if (!missing.empty()) {
    std::string msg = "missing inputs:";
    for (const auto& m : missing) msg += " " + m;
    fail(ErrorKind::io, msg);
  }
  std::string hist = "run,label,epoch,bin_low,bin_high,count\n";
  std::vector<online::MetricsRow> metrics;
  std::string summaries;
  bool any_hist = false;
  auto add_hist = [&](std::size_t k, const std::string& label, const fs::path& report_csv) {
    require_file(report_csv);
    const auto report = dynamics::train_report_from_csv(read_text_file(report_csv.string()));
    std::istringstream lines(harness::weight_histogram_csv(report));
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) hist += std::to_string(k) + "," + label + "," + line + "\n";
    any_hist = true;
  };
  for (std::size_t k = 0; k < run.args.runs.size(); ++k) {
    const fs::path dir = run.args.runs[k];
    const auto m = read_manifest(dir);
    record_input(run, "run_" + std::to_string(k), dir / "manifest.json");
    const auto command = m.at("command").get<std::string>();
    if (command == "adapt") {
      add_hist(k, m.at("results").at("mode").get<std::string>(), dir / "train_report.csv");
    } else if (command == "validate") {
      require_file(dir / "per_seed.csv");
      const auto rows = harness::validation_from_csv(read_text_file((dir / "per_seed.csv").string()));
      std::istringstream lines(harness::summary_csv(harness::summarize_validation(rows)));
      std::string line;
      std::getline(lines, line);
      if (summaries.empty()) summaries = "run," + line + "\n";
      while (std::getline(lines, line)) summaries += std::to_string(k) + "," + line + "\n";
      for (const auto& r : rows) {
        const std::string label = std::string(dynamics::to_string(r.mode)) + "_seed" + std::to_string(r.seed);
        add_hist(k, label, dir / "runs" / label / "train_report.csv");
      }
    } else if (command == "online" || command == "eval") {
      require_file(dir / "eval" / "metrics.csv");
      auto rows = online::metrics_from_csv(read_text_file((dir / "eval" / "metrics.csv").string()));
      metrics.insert(metrics.end(), rows.begin(), rows.end());
    } else {
      fail(ErrorKind::io, dir.string() + ": no figure data for command '" + command + "'");
    }
  }
  if (any_hist) run.write("weight_histograms.csv", hist);
  if (!summaries.empty()) run.write("validation_summary.csv", summaries);
  if (!metrics.empty()) {
    run.write("online_curves.csv", harness::curves_csv(harness::online_curves(metrics, run.cfg.seed)));
  }
  run.log->info("reported", {{"runs", run.args.runs.size()}});
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"FOCUS dynamics adaptation toolkit", "focus"};
  app.require_subcommand(1, 1);
  Args a;
  app.add_flag("--json-logs", a.json_logs, "One JSON object per log line");

  struct Spec {
    const char* name;
    const char* help;
    bool mode, method, source, benchmark, runs, config_required;
  };
  const Spec specs[] = {
      {"collect-source", "Random-action source transitions", false, false, false, false, false, true},
      {"train-source", "Train the source dynamics model", false, false, true, false, false, true},
      {"make-benchmark", "Target adaptation set and similar-only validation set", false, false, false, false, false,
       true},
      {"adapt", "Fine-tune the source model on the benchmark", true, false, true, true, false, true},
      {"validate", "All modes and seeds on the benchmark", true, false, true, true, false, true},
      {"online", "Online learning runs with per-iteration evaluation", false, true, true, false, false, true},
      {"eval", "Re-evaluate the checkpoints of an online run", false, true, false, false, true, true},
      {"report", "Figure data from finished runs", false, false, false, false, true, false},
  };
  bool seed_given = false;
  for (const auto& s : specs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    auto* c = sub->add_option("--config", a.config, "Config JSON or a manifest.json to re-run");
    if (s.config_required) c->required();
    sub->add_option("--seed", a.seed, "Master seed override");
    sub->add_option("--out", a.out, "Output directory (default <run root>/<command>-seed<seed>)");
    sub->add_flag("--json-logs", a.json_logs, "One JSON object per log line");
    if (s.mode) sub->add_option("--mode", a.mode, "focus | all_data | low_initial_error");
    if (s.method) sub->add_option("--method", a.method, "focus | all_data | all_data_no_mde");
    if (s.source) sub->add_option("--source", a.source, "Source run directory");
    if (s.benchmark) sub->add_option("--benchmark", a.benchmark, "make-benchmark run directory");
    if (s.runs) sub->add_option("--run", a.runs, "Run directory (repeatable)");
  }

  const auto first = std::find_if(argv.begin(), argv.end(), [](const std::string& s) { return s.rfind("-", 0) != 0; });
  if (first != argv.end() && app.get_subcommand_no_throw(*first) == nullptr) {
    err << "error category=usage message=unknown subcommand '" << *first << "'\n" << app.help();
    return exit_code(ErrorKind::usage);
  }
  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error category=usage message=" << e.what() << '\n';
    err << app.help();
    return exit_code(ErrorKind::usage);
  }
  seed_given = a.seed.has_value();

  Logger log(err, a.json_logs);
  try {
    Run r;
    r.command = app.get_subcommands().front()->get_name();
    r.log = &log;
    if (!a.config.empty()) {
      const json doc = read_json_file(a.config);
      if (doc.is_object() && doc.contains("resolved_config")) {
        r.cfg = config::parse_config(doc.at("resolved_config"));
        if (doc.contains("args")) merge_manifest_args(a, doc.at("args"));
        if (doc.contains("command") && doc.at("command").get<std::string>() != r.command) {
          fail(ErrorKind::usage, "manifest was written by '" + doc.at("command").get<std::string>() + "', not '" +
                                     r.command + "'");
        }
      } else {
        r.cfg = config::parse_config(doc);
      }
    }
    if (a.seed) r.cfg.seed = *a.seed;
    r.args = a;
    r.out = a.out.empty() ? fs::path(run_root(r.cfg)) / (r.command + "-seed" + std::to_string(r.cfg.seed)) : fs::path(a.out);
    if (fs::exists(r.out / "manifest.json")) {
      fail(ErrorKind::io, "refusing to overwrite finished run " + r.out.string());
    }
    fs::create_directories(r.out);
    log.info("start", {{"command", r.command}, {"seed", r.cfg.seed}, {"out", r.out.string()}});

    if (r.command == "collect-source") cmd_collect_source(r);
    else if (r.command == "train-source") cmd_train_source(r);
    else if (r.command == "make-benchmark") cmd_make_benchmark(r);
    else if (r.command == "adapt") cmd_adapt(r);
    else if (r.command == "validate") cmd_validate(r);
    else if (r.command == "online") cmd_online(r, seed_given);
    else if (r.command == "eval") cmd_eval(r);
    else if (r.command == "report") cmd_report(r);
    write_manifest(r);
    log.info("done", {{"command", r.command}, {"out", r.out.string()}});
    return 0;
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error category=" << to_string(e.kind()) << " message=" << msg << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error category=io message=" << e.what() << '\n';
    return exit_code(ErrorKind::io);
  } catch (const nlohmann::json::exception& e) {
    err << "error category=io message=" << e.what() << '\n';
    return exit_code(ErrorKind::io);
  } catch (const std::exception& e) {
    err << "error category=internal message=" << e.what() << '\n';
    return exit_code(ErrorKind::internal);
  }
}

}  // namespace focus::cli
