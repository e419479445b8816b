#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "focus/cli.hpp"
#include "focus/config.hpp"
#include "focus/json_util.hpp"
#include "support.hpp"

using namespace focus;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

json manifest(const fs::path& dir) { return read_json_file((dir / "manifest.json").string()); }

// Tiny but complete configuration so every command finishes in seconds.
std::string write_small_config(const test::TempDir& dir) {
  auto cfg = config::load_config(FOCUS_SOURCE_DIR "/configs/drag_point.json");
  cfg.nn.hidden = {16, 16};
  cfg.train.source_transitions = 300;
  cfg.train.source_validation = 60;
  cfg.train.epochs = 5;
  cfg.adapt.epochs = 2;
  cfg.mde.hidden = {16};
  cfg.mde.epochs = 2;
  cfg.planner.max_nodes = 100;
  cfg.online.iterations = 1;
  cfg.online.episodes_per_iteration = 2;
  cfg.online.exec.max_steps = 5;
  cfg.online.seeds = {1};
  cfg.online.methods = {online::Method::focus, online::Method::all_data_no_mde};
  cfg.eval.n_episodes = 3;
  cfg.benchmark.train_size = 200;
  cfg.benchmark.validation_size = 40;
  cfg.validate.seeds = {1, 2};
  const auto path = dir.str("small.json");
  std::ofstream(path) << config::config_to_json(cfg).dump(2);
  return path;
}

}  // namespace

TEST_CASE("usage errors") {
  auto r = run({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error category=usage") != std::string::npos);
  r = run({"collect-source", "--config", "x.json", "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("collect-source") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"collect-source"}).code == 2);
  CHECK(cli::exit_code(ErrorKind::benchmark) == 5);
  CHECK(cli::exit_code(ErrorKind::internal) == 9);
}

TEST_CASE("config and io errors") {
  test::TempDir dir("cli_err");
  std::ofstream(dir.str("bad.json")) << R"({"online": {"iterationz": 1}})";
  auto r = run({"collect-source", "--config", dir.str("bad.json"), "--out", dir.str("a")});
  CHECK(r.code == 3);
  CHECK(r.err.find("error category=config") != std::string::npos);
  CHECK(r.err.find("iterationz") != std::string::npos);

  CHECK(run({"collect-source", "--config", dir.str("missing.json"), "--out", dir.str("b")}).code == 4);

  const auto cfg = write_small_config(dir);
  r = run({"adapt", "--config", cfg, "--source", dir.str("nowhere"), "--benchmark", dir.str("nowhere"), "--out",
           dir.str("c")});
  CHECK(r.code == 4);
  CHECK(r.err.find("missing input") != std::string::npos);
  CHECK(run({"validate", "--config", cfg, "--out", dir.str("d")}).code == 2);
  CHECK(run({"report", "--run", dir.str("nowhere"), "--out", dir.str("e")}).code == 4);
}

TEST_CASE("full command pipeline") {
  test::TempDir dir("cli_pipe");
  const auto cfg = write_small_config(dir);
  const fs::path root = dir.path;

  auto r = run({"collect-source", "--config", cfg, "--out", (root / "src").string()});
  REQUIRE(r.code == 0);
  auto m = manifest(root / "src");
  CHECK(m["command"] == "collect-source");
  CHECK(m["results"]["train_size"].get<std::size_t>() == line_count(root / "src/source_train.jsonl"));
  CHECK(m["results"]["validation_size"].get<std::size_t>() == line_count(root / "src/source_validation.jsonl"));
  CHECK(m["outputs"].contains("source_train.jsonl"));
  CHECK(m["outputs"]["source_train.jsonl"] == git_blob_hash(slurp(root / "src/source_train.jsonl")));

  r = run({"collect-source", "--config", cfg, "--out", (root / "src").string()});
  CHECK(r.code == 4);
  CHECK(r.err.find("refusing to overwrite") != std::string::npos);

  r = run({"train-source", "--config", cfg, "--seed", "7", "--source", (root / "src").string(), "--out",
           (root / "model").string()});
  REQUIRE(r.code == 0);
  m = manifest(root / "model");
  CHECK(m["seed"] == 7);
  CHECK(m["resolved_config"]["seed"] == 7);
  CHECK(fs::is_regular_file(root / "model/dynamics.ckpt"));
  CHECK(m["results"]["gamma"].get<double>() > 0.0);
  CHECK(m["inputs"]["source_train"]["sha1"] == m["outputs"]["source_train.jsonl"]);

  r = run({"make-benchmark", "--config", cfg, "--out", (root / "bench").string()});
  REQUIRE(r.code == 0);
  m = manifest(root / "bench");
  CHECK(m["results"]["train_size"].get<std::size_t>() == line_count(root / "bench/train.jsonl"));
  CHECK(m["results"]["validation_size"].get<std::size_t>() == line_count(root / "bench/validation.jsonl"));
  CHECK(m["results"]["train_similar"].get<std::size_t>() + m["results"]["train_dissimilar"].get<std::size_t>() ==
        line_count(root / "bench/train.jsonl"));

  r = run({"adapt", "--config", cfg, "--mode", "all_data", "--source", (root / "model").string(), "--benchmark",
           (root / "bench").string(), "--out", (root / "adapt").string()});
  REQUIRE(r.code == 0);
  CHECK(manifest(root / "adapt")["results"]["mode"] == "all_data");
  CHECK(fs::is_regular_file(root / "adapt/weight_histogram.csv"));

  r = run({"validate", "--config", cfg, "--source", (root / "model").string(), "--benchmark",
           (root / "bench").string(), "--out", (root / "val").string()});
  REQUIRE(r.code == 0);
  CHECK(line_count(root / "val/per_seed.csv") == 1 + 3 * 2);
  CHECK(fs::is_regular_file(root / "val/runs/focus_seed2/train_report.csv"));

  SUBCASE("manifest re-run reproduces outputs") {
    r = run({"validate", "--config", (root / "val/manifest.json").string(), "--out", (root / "val2").string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(root / "val/per_seed.csv") == slurp(root / "val2/per_seed.csv"));
    CHECK(slurp(root / "val/summary.csv") == slurp(root / "val2/summary.csv"));
    CHECK(manifest(root / "val")["outputs"] == manifest(root / "val2")["outputs"]);
    CHECK(manifest(root / "val")["config_hash"] == manifest(root / "val2")["config_hash"]);
    CHECK(run({"adapt", "--config", (root / "val/manifest.json").string(), "--out", (root / "x").string()}).code == 2);
  }

  SUBCASE("online, eval and report") {
    r = run({"online", "--config", cfg, "--source", (root / "model").string(), "--out", (root / "onl").string()});
    REQUIRE(r.code == 0);
    CHECK(fs::is_regular_file(root / "onl/focus/seed_1/iter_1/dynamics.ckpt"));
    CHECK(fs::is_regular_file(root / "onl/all_data_no_mde/seed_1/iter_0/mde.ckpt"));
    const auto metrics = online::metrics_from_csv(slurp(root / "onl/eval/metrics.csv"));
    CHECK(metrics.size() == 2 * 2);

    r = run({"eval", "--config", cfg, "--run", (root / "onl").string(), "--out", (root / "ev").string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(root / "ev/eval/metrics.csv") == slurp(root / "onl/eval/metrics.csv"));

    r = run({"report", "--run", (root / "onl").string(), "--run", (root / "val").string(), "--run",
             (root / "adapt").string(), "--out", (root / "rep").string()});
    REQUIRE(r.code == 0);
    CHECK(fs::is_regular_file(root / "rep/online_curves.csv"));
    CHECK(fs::is_regular_file(root / "rep/validation_summary.csv"));
    CHECK(fs::is_regular_file(root / "rep/weight_histograms.csv"));
    CHECK(run({"report", "--run", (root / "src").string(), "--out", (root / "rep2").string()}).code == 4);
  }
}

TEST_CASE("run root and structured logs") {
  test::TempDir dir("cli_env");
  const auto cfg = write_small_config(dir);
  ::setenv("FOCUS_RUN_ROOT", dir.str("root").c_str(), 1);
  const auto r = run({"collect-source", "--json-logs", "--config", cfg, "--seed", "3"});
  ::unsetenv("FOCUS_RUN_ROOT");
  REQUIRE(r.code == 0);
  CHECK(fs::is_regular_file(dir.path / "root/collect-source-seed3/manifest.json"));
  std::istringstream lines(r.err);
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const auto j = json::parse(line);
    CHECK(j.contains("ts"));
    CHECK(j.contains("event"));
  }
  CHECK(n >= 2);
}
