#include <doctest.h>

#include <cmath>
#include <fstream>

#include "focus/config.hpp"
#include "focus/error.hpp"
#include "support.hpp"

using namespace focus;
using nlohmann::json;

namespace {

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::internal;
}

std::string message_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty document resolves to defaults") {
  const auto cfg = config::parse_config(json::object());
  CHECK(cfg.online.iterations == 20);
  CHECK(cfg.online.episodes_per_iteration == 10);
  CHECK(cfg.mde.k_mde == 10.0);
  CHECK(cfg.mde.final_learning_rate == 0.0);
  CHECK(cfg.planner.random_accept_prob == 0.01);
  CHECK(cfg.adapt.gamma_percentile == 97.0);
  CHECK(cfg.adapt.epochs == 20);
  CHECK(cfg.online.exec.replan_threshold == 0.05);
  CHECK(cfg.online.exec.max_steps == 30);
  CHECK(cfg.online.exec.max_replans == 5);
  CHECK(cfg.env.source == envs::default_spec(envs::EnvId::drag_point, envs::Variant::source));
}

TEST_CASE("unknown keys are rejected by name") {
  const auto doc = json::parse(R"({"online": {"iterations": 3, "episodez": 4}})");
  CHECK(kind_of([&] { config::parse_config(doc); }) == ErrorKind::config);
  CHECK(message_of([&] { config::parse_config(doc); }).find("episodez") != std::string::npos);
  CHECK(kind_of([] { config::parse_config(json::parse(R"({"bogus": 1})")); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse_config(json::parse(R"({"online": {"iterations": "ten"}})")); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse_config(json::parse(R"({"adapt": {"mode": "sometimes"}})")); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse_config(json::parse(R"({"planner": {"random_accept_prob": 2.0}})")); }) ==
        ErrorKind::config);
  CHECK(kind_of([] { config::parse_config(json::parse(R"({"mde": {"final_learning_rate": -1e-4}})")); }) ==
        ErrorKind::config);
}

TEST_CASE("resolved form round-trips") {
  for (const char* name : {"drag_point.json", "chain_rope_2d.json"}) {
    const auto cfg = config::load_config(std::string(FOCUS_SOURCE_DIR "/configs/") + name);
    const auto doc = config::config_to_json(cfg);
    const auto again = config::config_to_json(config::parse_config(json::parse(doc.dump())));
    CHECK(doc.dump() == again.dump());
  }
}

TEST_CASE("manifests are accepted as configs") {
  auto cfg = config::load_config(FOCUS_SOURCE_DIR "/configs/drag_point.json");
  cfg.seed = 42;
  test::TempDir dir("cfg");
  nlohmann::ordered_json manifest;
  manifest["command"] = "validate";
  manifest["resolved_config"] = config::config_to_json(cfg);
  std::ofstream(dir.str("manifest.json")) << manifest.dump(2);
  CHECK(config::config_to_json(config::load_config(dir.str("manifest.json"))).dump() ==
        config::config_to_json(cfg).dump());
  CHECK(kind_of([&] { config::load_config(dir.str("missing.json")); }) == ErrorKind::io);
}

TEST_CASE("derived settings") {
  auto cfg = config::load_config(FOCUS_SOURCE_DIR "/configs/drag_point.json");
  const double gamma = 4e-4;
  const auto pc = config::planner_config(cfg, gamma);
  CHECK(pc.d_max == doctest::Approx(cfg.mde.d_max_factor * std::sqrt(gamma)));
  cfg.mde.d_max = 0.07;
  CHECK(config::planner_config(cfg, gamma).d_max == 0.07);
  const auto s = config::schedule_with_gamma(cfg, gamma);
  CHECK(s.gamma == gamma);
  cfg.adapt.gamma = 1e-3;
  CHECK(config::schedule_with_gamma(cfg, gamma).gamma == 1e-3);
  const auto os = config::online_settings(cfg, gamma);
  CHECK(os.iterations == cfg.online.iterations);
  CHECK(os.task.goal == cfg.online.goal);
  CHECK(os.target_spec == cfg.env.target);
}
