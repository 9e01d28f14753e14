#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "drip/config.hpp"

using namespace drip;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.training.trajectories == 20);
  CHECK(c.training.steps == 5000);
  CHECK(c.evaluation.ensemble_size == 100);
  CHECK(c.l1.omega == 20.0);
  CHECK(c.l1.ts == 0.01);
  CHECK(c.l1.lambda_s == 10.0);
  CHECK(c.build_partition() == Partition(10.0, 100, 10));
  CHECK(c.l1_config().sign == AdaptationSign::kVerbatim);
  CHECK(c.expert_sign() == ExpertSign::kCancelH);
  CHECK(c.coupling().mode == CouplingSpec::Mode::kSynchronous);
  CHECK(c.optimizer(3).workers == 3);
}

TEST_CASE("text and JSON round-trips are the identity") {
  ExperimentConfig c;
  c.master_seed = 99;
  c.system.k_gain = 1.7;
  c.system.drift_reading = "state";
  c.training.architecture = {4, 8, 8, 4};
  c.training.learning_rate = 3.0e-4;
  c.l1.adaptation_sign_variant = "negated_exponent";
  c.evaluation.coupling = "shifted";
  c.evaluation.shift = {0.1, 0.2, 0.0, -0.1};
  c.sweep.omega = {1.0 / 3.0, 7.0};
  const ExperimentConfig from_text = parse_config(serialize_config_text(c));
  CHECK(from_text == c);
  CHECK(serialize_config_text(from_text) == serialize_config_text(c));
  CHECK(from_text.sweep.omega[0] == 1.0 / 3.0);
  const ExperimentConfig from_json = parse_config(serialize_config_json(c));
  CHECK(from_json == c);
  CHECK(!(ExperimentConfig{} == c));
}

TEST_CASE("every key is serialized") {
  const std::string text = serialize_config_text(ExperimentConfig{});
  const auto keys = config_keys();
  CHECK(keys.size() > 40);
  for (const auto& key : keys) {
    const auto dot = key.find('.');
    const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
    CHECK(text.find(leaf + " = ") != std::string::npos);
  }
}

TEST_CASE("text syntax") {
  const ExperimentConfig c = parse_config(
      "# comment\n"
      "master_seed = 5\n"
      "[training]\n"
      "steps = 10   # inline\n"
      "; another comment\n"
      "architecture = 4, 16, 4\n"
      "[l1]\n"
      "omega = 40\n"
      "system.k_gain = 3\n");
  CHECK(c.master_seed == 5);
  CHECK(c.training.steps == 10);
  CHECK(c.training.architecture == std::vector<int>{4, 16, 4});
  CHECK(c.l1.omega == 40.0);
  CHECK(c.system.k_gain == 3.0);
}

TEST_CASE("syntax errors name the line") {
  CHECK(error_of("[training]\nsteps = 10\nbogus = 1\n").find("cfg.ini:3: unknown key 'training.bogus'") == 0);
  CHECK(error_of("[nope]\n").find("cfg.ini:1: unknown section") == 0);
  CHECK(error_of("[l1]\nomega = 1\nomega = 2\n").find("cfg.ini:3: duplicate key") == 0);
  CHECK(error_of("\n\n[l1\n").find("cfg.ini:3:") == 0);
  CHECK(error_of("[l1]\nomega 20\n").find("cfg.ini:2: expected") == 0);
  CHECK(error_of("[l1]\nomega = fast\n").find("cfg.ini:2:") == 0);
  CHECK(error_of("{\"l1\": {\"omega\": ").find("cfg.ini: invalid JSON") == 0);
  CHECK(error_of("{\"l1\": {\"gain\": 1}}").find("unknown key") != std::string::npos);
}

TEST_CASE("semantic errors are anchored at the offending line") {
  const auto path = write_temp("drip_bad_semantic.ini", "[system]\nk_gain = 2\n[l1]\n\nts = 0.015\n");
  try {
    load_config(path);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find(path.string() + ":5: l1.ts") == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("validation rejects out-of-range values") {
  auto rejects = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  rejects([](ExperimentConfig& c) { c.evaluation.ensemble_size = 10; });
  rejects([](ExperimentConfig& c) { c.training.architecture = {3, 8, 4}; });
  rejects([](ExperimentConfig& c) { c.training.initial_law = "gaussian:0,1"; });
  rejects([](ExperimentConfig& c) { c.training.trajectories = 0; });
  rejects([](ExperimentConfig& c) { c.l1.omega = -5; });
  rejects([](ExperimentConfig& c) { c.l1.adaptation_sign_variant = "sideways"; });
  rejects([](ExperimentConfig& c) { c.sweep.ts = {0.005}; });
  rejects([](ExperimentConfig& c) { c.partition.knots = 0; });
  rejects([](ExperimentConfig& c) { c.system.expert_sign = "maybe"; });
  rejects([](ExperimentConfig& c) { c.evaluation.coupling = "quantum"; });
}

TEST_CASE("a run manifest reloads as its config") {
  ExperimentConfig c;
  c.master_seed = 42;
  c.training.steps = 7;
  nlohmann::json manifest = {{"command", "train"}, {"config", serialize_config_text(c)}};
  const auto path = write_temp("drip_manifest.json", manifest.dump());
  CHECK(load_config(path) == c);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config("/nonexistent/drip.ini"), ConfigError);
}
