// Experiment configuration: a sectioned key = value text format (or the same
// schema as JSON), validated before any run.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "drip/dynamics.hpp"
#include "drip/l1drac.hpp"
#include "drip/metrics.hpp"
#include "drip/policy.hpp"
#include "drip/simulate.hpp"
#include "drip/tasil.hpp"

namespace drip {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SystemSection {
  std::uint64_t h_seed = 7;
  int h_hidden = 16;
  double h_weight_std = 0.5;
  double decay = 0.05;
  double network_gain = 0.25;
  double input_gain = 0.25;
  double mu_offset = 0.1;
  double mu_slope = 0.05;
  double sigma_offset = 0.1;
  double sigma_slope = 0.05;
  double uncertainty_scale = 1.0;
  std::string drift_reading = "all_ones";  // all_ones | state
  std::string expert_sign = "cancel_h";    // cancel_h | paper_literal
  double k_gain = 2.0;
};

struct PartitionSection {
  double horizon = 10.0;
  int knots = 100;
  int substeps = 10;
};

struct CertifySection {
  double probe_radius = 5.0;
  int probes = 10000;
  int growth_points = 4000;
  int lipschitz_samples = 2000;
};

struct TrainingSection {
  int trajectories = 20;
  std::vector<int> architecture = {4, 32, 4};
  std::string initial_law = "uniform:-2,2";
  double learning_rate = 1e-3;
  int steps = 5000;
  double beta_start = 1.0;
  double beta_end = 50.0;
  std::string jacobian_norm = "operator";  // operator | frobenius
  std::uint64_t init_seed = 1;
};

struct L1Section {
  double omega = 20.0;
  double ts = 0.01;
  double lambda_s = 10.0;
  std::string adaptation_sign_variant = "verbatim";  // verbatim | negated_exponent
};

struct EvaluationSection {
  int ensemble_size = 100;
  std::string coupling = "synchronous";  // synchronous | independent | shifted
  std::string nominal_law = "uniform:-2,2";
  std::string true_law = "uniform:-2,2";
  std::vector<double> shift = {};
  double scale = 1.0;
  std::vector<int> p_orders = {1, 2, 3};
  std::vector<double> deltas = {0.1, 0.05};
  int iss_instances = 100;
};

struct SweepSection {
  std::vector<double> omega = {5.0, 10.0, 20.0, 40.0};
  std::vector<double> ts = {0.01, 0.02};
};

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  SystemSection system;
  PartitionSection partition;
  CertifySection certify;
  TrainingSection training;
  L1Section l1;
  EvaluationSection evaluation;
  SweepSection sweep;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);

  /// Semantic checks; throws ConfigError naming the offending key.
  void validate() const;

  BenchmarkOptions benchmark_options() const;
  SystemBundle build_system() const;
  ExpertSign expert_sign() const;
  Partition build_partition() const;
  InitialLaw training_law() const;
  OptimizerConfig optimizer(int workers) const;
  L1Config l1_config() const;
  CouplingSpec coupling() const;
};

/// Parses the sectioned text format; errors carry "line N".
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
/// Same schema as {"master_seed": .., "system": {..}, ..}.
ExperimentConfig parse_config_json(const std::string& text, const std::string& origin = "<config>");
/// Dispatches on a leading '{'.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key, defaults included, in schema order.
std::string serialize_config_text(const ExperimentConfig& config);
std::string serialize_config_json(const ExperimentConfig& config);

/// Fully qualified key names ("system.k_gain", ...), in schema order.
std::vector<std::string> config_keys();

}  // namespace drip
