// Expert demonstrations on the partition grid and the first-order
// (value + Jacobian) imitation loss, its exact gradient, and an Adam trainer.

#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "drip/policy.hpp"
#include "drip/simulate.hpp"

namespace drip {

class ExpertUnstable : public std::runtime_error {
 public:
  explicit ExpertUnstable(const std::string& what) : std::runtime_error(what) {}
};

class TrainingAborted : public std::runtime_error {
 public:
  explicit TrainingAborted(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingSet {
  Partition partition;
  std::shared_ptr<const Policy> expert;
  std::vector<Vector> initial_states;     // ξ_i
  std::vector<Trajectory> trajectories;   // expert rollouts on the nominal system
  std::string initial_law;
  std::uint64_t master_seed = 0;

  int size() const { return static_cast<int>(trajectories.size()); }
  /// Uniform mixture of Dirac masses at the ξ_i.
  InitialLaw empirical_law() const { return InitialLaw::empirical(initial_states); }
};

// n expert rollouts from ξ_i ~ law (stream i of the master seed).
// Throws ExpertUnstable if any rollout diverges.
TrainingSet generate_training_data(const SystemBundle& sys, std::shared_ptr<const Policy> expert,
                                   const InitialLaw& law, int n, const Partition& partition,
                                   std::uint64_t master_seed);

struct Smoothing {
  enum class Kind { kHardMax, kLogSumExp };
  Kind kind = Kind::kHardMax;
  double beta = 1.0;

  static Smoothing hard_max() { return {}; }
  static Smoothing log_sum_exp(double beta) { return {Kind::kLogSumExp, beta}; }
};

enum class JacobianNorm { kOperator, kFrobenius };
enum class LossTerms { kValueAndJacobian, kValueOnly };

struct LossOptions {
  Smoothing smoothing;
  JacobianNorm norm = JacobianNorm::kOperator;
  LossTerms terms = LossTerms::kValueAndJacobian;
};

struct TrajectoryLoss {
  double value_term = 0.0;     // aggregated ‖Ψ_t‖ over knots
  double jacobian_term = 0.0;  // aggregated ‖∇ₓΨ_t‖
  int value_argmax = 0;
  int jacobian_argmax = 0;
  double loss = 0.0;           // ½(value + jacobian), or ½·value in value-only mode
};

struct TasilLossReport {
  std::vector<TrajectoryLoss> per_trajectory;
  double mean_loss = 0.0;
  double mean_value_term = 0.0;
  double mean_jacobian_term = 0.0;
};

// Terms aggregate with the hard max or with the normalized log-sum-exp
// (1/β)·log((1/k)Σ exp(β v_t)), which lies in [max - log(k)/β, max].
TasilLossReport tasil_loss(const Policy& pi_hat, const TrainingSet& data,
                           const LossOptions& options = {});

struct LossGradient {
  double loss = 0.0;       // under options.smoothing
  double hard_loss = 0.0;  // same terms with the hard max
  double value_term = 0.0;
  double jacobian_term = 0.0;
  double hard_value_term = 0.0;
  double hard_jacobian_term = 0.0;
  Vector gradient;
};

/// Exact gradient of the (smoothed) loss with respect to the network parameters.
LossGradient loss_gradient(const MlpPolicy& pi_hat, const TrainingSet& data,
                           const LossOptions& options = {}, int workers = 1);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  int steps = 5000;
  double beta_start = 1.0;
  double beta_end = 50.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t init_seed = 1;
  JacobianNorm norm = JacobianNorm::kOperator;
  LossTerms terms = LossTerms::kValueAndJacobian;
  int workers = 1;
};

struct TrainingLogRow {
  int step = 0;
  double loss = 0.0;  // hard-max loss of the parameters at this step
  double value_term = 0.0;
  double jacobian_term = 0.0;
  double grad_norm = 0.0;
};

struct TrainingResult {
  MlpPolicy policy;  // best hard-max loss seen
  std::vector<TrainingLogRow> log;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int best_step = 0;
};

/// Adam on the log-sum-exp loss with β annealed geometrically.
TrainingResult train_tasil(const TrainingSet& data, const std::vector<int>& widths,
                           const OptimizerConfig& config);

}  // namespace drip
