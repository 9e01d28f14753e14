// Feedback policies with value and state-Jacobian contracts, the expert,
// the policy-shift perturbation signals, and policy checkpoints.

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "drip/mlp.hpp"
#include "drip/simulate.hpp"

namespace drip {

class Policy {
 public:
  virtual ~Policy() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual Vector evaluate(const Vector& x) const = 0;
  virtual Matrix state_jacobian(const Vector& x) const = 0;

  /// Borrowing view for the integrators; the policy must outlive it.
  FeedbackLaw feedback() const {
    return [this](const Vector& x) { return evaluate(x); };
  }
};

// Tanh network policy. Owns its parameters; training works on copies.
class MlpPolicy final : public Policy {
 public:
  MlpPolicy() = default;
  explicit MlpPolicy(Mlp net) : net_(std::move(net)) {}

  int state_dim() const override { return net_.input_dim(); }
  int input_dim() const override { return net_.output_dim(); }
  Vector evaluate(const Vector& x) const override { return net_.evaluate(x); }
  Matrix state_jacobian(const Vector& x) const override { return net_.state_jacobian(x); }

  const Mlp& network() const { return net_; }
  Mlp& mutable_network() { return net_; }

 private:
  Mlp net_;
};

/// Weights ~ N(0, 1/fan_in), zero biases.
MlpPolicy mlp_policy(const std::vector<int>& widths, RngStream init_stream);

enum class ExpertSign {
  kCancelH,       // π*(x) = -Kx + h(x): removes h from the benchmark drift
  kPaperLiteral,  // π*(x) = -Kx - h(x)
};

std::string to_string(ExpertSign sign);
ExpertSign parse_expert_sign(const std::string& text);

class ExpertPolicy final : public Policy {
 public:
  ExpertPolicy(double k_gain, std::shared_ptr<const Mlp> h, ExpertSign sign);

  int state_dim() const override { return h_->input_dim(); }
  int input_dim() const override { return h_->output_dim(); }
  Vector evaluate(const Vector& x) const override;
  Matrix state_jacobian(const Vector& x) const override;

  double k_gain() const { return k_gain_; }
  ExpertSign sign() const { return sign_; }
  Matrix gain() const;

 private:
  double k_gain_;
  std::shared_ptr<const Mlp> h_;
  ExpertSign sign_;
};

/// K = k_gain·I, paired with the benchmark's frozen network.
ExpertPolicy expert_policy(double k_gain, const SystemBundle& sys,
                           ExpertSign sign = ExpertSign::kCancelH);

/// Θ_t = π̂(x_t) - π*(x_t) along a rollout of π̂, t in the knots before T.
PerturbationSignal perturbation_theta(const Policy& pi_hat, const Policy& expert,
                                      const Trajectory& pi_hat_rollout);

struct PsiSequence {
  PerturbationSignal values;              // Ψ_t
  std::vector<Matrix> jacobian_mismatch;  // ∇ₓΨ_t
};

/// Ψ_t and ∇ₓΨ_t along an expert rollout.
PsiSequence perturbation_psi(const Policy& pi_hat, const Policy& expert,
                             const Trajectory& expert_rollout);

struct LipschitzEstimate {
  double l_pi = 0.0;
  double l_dpi = 0.0;
};

// Sampled Lipschitz constants on the ball of `radius`: the largest Jacobian
// operator norm and the largest Taylor-remainder quotient
// 2‖π(ζ) - π(ζ0) - ∇π(ζ0)(ζ - ζ0)‖ / ‖ζ - ζ0‖², each inflated by 5%.
LipschitzEstimate estimate_lipschitz(const Policy& pi, double radius, int samples,
                                     std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.json manifest plus <stem>.bin holding the flat
// parameter vector as little-endian float64.

class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& what) : std::runtime_error(what) {}
};

struct CheckpointInfo {
  std::string kind;  // "mlp" or "expert"
  std::vector<int> widths;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 0;
  std::string mode;  // training mode that produced it
};

void save_checkpoint(const std::filesystem::path& stem, const MlpPolicy& policy,
                     const CheckpointInfo& info);
void save_expert_checkpoint(const std::filesystem::path& stem, const ExpertPolicy& expert,
                            std::uint64_t h_seed);

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::shared_ptr<const Policy> policy;
};

// `sys` supplies the frozen network for expert checkpoints.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& stem, const SystemBundle& sys);

}  // namespace drip
