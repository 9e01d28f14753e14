// Sampled L1 distributionally robust adaptive controller: process
// predictor, piecewise-constant adaptation law, matched-component
// extraction, and first-order low-pass filter.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "drip/dynamics.hpp"
#include "drip/policy.hpp"
#include "drip/simulate.hpp"

namespace drip {

enum class AdaptationSign {
  kVerbatim,         // λ_s (1 - e^{λ_s Ts})^{-1}
  kNegatedExponent,  // λ_s (1 - e^{-λ_s Ts})^{-1}
};

std::string to_string(AdaptationSign sign);
AdaptationSign parse_adaptation_sign(const std::string& text);

struct L1Config {
  double omega = 20.0;    // filter bandwidth, rad/s
  double ts = 0.01;       // adaptation sampling period, s
  double lambda_s = 10.0; // predictor gain, 1/s
  AdaptationSign sign = AdaptationSign::kVerbatim;

  void validate() const;
  /// Gain applied to ŷ(iTs) - y(iTs).
  double adaptation_coefficient() const;
};

struct L1State {
  Vector y_hat;                // predictor state
  Vector lambda_hat;           // Λ̂, held on [iTs, (i+1)Ts)
  Vector lambda_hat_parallel;  // Θ_ad·Λ̂ ∈ R^m, held with Λ̂
  Vector u;                    // filter output
  double last_sample_time = -1.0;
  bool initialized = false;
};

// What the controller knows about the plant: the baseline closed-loop drift
// f(t,y) + g(t)π_base(y) and the input operator g.
struct KnownDynamics {
  DriftField baseline_drift;
  InputOperator input_operator;
  int state_dim = 0;
  int input_dim = 0;
};

KnownDynamics known_dynamics(const SystemBundle& sys);
/// Baseline includes a nominal feedback; the pointer must outlive the result.
KnownDynamics known_dynamics(const SystemBundle& sys, std::shared_ptr<const Policy> baseline);

/// [I_m 0] [g g⊥]^{-1}; satisfies Θ_ad·g = I_m and Θ_ad·g⊥ = 0.
Matrix theta_ad(const Matrix& g);

/// Zero estimates, ŷ = y0, u = 0.
L1State initial_l1_state(const Vector& y0, int input_dim);

/// One explicit-Euler step of dŷ = -λ_s(ŷ - y) + baseline(t,y) + g(t)u + Λ̂.
void predictor_step(L1State& state, const KnownDynamics& known, const Vector& y, double t,
                    double dt, const L1Config& config);

/// Sample the adaptation law at t = i·Ts (Λ̂ = 0 for i = 0).
void adaptation_update(L1State& state, const KnownDynamics& known, const Vector& y, double t,
                       const L1Config& config);

/// Exact step of du = -ω(u + Λ̂∥)dt with Λ̂∥ held over dt.
void filter_step(L1State& state, double dt, const L1Config& config);

// One controller tick at substep time t: adapt if t is on the Ts grid,
// advance predictor and filter over dt, and return the input u(t) that the
// predictor used for this step.
Vector l1_control(L1State& state, const KnownDynamics& known, const Vector& y, double t,
                  double dt, const L1Config& config);

struct L1TraceRow {
  double t = 0.0;
  Vector y_hat;
  Vector lambda_hat;
  Vector u;
};

// Per-trajectory controller: owns its state and optionally records a trace
// at multiples of `trace_interval`.
class L1Controller {
 public:
  L1Controller(KnownDynamics known, L1Config config, double trace_interval = 0.0);

  Vector operator()(double t, const Vector& y, double dt);

  const L1State& state() const { return state_; }
  const std::vector<L1TraceRow>& trace() const { return trace_; }

 private:
  KnownDynamics known_;
  L1Config config_;
  double trace_interval_;
  L1State state_;
  std::vector<L1TraceRow> trace_;
};

// π(x) plus, when `l1` is set, the adaptive input built on the closed loop
// under π. Fresh controller state per call.
SdeControl make_layered_control(const SystemBundle& sys, std::shared_ptr<const Policy> policy,
                                const L1Config* l1);

}  // namespace drip
