// Known and unknown vector fields, the 4-D benchmark system, and
// certification of the linear-growth bounds on the uncertainties.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "drip/mlp.hpp"
#include "drip/numerics.hpp"

namespace drip {

class NonFiniteField : public std::runtime_error {
 public:
  explicit NonFiniteField(const std::string& what) : std::runtime_error(what) {}
};

using DriftField = std::function<Vector(double t, const Vector& x)>;
using InputOperator = std::function<Matrix(double t)>;
using DiffusionField = std::function<Matrix(double t, const Vector& x)>;
using JacobianField = std::function<Matrix(double t, const Vector& x)>;

// The nominal drift f, input operator g, and the uncertainties Λ_μ, Λ_σ.
// Immutable once built; every map is pure.
struct SystemBundle {
  int state_dim = 0;
  int input_dim = 0;
  int noise_dim = 0;
  DriftField nominal_drift;
  InputOperator input_operator;
  DriftField drift_uncertainty;
  DiffusionField diffusion_uncertainty;
  // Analytic ∇ₓf when available; certification cross-checks it against
  // finite differences.
  JacobianField nominal_drift_jacobian;
  // Frozen network inside the benchmark drift (empty for other systems).
  std::shared_ptr<const Mlp> known_network;
  // True when Λ_μ ≡ 0 and Λ_σ ≡ 0, so the "true" system is the nominal ODE.
  bool uncertainty_free = false;
};

/// f(t,x) + g(t)u + Λ_μ(t,x).
Vector eval_true_drift(const SystemBundle& sys, double t, const Vector& x, const Vector& u);
/// f(t,x) + g(t)u.
Vector eval_nominal_drift(const SystemBundle& sys, double t, const Vector& x, const Vector& u);

enum class DriftUncertaintyReading {
  kAllOnes,  // (μ0 + μ1‖X‖)·𝟙
  kState,    // (μ0 + μ1‖X‖)·X
};

struct BenchmarkOptions {
  double decay = 0.05;
  double network_gain = 0.25;
  double input_gain = 0.25;
  double mu_offset = 0.1;
  double mu_slope = 0.05;
  double sigma_offset = 0.1;
  double sigma_slope = 0.05;
  // Multiplies both uncertainties; 0 gives the zero-uncertainty bundle.
  double uncertainty_scale = 1.0;
  DriftUncertaintyReading drift_reading = DriftUncertaintyReading::kAllOnes;
  int network_hidden = 16;
  double network_weight_std = 0.5;  // 0 makes h identically zero
};

/// 4-D benchmark: f = -decay·X - network_gain·h(X), g = input_gain·I.
SystemBundle benchmark_system(std::uint64_t h_seed, const BenchmarkOptions& options = {});

/// The frozen 4->hidden->4 tanh network used inside the benchmark drift.
Mlp benchmark_network(std::uint64_t h_seed, const BenchmarkOptions& options);

/// Scalar or general linear system dx = A x dt + B u dt (no uncertainty).
SystemBundle linear_system(const Matrix& a, const Matrix& b);

struct GrowthConstants {
  double delta_mu = 0.0;
  double delta_sigma = 0.0;
  double delta_g = 0.0;
};

// Smallest constants satisfying
//   ‖Λ_μ‖² ≤ Δ_μ²(1+‖x‖²),  ‖Λ_σ‖_F² ≤ Δ_σ²(1+‖x‖²)^{1/2},  ‖g‖_F ≤ Δ_g
// over ‖x‖ ≤ radius and t in [0, horizon], each inflated by 5%.
// The probe set is a radial grid (grid_points radii-direction pairs).
GrowthConstants fit_growth_constants(const SystemBundle& sys, double radius, int grid_points,
                                     double horizon = 10.0, std::uint64_t seed = 1);

inline constexpr double kCertificationMargin = 1.05;

}  // namespace drip
