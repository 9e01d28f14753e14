// Imitation-gap estimators, the pathwise decomposition check, δ-ISS bound
// verification, and contraction certification.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drip/l1drac.hpp"
#include "drip/policy.hpp"
#include "drip/simulate.hpp"

namespace drip {

class CertificationFailed : public std::runtime_error {
 public:
  CertificationFailed(const std::string& what, Vector worst_point, double worst_t,
                      double worst_log_norm)
      : std::runtime_error(what),
        worst_point(std::move(worst_point)),
        worst_t(worst_t),
        worst_log_norm(worst_log_norm) {}

  Vector worst_point;
  double worst_t;
  double worst_log_norm;
};

/// Central differences with one Richardson extrapolation: (4·D(h/2) - D(h))/3.
Matrix richardson_jacobian(const DriftField& f, double t, const Vector& x, double h = 1e-5);

enum class DriftJacobianMode { kFiniteDifference, kAnalytic };

struct ContractionCertificate {
  double lambda = 0.0;          // -max sampled log norm
  double worst_log_norm = 0.0;
  Vector worst_point;
  double worst_t = 0.0;
  int probes = 0;
  // max |FD - analytic| entry of ∇ₓf over the probes (NaN if no analytic form).
  double jacobian_crosscheck = 0.0;
};

// Samples (t, x) with ‖x‖ ≤ probe_radius and t in [0, horizon]; throws
// CertificationFailed when the closed loop's log norm reaches 0 anywhere.
ContractionCertificate certify_contraction(const SystemBundle& sys, const Policy& policy,
                                           double probe_radius, int probes, double horizon = 10.0,
                                           std::uint64_t seed = 1,
                                           DriftJacobianMode mode = DriftJacobianMode::kFiniteDifference);

// ---------------------------------------------------------------------------

struct CouplingSpec {
  enum class Mode {
    kSynchronous,  // ξ̄ = ξ
    kIndependent,  // ξ̄ ~ D̄ drawn independently of ξ ~ D
    kShifted,      // ξ̄ = scale·ξ + shift
  };
  Mode mode = Mode::kSynchronous;
  InitialLaw nominal_law;  // D
  InitialLaw true_law;     // D̄ (independent mode)
  Vector shift;
  double scale = 1.0;

  /// (ξ, ξ̄) for pair index i.
  std::pair<Vector, Vector> draw(std::uint64_t master_seed, int index) const;
  std::string describe() const;
};

std::string to_string(CouplingSpec::Mode mode);
CouplingSpec::Mode parse_coupling_mode(const std::string& text);

struct GapReport {
  std::vector<double> times;
  std::vector<double> gap_mean;  // E‖·‖ per knot over non-diverged pairs
  std::vector<double> gap_se;    // Monte Carlo standard error per knot
  std::vector<int> moment_orders;               // p values
  std::vector<std::vector<double>> moments;     // E[‖·‖^{2p}]^{1/2p} per p, per knot
  int sample_count = 0;    // pairs requested
  int diverged_count = 0;  // pairs excluded
  double max_gap = 0.0;
  int max_index = 0;
  // Per included pair, the distance at every knot.
  std::vector<std::vector<double>> path_distances;

  int included() const { return sample_count - diverged_count; }
  double max_moment(int p) const;
};

// Pathwise distances between paired trajectories; a pair with either side
// incomplete is excluded and counted as diverged.
GapReport gap_report(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b,
                     const std::vector<int>& moment_orders = {1, 2, 3});

/// max_t E_ξ ‖x_t(ξ; π̂) - x_t(ξ; π*)‖ over the given initial states.
GapReport policy_gap(const Policy& pi_hat, const Policy& expert, const SystemBundle& sys,
                     const std::vector<Vector>& initial_states, const Partition& partition,
                     int workers = 1);

struct LayeredPolicy {
  std::shared_ptr<const Policy> imitation;  // π_TaSIL
  std::optional<L1Config> l1;               // adaptive layer, off when empty
};

// Shared sample set: per pair i, the nominal expert rollout from ξ, the
// nominal imitation rollout from ξ, and the SDE rollout under the layered
// policy from ξ̄ with noise stream i.
struct PairedRollouts {
  std::vector<Vector> xi;
  std::vector<Vector> xi_bar;
  std::vector<Trajectory> expert;
  std::vector<Trajectory> imitation;
  std::vector<Trajectory> uncertain;
};

PairedRollouts paired_rollouts(const LayeredPolicy& policy, const Policy& expert,
                               const SystemBundle& sys, const CouplingSpec& coupling,
                               int ensemble_size, const Partition& partition,
                               std::uint64_t master_seed, int workers = 1);

/// max_t E ‖X_t(ξ̄; π_ad) - x_t(ξ; π_TaSIL)‖.
GapReport uncertainty_gap(const LayeredPolicy& policy, const SystemBundle& sys,
                          const CouplingSpec& coupling, int ensemble_size,
                          const Partition& partition, std::uint64_t master_seed, int workers = 1);

/// max_t E ‖X_t(ξ̄; π_ad) - x_t(ξ; π*)‖.
GapReport total_gap(const LayeredPolicy& policy, const Policy& expert, const SystemBundle& sys,
                    const CouplingSpec& coupling, int ensemble_size, const Partition& partition,
                    std::uint64_t master_seed, int workers = 1);

struct GapDecomposition {
  GapReport total;
  GapReport policy;
  GapReport uncertainty;
  // max over pairs and knots of total - (policy + uncertainty), pathwise.
  double max_pathwise_violation = 0.0;
  // max over knots of mean total - (mean policy + mean uncertainty).
  double max_mean_violation = 0.0;
};

GapDecomposition decompose_gaps(const PairedRollouts& rollouts,
                                const std::vector<int>& moment_orders = {1, 2, 3});

// ---------------------------------------------------------------------------

struct DeltaIssParams {
  double lambda = 0.0;   // certified contraction rate
  double theta = 0.0;    // in (0, 2λ/Δ_g²)
  double delta_g = 0.0;

  double lambda_theta() const { return 2.0 * lambda - theta * delta_g * delta_g; }
  void validate() const;
};

/// 20 log-spaced θ in (0.01, 0.99)·2λ/Δ_g² by default.
std::vector<double> theta_grid(double lambda, double delta_g, int count = 20);

struct IssRow {
  double t = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs; negative is a falsification
};

// Compares ‖x_t(ξ1; ς) - x_t(ξ2; 0)‖ with
//   e^{-λ_θ t/2}‖ξ1 - ξ2‖ + (θλ_θ)^{-1/2}(1 - e^{-λ_θ t})^{1/2} max‖ς‖
// at every knot.
std::vector<IssRow> delta_iss_check(const SystemBundle& sys, const Policy& expert,
                                    const PerturbationSignal& perturbation, const Vector& xi1,
                                    const Vector& xi2, const DeltaIssParams& params,
                                    const Partition& partition);

/// The δ-ISS gain (θλ_θ)^{-1/2}(1 - e^{-λ_θ t})^{1/2} at time t.
double delta_iss_gain(const DeltaIssParams& params, double t);

struct IssInstance {
  double theta = 0.0;
  double initial_distance = 0.0;
  double perturbation_sup = 0.0;
  double min_margin = 0.0;
  double min_margin_time = 0.0;
};

struct IssSuiteResult {
  std::vector<IssInstance> instances;
  int falsifications = 0;  // instances with a margin below -tolerance
  double min_margin = 0.0;
};

// Random instances: ξ1, ξ2 ~ law, θ log-uniform over the admissible range,
// ς Gaussian per interval with per-instance scale up to `perturbation_scale`.
IssSuiteResult iss_falsification_suite(const SystemBundle& sys, const Policy& expert,
                                       double lambda, double delta_g, const InitialLaw& law,
                                       const Partition& partition, int instances,
                                       std::uint64_t seed, double perturbation_scale = 1.0,
                                       double tolerance = 1e-6);

/// max over knots of E[‖x_t‖^{2p}]^{1/2p} over complete trajectories.
double moment_bound(const Ensemble& ensemble, int p);

struct TailCheck {
  double delta = 0.0;
  int p = 1;
  double moment = 0.0;     // max_t E[d^{2p}]^{1/2p}
  double threshold = 0.0;  // e·moment
  double fraction = 0.0;   // paths with max_t d > threshold
  double bound = 0.0;      // δ + 3·sqrt(δ(1-δ)/N)
  bool pass = false;
};

/// Markov-style tail check with p = ceil(log sqrt(1/δ)) (at least 1).
TailCheck tail_check(const GapReport& report, double delta);

}  // namespace drip
