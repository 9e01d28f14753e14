// Time partitions, RK4 integration of the nominal processes, Euler-Maruyama
// integration of the uncertain SDE, and seeded ensembles.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "drip/dynamics.hpp"
#include "drip/numerics.hpp"

namespace drip {

// Uniform grid {0, T/k, ..., T}; each interval is split into `substeps`
// integrator steps.
class Partition {
 public:
  Partition() = default;
  Partition(double horizon, int knots, int substeps);

  double horizon() const { return horizon_; }
  int knots() const { return knots_; }  // number of intervals k
  int substeps() const { return substeps_; }
  double interval() const { return horizon_ / knots_; }
  double step() const { return interval() / substeps_; }
  double knot(int i) const;
  /// Index of knot t; throws ContractViolation when t is off the grid.
  int knot_index(double t) const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  double horizon_ = 1.0;
  int knots_ = 1;
  int substeps_ = 1;
};

// Values held constant on each interval [t_i, t_{i+1}), i = 0..k-1.
struct PerturbationSignal {
  std::vector<Vector> values;

  const Vector& at_interval(int i) const { return values.at(static_cast<std::size_t>(i)); }
  /// max_i ‖ς_i‖
  double sup_norm() const;
  static PerturbationSignal zeros(int intervals, int dim);
};

inline constexpr double kDivergenceNorm = 1e9;

struct Trajectory {
  Partition partition;
  std::vector<Vector> states;  // one per knot reached (k+1 when complete)
  std::vector<Vector> inputs;  // input applied at each recorded knot
  std::optional<RngStream> provenance;  // empty for deterministic rollouts
  bool diverged = false;
  int diverged_at = -1;  // first knot index whose interval blew up

  bool complete() const {
    return !diverged && states.size() == static_cast<std::size_t>(partition.knots() + 1);
  }
};

using FeedbackLaw = std::function<Vector(const Vector& x)>;

// Stateful control called once per integrator substep with the measured
// state; dt is the step it will be held for.
using SdeControl = std::function<Vector(double t, const Vector& x, double dt)>;

/// Classic RK4 on ẋ = f̄(t, x, π(x) + ς(t)).
Trajectory integrate_ode(const SystemBundle& sys, const FeedbackLaw& policy,
                         const PerturbationSignal* extra_input, const Vector& x0,
                         const Partition& partition);

/// One interval of the nominal closed loop starting at knot t.
Vector flow_map(const SystemBundle& sys, const FeedbackLaw& policy, const Vector& x, double t,
                const Partition& partition, const Vector* extra_input = nullptr);

/// Euler-Maruyama on dX = F_μ(t,X,u)dt + F_σ(t,X)dW, u from `control`.
Trajectory integrate_sde(const SystemBundle& sys, SdeControl control, const Vector& x0,
                         const Partition& partition, RngStream stream);

// ---------------------------------------------------------------------------

class InitialLaw {
 public:
  enum class Kind { kPointMass, kUniformBox, kGaussian, kEmpirical };

  static InitialLaw point_mass(Vector x);
  static InitialLaw uniform_box(Vector lower, Vector upper);
  static InitialLaw gaussian(Vector mean, Vector std_dev);
  static InitialLaw empirical(std::vector<Vector> points);
  // "point:a,b,..", "uniform:lo,hi" (same bounds each axis), "gaussian:mean,std";
  // a single value is broadcast to all n coordinates.
  static InitialLaw parse(const std::string& text, int dim);

  Kind kind() const { return kind_; }
  int dim() const;
  bool compact_support() const { return kind_ != Kind::kGaussian; }
  Vector sample(RngCursor& cursor) const;
  Vector mean() const;
  /// Per-coordinate variance.
  Vector variance() const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::kPointMass;
  Vector a_;
  Vector b_;
  std::vector<Vector> points_;
};

struct Ensemble {
  std::vector<Trajectory> trajectories;
  std::string initial_law;
  std::uint64_t master_seed = 0;
  int diverged_count() const;
};

enum class StreamPurpose : std::uint64_t {
  kInitial = 0x696e6974,
  kNoise = 0x6e6f6973,
  kCoupled = 0x63706c64,
};

/// Stream i of the given purpose under a master seed.
RngStream ensemble_stream(std::uint64_t master_seed, StreamPurpose purpose, int index);

struct EnsembleSpec {
  const SystemBundle* system = nullptr;
  // Deterministic rollouts use `policy`; stochastic ones build a fresh
  // controller per trajectory with `make_control`.
  bool stochastic = true;
  FeedbackLaw policy;
  std::function<SdeControl(int index)> make_control;
  InitialLaw initial_law;
  int count = 1;
  Partition partition;
  std::uint64_t master_seed = 0;
  int workers = 1;
};

/// Trajectory i draws its start and noise from stream id i.
Ensemble simulate_ensemble(const EnsembleSpec& spec);

}  // namespace drip
