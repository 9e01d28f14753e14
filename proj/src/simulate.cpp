#include "drip/simulate.hpp"

#include <cmath>
#include <sstream>

#include "drip/parallel.hpp"

namespace drip {

Partition::Partition(double horizon, int knots, int substeps)
    : horizon_(horizon), knots_(knots), substeps_(substeps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ContractViolation("Partition: horizon must be > 0");
  if (knots < 1) throw ContractViolation("Partition: need at least one interval");
  if (substeps < 1) throw ContractViolation("Partition: substeps must be >= 1");
}

double Partition::knot(int i) const {
  if (i < 0 || i > knots_) throw ContractViolation("Partition::knot: index out of range");
  if (i == knots_) return horizon_;
  return horizon_ * static_cast<double>(i) / knots_;
}

int Partition::knot_index(double t) const {
  const double scaled = t / interval();
  const double nearest = std::round(scaled);
  if (nearest < 0 || nearest > knots_ ||
      std::abs(knot(static_cast<int>(nearest)) - t) > 1e-9 * std::max(1.0, horizon_)) {
    std::ostringstream msg;
    msg << "time " << t << " is not a knot of the partition (ΔT=" << interval() << ")";
    throw ContractViolation(msg.str());
  }
  return static_cast<int>(nearest);
}

double PerturbationSignal::sup_norm() const {
  double out = 0.0;
  for (const Vector& v : values) out = std::max(out, v.norm());
  return out;
}

PerturbationSignal PerturbationSignal::zeros(int intervals, int dim) {
  return PerturbationSignal{std::vector<Vector>(static_cast<std::size_t>(intervals), Vector::Zero(dim))};
}

namespace {

bool blown_up(const Vector& x) { return !all_finite(x) || x.norm() > kDivergenceNorm; }

Vector rk4_interval(const SystemBundle& sys, const FeedbackLaw& policy, const Vector* extra,
                    Vector x, double t0, double h, int substeps) {
  auto rhs = [&](double t, const Vector& y) -> Vector {
    Vector u = policy(y);
    if (extra != nullptr) u += *extra;
    return sys.nominal_drift(t, y) + sys.input_operator(t) * u;
  };
  for (int j = 0; j < substeps; ++j) {
    const double t = t0 + h * j;
    const Vector k1 = rhs(t, x);
    const Vector k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
    const Vector k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
    const Vector k4 = rhs(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (blown_up(x)) break;
  }
  return x;
}

void check_initial(const SystemBundle& sys, const Vector& x0) {
  if (x0.size() != sys.state_dim) throw ContractViolation("initial state dimension mismatch");
}

}  // namespace

Vector flow_map(const SystemBundle& sys, const FeedbackLaw& policy, const Vector& x, double t,
                const Partition& partition, const Vector* extra_input) {
  const int i = partition.knot_index(t);
  if (i == partition.knots()) throw ContractViolation("flow_map: t must be a knot before T");
  return rk4_interval(sys, policy, extra_input, x, partition.knot(i), partition.step(),
                      partition.substeps());
}

Trajectory integrate_ode(const SystemBundle& sys, const FeedbackLaw& policy,
                         const PerturbationSignal* extra_input, const Vector& x0,
                         const Partition& partition) {
  check_initial(sys, x0);
  const int k = partition.knots();
  if (extra_input != nullptr && extra_input->values.size() < static_cast<std::size_t>(k)) {
    throw ContractViolation("integrate_ode: extra input shorter than the partition");
  }
  Trajectory traj;
  traj.partition = partition;
  traj.states.reserve(static_cast<std::size_t>(k + 1));
  traj.inputs.reserve(static_cast<std::size_t>(k + 1));
  traj.states.push_back(x0);

  Vector x = x0;
  for (int i = 0; i < k; ++i) {
    const Vector* extra = extra_input ? &extra_input->at_interval(i) : nullptr;
    Vector u = policy(x);
    if (extra) u += *extra;
    traj.inputs.push_back(std::move(u));
    x = flow_map(sys, policy, x, partition.knot(i), partition, extra);
    if (blown_up(x)) {
      traj.diverged = true;
      traj.diverged_at = i + 1;
      return traj;
    }
    traj.states.push_back(x);
  }
  traj.inputs.push_back(policy(x));
  return traj;
}

Trajectory integrate_sde(const SystemBundle& sys, SdeControl control, const Vector& x0,
                         const Partition& partition, RngStream stream) {
  check_initial(sys, x0);
  const int k = partition.knots();
  const int substeps = partition.substeps();
  const double dt = partition.step();
  const double sqrt_dt = std::sqrt(dt);
  RngCursor cursor(stream);

  Trajectory traj;
  traj.partition = partition;
  traj.provenance = stream;
  traj.states.reserve(static_cast<std::size_t>(k + 1));
  traj.inputs.reserve(static_cast<std::size_t>(k + 1));
  traj.states.push_back(x0);

  Vector x = x0;
  for (int i = 0; i < k; ++i) {
    const double t0 = partition.knot(i);
    for (int j = 0; j < substeps; ++j) {
      const double t = t0 + dt * j;
      const Vector u = control(t, x, dt);
      if (j == 0) traj.inputs.push_back(u);
      const Vector dw = sqrt_dt * gaussian_draw(cursor, sys.noise_dim);
      x += eval_true_drift(sys, t, x, u) * dt + sys.diffusion_uncertainty(t, x) * dw;
      if (blown_up(x)) {
        traj.diverged = true;
        traj.diverged_at = i + 1;
        return traj;
      }
    }
    traj.states.push_back(x);
  }
  traj.inputs.push_back(control(partition.horizon(), x, dt));
  return traj;
}

// ---------------------------------------------------------------------------

InitialLaw InitialLaw::point_mass(Vector x) {
  InitialLaw law;
  law.kind_ = Kind::kPointMass;
  law.a_ = std::move(x);
  return law;
}

InitialLaw InitialLaw::uniform_box(Vector lower, Vector upper) {
  if (lower.size() != upper.size() || (upper.array() < lower.array()).any()) {
    throw ContractViolation("uniform_box: bounds are inconsistent");
  }
  InitialLaw law;
  law.kind_ = Kind::kUniformBox;
  law.a_ = std::move(lower);
  law.b_ = std::move(upper);
  return law;
}

InitialLaw InitialLaw::gaussian(Vector mean, Vector std_dev) {
  if (mean.size() != std_dev.size() || (std_dev.array() < 0.0).any()) {
    throw ContractViolation("gaussian law: bad parameters");
  }
  InitialLaw law;
  law.kind_ = Kind::kGaussian;
  law.a_ = std::move(mean);
  law.b_ = std::move(std_dev);
  return law;
}

InitialLaw InitialLaw::empirical(std::vector<Vector> points) {
  if (points.empty()) throw ContractViolation("empirical law needs at least one point");
  InitialLaw law;
  law.kind_ = Kind::kEmpirical;
  law.points_ = std::move(points);
  return law;
}

namespace {

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ContractViolation("initial law: cannot parse number '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) {
      throw ContractViolation("initial law: cannot parse number '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

Vector broadcast(const std::vector<double>& values, std::size_t begin, std::size_t count, int dim) {
  if (count == 1) return Vector::Constant(dim, values[begin]);
  if (count != static_cast<std::size_t>(dim)) {
    throw ContractViolation("initial law: expected 1 or " + std::to_string(dim) + " values");
  }
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = values[begin + static_cast<std::size_t>(i)];
  return v;
}

std::string join(const Vector& v) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << v(i);
  return out.str();
}

}  // namespace

InitialLaw InitialLaw::parse(const std::string& text, int dim) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ContractViolation("initial law '" + text + "': expected kind:values");
  }
  const std::string kind = text.substr(0, colon);
  const std::vector<double> v = parse_numbers(text.substr(colon + 1));
  if (kind == "point") return point_mass(broadcast(v, 0, v.size(), dim));
  if (kind == "uniform" || kind == "gaussian") {
    if (v.size() != 2 && v.size() != static_cast<std::size_t>(2 * dim)) {
      throw ContractViolation("initial law '" + text + "': expected 2 or 2n values");
    }
    const std::size_t half = v.size() / 2;
    Vector first = broadcast(v, 0, half, dim);
    Vector second = broadcast(v, half, half, dim);
    return kind == "uniform" ? uniform_box(first, second) : gaussian(first, second);
  }
  throw ContractViolation("initial law '" + text + "': unknown kind '" + kind + "'");
}

int InitialLaw::dim() const {
  return static_cast<int>(kind_ == Kind::kEmpirical ? points_.front().size() : a_.size());
}

Vector InitialLaw::sample(RngCursor& cursor) const {
  switch (kind_) {
    case Kind::kPointMass:
      return a_;
    case Kind::kUniformBox: {
      Vector x(a_.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = a_(i) + (b_(i) - a_(i)) * cursor.uniform();
      return x;
    }
    case Kind::kGaussian:
      return a_ + b_.cwiseProduct(gaussian_draw(cursor, static_cast<int>(a_.size())));
    case Kind::kEmpirical: {
      const auto idx = static_cast<std::size_t>(cursor.next_u64() % points_.size());
      return points_[idx];
    }
  }
  return a_;
}

Vector InitialLaw::mean() const {
  switch (kind_) {
    case Kind::kPointMass:
    case Kind::kGaussian:
      return a_;
    case Kind::kUniformBox:
      return 0.5 * (a_ + b_);
    case Kind::kEmpirical: {
      Vector m = Vector::Zero(points_.front().size());
      for (const Vector& p : points_) m += p;
      return m / static_cast<double>(points_.size());
    }
  }
  return a_;
}

Vector InitialLaw::variance() const {
  switch (kind_) {
    case Kind::kPointMass:
      return Vector::Zero(a_.size());
    case Kind::kGaussian:
      return b_.array().square();
    case Kind::kUniformBox:
      return (b_ - a_).array().square() / 12.0;
    case Kind::kEmpirical: {
      const Vector m = mean();
      Vector v = Vector::Zero(m.size());
      for (const Vector& p : points_) v += (p - m).array().square().matrix();
      return v / static_cast<double>(points_.size());
    }
  }
  return Vector::Zero(a_.size());
}

std::string InitialLaw::describe() const {
  switch (kind_) {
    case Kind::kPointMass:
      return "point:" + join(a_);
    case Kind::kUniformBox:
      return "uniform:" + join(a_) + "," + join(b_);
    case Kind::kGaussian:
      return "gaussian:" + join(a_) + "," + join(b_);
    case Kind::kEmpirical:
      return "empirical:" + std::to_string(points_.size()) + " points";
  }
  return "";
}

int Ensemble::diverged_count() const {
  int n = 0;
  for (const Trajectory& t : trajectories) n += t.diverged ? 1 : 0;
  return n;
}

RngStream ensemble_stream(std::uint64_t master_seed, StreamPurpose purpose, int index) {
  return RngStream{derive_seed(master_seed, static_cast<std::uint64_t>(purpose)),
                   static_cast<std::uint64_t>(index)};
}

Ensemble simulate_ensemble(const EnsembleSpec& spec) {
  if (spec.system == nullptr) throw ContractViolation("simulate_ensemble: no system");
  if (spec.count < 1) throw ContractViolation("simulate_ensemble: count must be >= 1");
  if (spec.initial_law.dim() != spec.system->state_dim) {
    throw ContractViolation("simulate_ensemble: initial law dimension mismatch");
  }
  if (spec.stochastic ? !spec.make_control : !spec.policy) {
    throw ContractViolation("simulate_ensemble: missing control");
  }
  Ensemble out;
  out.initial_law = spec.initial_law.describe();
  out.master_seed = spec.master_seed;
  out.trajectories.resize(static_cast<std::size_t>(spec.count));
  parallel_for(spec.count, spec.workers, [&](int i) {
    RngCursor init(ensemble_stream(spec.master_seed, StreamPurpose::kInitial, i));
    const Vector x0 = spec.initial_law.sample(init);
    auto& slot = out.trajectories[static_cast<std::size_t>(i)];
    if (spec.stochastic) {
      slot = integrate_sde(*spec.system, spec.make_control(i), x0, spec.partition,
                           ensemble_stream(spec.master_seed, StreamPurpose::kNoise, i));
    } else {
      slot = integrate_ode(*spec.system, spec.policy, nullptr, x0, spec.partition);
    }
  });
  return out;
}

}  // namespace drip
