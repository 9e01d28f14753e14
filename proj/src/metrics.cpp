#include "drip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "drip/parallel.hpp"

namespace drip {

Matrix richardson_jacobian(const DriftField& f, double t, const Vector& x, double h) {
  const Eigen::Index n = x.size();
  const Vector f0 = f(t, x);
  Matrix jac(f0.size(), n);
  auto central = [&](Eigen::Index j, double step) -> Vector {
    Vector xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    return (f(t, xp) - f(t, xm)) / (2.0 * step);
  };
  for (Eigen::Index j = 0; j < n; ++j) {
    jac.col(j) = (4.0 * central(j, 0.5 * h) - central(j, h)) / 3.0;
  }
  return jac;
}

ContractionCertificate certify_contraction(const SystemBundle& sys, const Policy& policy,
                                           double probe_radius, int probes, double horizon,
                                           std::uint64_t seed, DriftJacobianMode mode) {
  if (probes < 10000) throw ContractViolation("certify_contraction: need at least 1e4 probes");
  if (!(probe_radius > 0.0) || !(horizon >= 0.0)) {
    throw ContractViolation("certify_contraction: radius must be positive, horizon non-negative");
  }
  if (policy.state_dim() != sys.state_dim || policy.input_dim() != sys.input_dim) {
    throw ContractViolation("certify_contraction: policy does not match the system");
  }
  if (mode == DriftJacobianMode::kAnalytic && !sys.nominal_drift_jacobian) {
    throw ContractViolation("certify_contraction: system has no analytic drift Jacobian");
  }
  const int n = sys.state_dim;
  RngCursor cursor(RngStream{derive_seed(seed, 0x63657274), 0});

  ContractionCertificate cert;
  cert.probes = probes;
  cert.worst_log_norm = -std::numeric_limits<double>::infinity();
  cert.jacobian_crosscheck =
      sys.nominal_drift_jacobian ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < probes; ++i) {
    Vector x;
    double t;
    if (i == 0) {
      x = Vector::Zero(n);
      t = 0.0;
    } else {
      Vector dir = gaussian_draw(cursor, n);
      dir /= dir.norm();
      x = probe_radius * std::pow(cursor.uniform(), 1.0 / n) * dir;
      t = horizon * cursor.uniform();
    }
    const Matrix fd = richardson_jacobian(sys.nominal_drift, t, x);
    Matrix df = fd;
    if (sys.nominal_drift_jacobian) {
      const Matrix analytic = sys.nominal_drift_jacobian(t, x);
      cert.jacobian_crosscheck =
          std::max(cert.jacobian_crosscheck, (analytic - fd).cwiseAbs().maxCoeff());
      if (mode == DriftJacobianMode::kAnalytic) df = analytic;
    }
    const Matrix closed = df + sys.input_operator(t) * policy.state_jacobian(x);
    const double mu = log_norm_2(closed);
    if (!std::isfinite(mu)) {
      throw CertificationFailed("non-finite closed-loop Jacobian", x, t, mu);
    }
    if (mu > cert.worst_log_norm) {
      cert.worst_log_norm = mu;
      cert.worst_point = x;
      cert.worst_t = t;
    }
  }
  if (cert.worst_log_norm >= 0.0) {
    std::ostringstream msg;
    msg << "closed loop is not contracting: log norm " << cert.worst_log_norm << " at t="
        << cert.worst_t << ", |x|=" << cert.worst_point.norm();
    throw CertificationFailed(msg.str(), cert.worst_point, cert.worst_t, cert.worst_log_norm);
  }
  cert.lambda = -cert.worst_log_norm;
  return cert;
}

// ---------------------------------------------------------------------------

std::string to_string(CouplingSpec::Mode mode) {
  switch (mode) {
    case CouplingSpec::Mode::kSynchronous: return "synchronous";
    case CouplingSpec::Mode::kIndependent: return "independent";
    case CouplingSpec::Mode::kShifted: return "shifted";
  }
  return "synchronous";
}

CouplingSpec::Mode parse_coupling_mode(const std::string& text) {
  if (text == "synchronous") return CouplingSpec::Mode::kSynchronous;
  if (text == "independent") return CouplingSpec::Mode::kIndependent;
  if (text == "shifted") return CouplingSpec::Mode::kShifted;
  throw ContractViolation("unknown coupling mode '" + text + "'");
}

std::pair<Vector, Vector> CouplingSpec::draw(std::uint64_t master_seed, int index) const {
  RngCursor init(ensemble_stream(master_seed, StreamPurpose::kInitial, index));
  Vector xi = nominal_law.sample(init);
  switch (mode) {
    case Mode::kSynchronous:
      return {xi, xi};
    case Mode::kIndependent: {
      RngCursor coupled(ensemble_stream(master_seed, StreamPurpose::kCoupled, index));
      Vector xi_bar = true_law.sample(coupled);
      return {std::move(xi), std::move(xi_bar)};
    }
    case Mode::kShifted: {
      Vector xi_bar = scale * xi;
      if (shift.size() > 0) {
        if (shift.size() != xi.size()) throw ContractViolation("coupling shift has wrong size");
        xi_bar += shift;
      }
      return {std::move(xi), std::move(xi_bar)};
    }
  }
  return {xi, xi};
}

std::string CouplingSpec::describe() const {
  std::ostringstream out;
  out << to_string(mode) << "; D=" << nominal_law.describe();
  if (mode == Mode::kIndependent) out << "; Dbar=" << true_law.describe();
  if (mode == Mode::kShifted) {
    out << "; scale=" << scale << "; shift=";
    for (Eigen::Index i = 0; i < shift.size(); ++i) out << (i ? "," : "") << shift(i);
  }
  return out.str();
}

double GapReport::max_moment(int p) const {
  for (std::size_t j = 0; j < moment_orders.size(); ++j) {
    if (moment_orders[j] == p) {
      return moments[j].empty() ? 0.0 : *std::max_element(moments[j].begin(), moments[j].end());
    }
  }
  throw ContractViolation("GapReport: moment order " + std::to_string(p) + " not computed");
}

GapReport gap_report(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b,
                     const std::vector<int>& moment_orders) {
  if (a.size() != b.size() || a.empty()) {
    throw ContractViolation("gap_report: need equally many (and at least one) trajectory pairs");
  }
  const Partition& partition = a.front().partition;
  const int knots = partition.knots() + 1;
  for (int p : moment_orders)
    if (p < 1) throw ContractViolation("gap_report: moment orders must be >= 1");

  GapReport report;
  report.sample_count = static_cast<int>(a.size());
  report.moment_orders = moment_orders;
  for (int i = 0; i < knots; ++i) report.times.push_back(partition.knot(i));

  for (std::size_t s = 0; s < a.size(); ++s) {
    if (!a[s].complete() || !b[s].complete()) {
      ++report.diverged_count;
      continue;
    }
    if (!(a[s].partition == b[s].partition) || !(a[s].partition == partition)) {
      throw ContractViolation("gap_report: trajectories use different partitions");
    }
    std::vector<double> d(static_cast<std::size_t>(knots));
    for (int i = 0; i < knots; ++i) {
      d[static_cast<std::size_t>(i)] =
          (a[s].states[static_cast<std::size_t>(i)] - b[s].states[static_cast<std::size_t>(i)])
              .norm();
    }
    report.path_distances.push_back(std::move(d));
  }

  const auto count = static_cast<double>(report.path_distances.size());
  report.gap_mean.assign(static_cast<std::size_t>(knots), 0.0);
  report.gap_se.assign(static_cast<std::size_t>(knots), 0.0);
  report.moments.assign(moment_orders.size(), std::vector<double>(static_cast<std::size_t>(knots), 0.0));
  if (report.path_distances.empty()) {
    report.max_gap = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  for (int i = 0; i < knots; ++i) {
    const auto k = static_cast<std::size_t>(i);
    double sum = 0.0;
    for (const auto& d : report.path_distances) sum += d[k];
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& d : report.path_distances) ss += (d[k] - mean) * (d[k] - mean);
    report.gap_mean[k] = mean;
    report.gap_se[k] = count > 1 ? std::sqrt(ss / (count - 1.0) / count) : 0.0;
    for (std::size_t j = 0; j < moment_orders.size(); ++j) {
      const double q = 2.0 * moment_orders[j];
      double acc = 0.0;
      for (const auto& d : report.path_distances) acc += std::pow(d[k], q);
      report.moments[j][k] = std::pow(acc / count, 1.0 / q);
    }
  }
  const auto it = std::max_element(report.gap_mean.begin(), report.gap_mean.end());
  report.max_gap = *it;
  report.max_index = static_cast<int>(it - report.gap_mean.begin());
  return report;
}

GapReport policy_gap(const Policy& pi_hat, const Policy& expert, const SystemBundle& sys,
                     const std::vector<Vector>& initial_states, const Partition& partition,
                     int workers) {
  if (initial_states.empty()) throw ContractViolation("policy_gap: no initial states");
  const auto count = static_cast<int>(initial_states.size());
  std::vector<Trajectory> learned(initial_states.size()), reference(initial_states.size());
  parallel_for(count, workers, [&](int i) {
    const auto s = static_cast<std::size_t>(i);
    learned[s] = integrate_ode(sys, pi_hat.feedback(), nullptr, initial_states[s], partition);
    reference[s] = integrate_ode(sys, expert.feedback(), nullptr, initial_states[s], partition);
  });
  return gap_report(learned, reference);
}

PairedRollouts paired_rollouts(const LayeredPolicy& policy, const Policy& expert,
                               const SystemBundle& sys, const CouplingSpec& coupling,
                               int ensemble_size, const Partition& partition,
                               std::uint64_t master_seed, int workers) {
  if (ensemble_size < 1) throw ContractViolation("paired_rollouts: ensemble_size must be >= 1");
  if (!policy.imitation) throw ContractViolation("paired_rollouts: missing imitation policy");
  const auto count = static_cast<std::size_t>(ensemble_size);
  PairedRollouts out;
  out.xi.resize(count);
  out.xi_bar.resize(count);
  out.expert.resize(count);
  out.imitation.resize(count);
  out.uncertain.resize(count);
  const L1Config* l1 = policy.l1 ? &*policy.l1 : nullptr;
  // Without uncertainty the true process is the nominal ODE, so it uses the
  // same integrator as the reference rollouts. The adaptive layer drops out:
  // its predictor then tracks the state exactly, so its estimate and output
  // stay at zero.
  const bool deterministic = sys.uncertainty_free;
  parallel_for(ensemble_size, workers, [&](int i) {
    const auto s = static_cast<std::size_t>(i);
    auto [xi, xi_bar] = coupling.draw(master_seed, i);
    out.expert[s] = integrate_ode(sys, expert.feedback(), nullptr, xi, partition);
    out.imitation[s] = integrate_ode(sys, policy.imitation->feedback(), nullptr, xi, partition);
    if (deterministic) {
      out.uncertain[s] =
          integrate_ode(sys, policy.imitation->feedback(), nullptr, xi_bar, partition);
    } else {
      out.uncertain[s] =
          integrate_sde(sys, make_layered_control(sys, policy.imitation, l1), xi_bar, partition,
                        ensemble_stream(master_seed, StreamPurpose::kNoise, i));
    }
    out.xi[s] = std::move(xi);
    out.xi_bar[s] = std::move(xi_bar);
  });
  return out;
}

namespace {

void check_ensemble_size(int ensemble_size) {
  if (ensemble_size < 30) {
    throw ContractViolation("gap estimators need ensemble_size >= 30 for error bars");
  }
}

}  // namespace

GapReport uncertainty_gap(const LayeredPolicy& policy, const SystemBundle& sys,
                          const CouplingSpec& coupling, int ensemble_size,
                          const Partition& partition, std::uint64_t master_seed, int workers) {
  check_ensemble_size(ensemble_size);
  // The expert rollout is unused here; the imitation policy stands in.
  const PairedRollouts r = paired_rollouts(policy, *policy.imitation, sys, coupling,
                                           ensemble_size, partition, master_seed, workers);
  return gap_report(r.uncertain, r.imitation);
}

GapReport total_gap(const LayeredPolicy& policy, const Policy& expert, const SystemBundle& sys,
                    const CouplingSpec& coupling, int ensemble_size, const Partition& partition,
                    std::uint64_t master_seed, int workers) {
  check_ensemble_size(ensemble_size);
  const PairedRollouts r = paired_rollouts(policy, expert, sys, coupling, ensemble_size,
                                           partition, master_seed, workers);
  return gap_report(r.uncertain, r.expert);
}

GapDecomposition decompose_gaps(const PairedRollouts& rollouts,
                                const std::vector<int>& moment_orders) {
  GapDecomposition out;
  out.total = gap_report(rollouts.uncertain, rollouts.expert, moment_orders);
  out.policy = gap_report(rollouts.imitation, rollouts.expert, moment_orders);
  out.uncertainty = gap_report(rollouts.uncertain, rollouts.imitation, moment_orders);

  out.max_pathwise_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < rollouts.expert.size(); ++s) {
    const Trajectory& e = rollouts.expert[s];
    const Trajectory& m = rollouts.imitation[s];
    const Trajectory& u = rollouts.uncertain[s];
    if (!e.complete() || !m.complete() || !u.complete()) continue;
    for (std::size_t k = 0; k < e.states.size(); ++k) {
      const double total = (u.states[k] - e.states[k]).norm();
      const double split = (m.states[k] - e.states[k]).norm() + (u.states[k] - m.states[k]).norm();
      out.max_pathwise_violation = std::max(out.max_pathwise_violation, total - split);
    }
  }
  // The three reports can exclude different pairs; compare means only when
  // they were taken over the same set.
  out.max_mean_violation = -std::numeric_limits<double>::infinity();
  if (out.total.diverged_count == out.policy.diverged_count &&
      out.total.diverged_count == out.uncertainty.diverged_count) {
    for (std::size_t k = 0; k < out.total.gap_mean.size(); ++k) {
      out.max_mean_violation =
          std::max(out.max_mean_violation, out.total.gap_mean[k] - out.policy.gap_mean[k] -
                                               out.uncertainty.gap_mean[k]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void DeltaIssParams::validate() const {
  if (!(lambda > 0.0) || !(theta > 0.0) || !(delta_g >= 0.0) || !(lambda_theta() > 0.0)) {
    throw ContractViolation("DeltaIssParams: need lambda > 0, theta > 0 and lambda_theta > 0");
  }
}

std::vector<double> theta_grid(double lambda, double delta_g, int count) {
  if (!(lambda > 0.0) || !(delta_g > 0.0) || count < 1) {
    throw ContractViolation("theta_grid: need lambda > 0, delta_g > 0, count >= 1");
  }
  const double upper = 2.0 * lambda / (delta_g * delta_g);
  const double lo = std::log(0.01 * upper);
  const double hi = std::log(0.99 * upper);
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    const double frac = count > 1 ? static_cast<double>(i) / (count - 1) : 0.5;
    grid.push_back(std::exp(lo + frac * (hi - lo)));
  }
  return grid;
}

double delta_iss_gain(const DeltaIssParams& params, double t) {
  const double lt = params.lambda_theta();
  return std::sqrt((1.0 - std::exp(-lt * t)) / (params.theta * lt));
}

std::vector<IssRow> delta_iss_check(const SystemBundle& sys, const Policy& expert,
                                    const PerturbationSignal& perturbation, const Vector& xi1,
                                    const Vector& xi2, const DeltaIssParams& params,
                                    const Partition& partition) {
  params.validate();
  if (static_cast<int>(perturbation.values.size()) != partition.knots()) {
    throw ContractViolation("delta_iss_check: perturbation must hold one value per interval");
  }
  const Trajectory perturbed = integrate_ode(sys, expert.feedback(), &perturbation, xi1, partition);
  const Trajectory clean = integrate_ode(sys, expert.feedback(), nullptr, xi2, partition);
  const double initial = (xi1 - xi2).norm();
  const double sup = perturbation.sup_norm();
  const double lt = params.lambda_theta();

  std::vector<IssRow> rows;
  for (int i = 0; i <= partition.knots(); ++i) {
    IssRow row;
    row.t = partition.knot(i);
    const auto k = static_cast<std::size_t>(i);
    row.lhs = k < perturbed.states.size() && k < clean.states.size()
                  ? (perturbed.states[k] - clean.states[k]).norm()
                  : std::numeric_limits<double>::infinity();
    row.rhs = std::exp(-0.5 * lt * row.t) * initial + delta_iss_gain(params, row.t) * sup;
    row.margin = row.rhs - row.lhs;
    rows.push_back(row);
  }
  return rows;
}

IssSuiteResult iss_falsification_suite(const SystemBundle& sys, const Policy& expert,
                                       double lambda, double delta_g, const InitialLaw& law,
                                       const Partition& partition, int instances,
                                       std::uint64_t seed, double perturbation_scale,
                                       double tolerance) {
  const double upper = 2.0 * lambda / (delta_g * delta_g);
  const double log_lo = std::log(0.01 * upper);
  const double log_hi = std::log(0.99 * upper);
  IssSuiteResult out;
  out.min_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < instances; ++i) {
    RngCursor cursor(RngStream{derive_seed(seed, 0x69737321), static_cast<std::uint64_t>(i)});
    const Vector xi1 = law.sample(cursor);
    const Vector xi2 = law.sample(cursor);
    DeltaIssParams params{lambda, std::exp(log_lo + (log_hi - log_lo) * cursor.uniform()), delta_g};
    const double scale = perturbation_scale * cursor.uniform();
    PerturbationSignal signal;
    for (int k = 0; k < partition.knots(); ++k) {
      signal.values.push_back(scale * gaussian_draw(cursor, sys.input_dim));
    }
    const std::vector<IssRow> rows =
        delta_iss_check(sys, expert, signal, xi1, xi2, params, partition);
    IssInstance inst{params.theta, (xi1 - xi2).norm(), signal.sup_norm(),
                     std::numeric_limits<double>::infinity(), 0.0};
    for (const IssRow& r : rows) {
      if (r.margin < inst.min_margin) {
        inst.min_margin = r.margin;
        inst.min_margin_time = r.t;
      }
    }
    if (inst.min_margin < -tolerance) ++out.falsifications;
    out.min_margin = std::min(out.min_margin, inst.min_margin);
    out.instances.push_back(inst);
  }
  return out;
}

double moment_bound(const Ensemble& ensemble, int p) {
  if (p < 1) throw ContractViolation("moment_bound: p must be >= 1");
  std::vector<const Trajectory*> paths;
  for (const Trajectory& t : ensemble.trajectories)
    if (t.complete()) paths.push_back(&t);
  if (paths.empty()) throw ContractViolation("moment_bound: no complete trajectories");
  const double q = 2.0 * p;
  double best = 0.0;
  for (std::size_t k = 0; k < paths.front()->states.size(); ++k) {
    double acc = 0.0;
    for (const Trajectory* t : paths) acc += std::pow(t->states[k].norm(), q);
    best = std::max(best, std::pow(acc / static_cast<double>(paths.size()), 1.0 / q));
  }
  return best;
}

TailCheck tail_check(const GapReport& report, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractViolation("tail_check: delta must be in (0,1)");
  if (report.path_distances.empty()) throw ContractViolation("tail_check: no included paths");
  TailCheck out;
  out.delta = delta;
  out.p = std::max(1, static_cast<int>(std::ceil(std::log(std::sqrt(1.0 / delta)))));
  const double q = 2.0 * out.p;
  const auto count = static_cast<double>(report.path_distances.size());
  const std::size_t knots = report.path_distances.front().size();
  for (std::size_t k = 0; k < knots; ++k) {
    double acc = 0.0;
    for (const auto& d : report.path_distances) acc += std::pow(d[k], q);
    out.moment = std::max(out.moment, std::pow(acc / count, 1.0 / q));
  }
  out.threshold = std::numbers::e * out.moment;
  int exceed = 0;
  for (const auto& d : report.path_distances) {
    if (*std::max_element(d.begin(), d.end()) > out.threshold) ++exceed;
  }
  out.fraction = exceed / count;
  out.bound = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / count);
  out.pass = out.fraction <= out.bound;
  return out;
}

}  // namespace drip
