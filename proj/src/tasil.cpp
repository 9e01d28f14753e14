#include "drip/tasil.hpp"

#include <cmath>
#include <limits>

#include "drip/parallel.hpp"

namespace drip {

TrainingSet generate_training_data(const SystemBundle& sys, std::shared_ptr<const Policy> expert,
                                   const InitialLaw& law, int n, const Partition& partition,
                                   std::uint64_t master_seed) {
  if (n < 1) throw ContractViolation("generate_training_data: n must be >= 1");
  if (!law.compact_support()) {
    throw ContractViolation("generate_training_data: initial law must have compact support");
  }
  if (!expert) throw ContractViolation("generate_training_data: missing expert");
  TrainingSet data;
  data.partition = partition;
  data.expert = expert;
  data.initial_law = law.describe();
  data.master_seed = master_seed;
  for (int i = 0; i < n; ++i) {
    RngCursor cursor(ensemble_stream(master_seed, StreamPurpose::kInitial, i));
    Vector xi = law.sample(cursor);
    Trajectory traj = integrate_ode(sys, expert->feedback(), nullptr, xi, partition);
    if (!traj.complete()) {
      throw ExpertUnstable("expert rollout " + std::to_string(i) + " diverged at knot " +
                           std::to_string(traj.diverged_at));
    }
    data.initial_states.push_back(std::move(xi));
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

namespace {

struct KnotTarget {
  Vector state;
  Vector action;
  Matrix jacobian;
};

// Expert values recomputed from the stored states, knots before T.
std::vector<std::vector<KnotTarget>> expert_targets(const TrainingSet& data) {
  std::vector<std::vector<KnotTarget>> out;
  const int k = data.partition.knots();
  for (const Trajectory& traj : data.trajectories) {
    std::vector<KnotTarget> row;
    row.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const Vector& x = traj.states[static_cast<std::size_t>(i)];
      row.push_back({x, data.expert->evaluate(x), data.expert->state_jacobian(x)});
    }
    out.push_back(std::move(row));
  }
  return out;
}

struct Aggregate {
  double value = 0.0;
  double hard = 0.0;
  int argmax = 0;
  std::vector<double> weights;  // d(value)/d(v_t)
};

Aggregate aggregate(const std::vector<double>& v, const Smoothing& smoothing) {
  Aggregate out;
  out.weights.assign(v.size(), 0.0);
  for (std::size_t t = 1; t < v.size(); ++t)
    if (v[t] > v[static_cast<std::size_t>(out.argmax)]) out.argmax = static_cast<int>(t);
  out.hard = v[static_cast<std::size_t>(out.argmax)];
  if (smoothing.kind == Smoothing::Kind::kHardMax) {
    out.value = out.hard;
    out.weights[static_cast<std::size_t>(out.argmax)] = 1.0;
    return out;
  }
  const double beta = smoothing.beta;
  double sum = 0.0;
  for (std::size_t t = 0; t < v.size(); ++t) {
    out.weights[t] = std::exp(beta * (v[t] - out.hard));
    sum += out.weights[t];
  }
  for (double& w : out.weights) w /= sum;
  out.value = out.hard + std::log(sum / static_cast<double>(v.size())) / beta;
  return out;
}

double matrix_norm(const Matrix& m, JacobianNorm norm) {
  return norm == JacobianNorm::kOperator ? spectral_norm(m) : m.norm();
}

struct TrajectoryEval {
  TrajectoryLoss loss;
  double hard_loss = 0.0;
  double hard_value = 0.0;
  double hard_jacobian = 0.0;
};

// Loss of one trajectory; when `grad` is given, adds scale·d(loss)/dθ.
TrajectoryEval evaluate_trajectory(const Mlp& net, const std::vector<KnotTarget>& targets,
                                   const LossOptions& options, double scale, Vector* grad) {
  const std::size_t k = targets.size();
  const bool use_jac = options.terms == LossTerms::kValueAndJacobian;
  // Per-thread scratch; Eigen reuses the storage when shapes repeat.
  thread_local std::vector<Vector> psi;
  thread_local std::vector<Matrix> dpsi;
  thread_local std::vector<Mlp::Tape> tapes;
  thread_local std::vector<TopSingular> tops;
  psi.resize(k);
  dpsi.resize(k);
  tapes.resize(k);
  tops.resize(k);
  std::vector<double> vnorm(k), jnorm(k);
  for (std::size_t t = 0; t < k; ++t) {
    net.forward(targets[t].state, tapes[t]);
    psi[t] = tapes[t].output - targets[t].action;
    dpsi[t] = tapes[t].jacobian - targets[t].jacobian;
    vnorm[t] = psi[t].norm();
    if (use_jac && options.norm == JacobianNorm::kOperator) {
      tops[t] = top_singular(dpsi[t]);
      jnorm[t] = tops[t].value;
    } else {
      jnorm[t] = use_jac ? matrix_norm(dpsi[t], options.norm) : 0.0;
    }
  }
  const Aggregate va = aggregate(vnorm, options.smoothing);
  const Aggregate ja = aggregate(jnorm, options.smoothing);

  TrajectoryEval out;
  out.loss.value_term = va.value;
  out.loss.jacobian_term = use_jac ? ja.value : 0.0;
  out.loss.value_argmax = va.argmax;
  out.loss.jacobian_argmax = use_jac ? ja.argmax : 0;
  out.loss.loss = 0.5 * (out.loss.value_term + out.loss.jacobian_term);
  out.hard_value = va.hard;
  out.hard_jacobian = use_jac ? ja.hard : 0.0;
  out.hard_loss = 0.5 * (out.hard_value + out.hard_jacobian);
  if (!std::isfinite(out.loss.loss)) {
    throw TrainingAborted("non-finite TaSIL loss (value term " + std::to_string(va.value) +
                          ", jacobian term " + std::to_string(ja.value) + ")");
  }
  if (grad == nullptr) return out;

  const int m = net.output_dim();
  const int n = net.input_dim();
  for (std::size_t t = 0; t < k; ++t) {
    const double wv = va.weights[t];
    const double wj = use_jac ? ja.weights[t] : 0.0;
    if (wv == 0.0 && wj == 0.0) continue;
    Vector u_bar = Vector::Zero(m);
    Matrix j_bar = Matrix::Zero(m, n);
    if (wv != 0.0 && vnorm[t] > 0.0) u_bar = (0.5 * scale * wv / vnorm[t]) * psi[t];
    if (wj != 0.0 && jnorm[t] > 0.0) {
      if (options.norm == JacobianNorm::kOperator) {
        j_bar = (0.5 * scale * wj) * tops[t].left * tops[t].right.transpose();
      } else {
        j_bar = (0.5 * scale * wj / jnorm[t]) * dpsi[t];
      }
    }
    net.accumulate_parameter_gradient(tapes[t], u_bar, j_bar, *grad);
  }
  return out;
}

LossGradient gradient_with_targets(const Mlp& net,
                                   const std::vector<std::vector<KnotTarget>>& targets,
                                   const LossOptions& options, int workers) {
  const int count = static_cast<int>(targets.size());
  const double scale = 1.0 / count;
  std::vector<Vector> partial(static_cast<std::size_t>(count));
  std::vector<TrajectoryEval> evals(static_cast<std::size_t>(count));
  parallel_for(count, workers, [&](int i) {
    auto& g = partial[static_cast<std::size_t>(i)];
    g = Vector::Zero(net.parameter_count());
    evals[static_cast<std::size_t>(i)] =
        evaluate_trajectory(net, targets[static_cast<std::size_t>(i)], options, scale, &g);
  });
  LossGradient out;
  out.gradient = Vector::Zero(net.parameter_count());
  for (int i = 0; i < count; ++i) {
    const auto& e = evals[static_cast<std::size_t>(i)];
    out.gradient += partial[static_cast<std::size_t>(i)];
    out.loss += scale * e.loss.loss;
    out.hard_loss += scale * e.hard_loss;
    out.value_term += scale * e.loss.value_term;
    out.jacobian_term += scale * e.loss.jacobian_term;
    out.hard_value_term += scale * e.hard_value;
    out.hard_jacobian_term += scale * e.hard_jacobian;
  }
  return out;
}

}  // namespace

TasilLossReport tasil_loss(const Policy& pi_hat, const TrainingSet& data,
                           const LossOptions& options) {
  if (pi_hat.state_dim() != data.expert->state_dim() ||
      pi_hat.input_dim() != data.expert->input_dim()) {
    throw ContractViolation("tasil_loss: policy dimensions do not match the expert");
  }
  TasilLossReport report;
  const bool use_jac = options.terms == LossTerms::kValueAndJacobian;
  for (const Trajectory& traj : data.trajectories) {
    const PsiSequence psi = perturbation_psi(pi_hat, *data.expert, traj);
    std::vector<double> vnorm, jnorm;
    for (std::size_t t = 0; t < psi.values.values.size(); ++t) {
      vnorm.push_back(psi.values.values[t].norm());
      jnorm.push_back(use_jac ? matrix_norm(psi.jacobian_mismatch[t], options.norm) : 0.0);
    }
    const Aggregate va = aggregate(vnorm, options.smoothing);
    const Aggregate ja = aggregate(jnorm, options.smoothing);
    TrajectoryLoss row{va.value, use_jac ? ja.value : 0.0, va.argmax, use_jac ? ja.argmax : 0, 0.0};
    row.loss = 0.5 * (row.value_term + row.jacobian_term);
    report.per_trajectory.push_back(row);
  }
  const double scale = 1.0 / static_cast<double>(report.per_trajectory.size());
  for (const auto& row : report.per_trajectory) {
    report.mean_loss += scale * row.loss;
    report.mean_value_term += scale * row.value_term;
    report.mean_jacobian_term += scale * row.jacobian_term;
  }
  return report;
}

LossGradient loss_gradient(const MlpPolicy& pi_hat, const TrainingSet& data,
                           const LossOptions& options, int workers) {
  return gradient_with_targets(pi_hat.network(), expert_targets(data), options, workers);
}

TrainingResult train_tasil(const TrainingSet& data, const std::vector<int>& widths,
                           const OptimizerConfig& config) {
  if (widths.size() < 2 || widths.front() != data.expert->state_dim() ||
      widths.back() != data.expert->input_dim()) {
    throw ContractViolation("train_tasil: architecture must map R^n to R^m");
  }
  if (config.steps < 1) throw ContractViolation("train_tasil: steps must be >= 1");
  const auto targets = expert_targets(data);

  TrainingResult result;
  result.policy = mlp_policy(widths, RngStream{derive_seed(config.init_seed, 0x696e6974), 0});
  Mlp& net = result.policy.mutable_network();
  Vector params = net.parameters();
  Vector best = params;
  Vector m1 = Vector::Zero(params.size());
  Vector m2 = Vector::Zero(params.size());
  result.best_loss = std::numeric_limits<double>::infinity();

  LossOptions options;
  options.norm = config.norm;
  options.terms = config.terms;
  const double ratio = config.beta_end / config.beta_start;
  for (int step = 0; step < config.steps; ++step) {
    const double frac = config.steps > 1 ? static_cast<double>(step) / (config.steps - 1) : 1.0;
    options.smoothing = Smoothing::log_sum_exp(config.beta_start * std::pow(ratio, frac));
    net.set_parameters(params);
    const LossGradient lg = gradient_with_targets(net, targets, options, config.workers);
    if (!std::isfinite(lg.hard_loss) || !lg.gradient.allFinite()) {
      throw TrainingAborted("non-finite loss or gradient at step " + std::to_string(step));
    }
    if (step == 0) result.initial_loss = lg.hard_loss;
    if (lg.hard_loss < result.best_loss) {
      result.best_loss = lg.hard_loss;
      result.best_step = step;
      best = params;
    }
    // The logged terms are the hard maxima; the smoothed ones drive the step.
    result.log.push_back(
        {step, lg.hard_loss, lg.hard_value_term, lg.hard_jacobian_term, lg.gradient.norm()});

    m1 = config.adam_beta1 * m1 + (1.0 - config.adam_beta1) * lg.gradient;
    m2 = config.adam_beta2 * m2 + (1.0 - config.adam_beta2) * lg.gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.adam_beta1, step + 1);
    const double c2 = 1.0 - std::pow(config.adam_beta2, step + 1);
    params.array() -= config.learning_rate * (m1.array() / c1) /
                      ((m2.array() / c2).sqrt() + config.adam_epsilon);
  }
  net.set_parameters(best);
  return result;
}

}  // namespace drip
