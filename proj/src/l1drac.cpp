#include "drip/l1drac.hpp"

#include <cmath>

namespace drip {

std::string to_string(AdaptationSign sign) {
  return sign == AdaptationSign::kVerbatim ? "verbatim" : "negated_exponent";
}

AdaptationSign parse_adaptation_sign(const std::string& text) {
  if (text == "verbatim") return AdaptationSign::kVerbatim;
  if (text == "negated_exponent") return AdaptationSign::kNegatedExponent;
  throw ContractViolation("unknown adaptation sign variant '" + text + "'");
}

void L1Config::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(omega) || !positive(ts) || !positive(lambda_s)) {
    throw ContractViolation("L1Config: omega, ts and lambda_s must be finite and positive");
  }
}

double L1Config::adaptation_coefficient() const {
  const double exponent = sign == AdaptationSign::kVerbatim ? lambda_s * ts : -lambda_s * ts;
  return lambda_s / (1.0 - std::exp(exponent));
}

KnownDynamics known_dynamics(const SystemBundle& sys) {
  return KnownDynamics{sys.nominal_drift, sys.input_operator, sys.state_dim, sys.input_dim};
}

KnownDynamics known_dynamics(const SystemBundle& sys, std::shared_ptr<const Policy> baseline) {
  KnownDynamics known = known_dynamics(sys);
  known.baseline_drift = [f = sys.nominal_drift, g = sys.input_operator, baseline](
                             double t, const Vector& y) -> Vector {
    return f(t, y) + g(t) * baseline->evaluate(y);
  };
  return known;
}

Matrix theta_ad(const Matrix& g) {
  const Eigen::Index n = g.rows();
  const Eigen::Index m = g.cols();
  Matrix g_bar(n, n);
  g_bar << g, nullspace_basis(g);
  return inverse_partial_pivot(g_bar).topRows(m);
}

L1State initial_l1_state(const Vector& y0, int input_dim) {
  L1State s;
  s.y_hat = y0;
  s.lambda_hat = Vector::Zero(y0.size());
  s.lambda_hat_parallel = Vector::Zero(input_dim);
  s.u = Vector::Zero(input_dim);
  s.initialized = true;
  return s;
}

void predictor_step(L1State& state, const KnownDynamics& known, const Vector& y, double t,
                    double dt, const L1Config& config) {
  const Vector rate = -config.lambda_s * (state.y_hat - y) + known.baseline_drift(t, y) +
                      known.input_operator(t) * state.u + state.lambda_hat;
  state.y_hat += dt * rate;
}

void adaptation_update(L1State& state, const KnownDynamics& known, const Vector& y, double t,
                       const L1Config& config) {
  const double samples = t / config.ts;
  const double index = std::round(samples);
  if (index < 0.0 || std::abs(samples - index) > 1e-6) {
    throw ContractViolation("adaptation_update: t=" + std::to_string(t) +
                            " is not on the sampling grid (Ts=" + std::to_string(config.ts) + ")");
  }
  state.last_sample_time = t;
  if (index == 0.0) {
    state.lambda_hat.setZero();
    state.lambda_hat_parallel.setZero();
    return;
  }
  state.lambda_hat = config.adaptation_coefficient() * (state.y_hat - y);
  state.lambda_hat_parallel = theta_ad(known.input_operator(t)) * state.lambda_hat;
}

void filter_step(L1State& state, double dt, const L1Config& config) {
  const double decay = std::exp(-config.omega * dt);
  state.u = decay * state.u - (1.0 - decay) * state.lambda_hat_parallel;
}

namespace {

bool on_grid(double t, double period) {
  const double r = t / period;
  return std::abs(r - std::round(r)) <= 1e-6;
}

void check_step(double dt, const L1Config& config) {
  const double ratio = config.ts / dt;
  if (!(dt > 0.0) || std::round(ratio) < 1.0 ||
      std::abs(ratio - std::round(ratio)) > 1e-6 * std::max(1.0, ratio)) {
    throw ContractViolation("l1_control: Ts=" + std::to_string(config.ts) +
                            " is not an integer multiple of the step " + std::to_string(dt));
  }
}

}  // namespace

Vector l1_control(L1State& state, const KnownDynamics& known, const Vector& y, double t,
                  double dt, const L1Config& config) {
  check_step(dt, config);
  if (!state.initialized) state = initial_l1_state(y, known.input_dim);
  if (on_grid(t, config.ts)) adaptation_update(state, known, y, t, config);
  const Vector applied = state.u;
  predictor_step(state, known, y, t, dt, config);
  filter_step(state, dt, config);
  return applied;
}

L1Controller::L1Controller(KnownDynamics known, L1Config config, double trace_interval)
    : known_(std::move(known)), config_(config), trace_interval_(trace_interval) {
  config_.validate();
}

Vector L1Controller::operator()(double t, const Vector& y, double dt) {
  const bool record = trace_interval_ > 0.0 && on_grid(t, trace_interval_);
  Vector y_hat = state_.initialized ? state_.y_hat : y;
  Vector u = l1_control(state_, known_, y, t, dt, config_);
  if (record) trace_.push_back({t, std::move(y_hat), state_.lambda_hat, u});
  return u;
}

SdeControl make_layered_control(const SystemBundle& sys, std::shared_ptr<const Policy> policy,
                                const L1Config* l1) {
  if (l1 == nullptr) {
    return [policy](double, const Vector& x, double) { return policy->evaluate(x); };
  }
  auto controller = std::make_shared<L1Controller>(known_dynamics(sys, policy), *l1);
  return [policy, controller](double t, const Vector& x, double dt) {
    return Vector(policy->evaluate(x) + (*controller)(t, x, dt));
  };
}

}  // namespace drip
