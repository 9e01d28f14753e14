#include <cmath>

#include <doctest.h>

#include "drip/dynamics.hpp"
#include "drip/l1drac.hpp"
#include "drip/policy.hpp"
#include "drip/simulate.hpp"

using namespace drip;

namespace {

KnownDynamics zero_known(int n, int m, Matrix g) {
  return KnownDynamics{[n](double, const Vector&) { return Vector::Zero(n); },
                       [g](double) { return g; }, n, m};
}

// dX = (u + c) dt, scalar.
struct ScalarPlant {
  SystemBundle sys;
  explicit ScalarPlant(double c) {
    sys = linear_system(Matrix::Zero(1, 1), Matrix::Identity(1, 1));
    sys.uncertainty_free = false;
    sys.drift_uncertainty = [c](double, const Vector&) -> Vector { return Vector::Constant(1, c); };
  }
};

// Runs the scalar loop and returns u at the final step.
double final_input(const L1Config& cfg, double c, double horizon, int substeps_per_ts,
                   double settle, double* worst_after) {
  ScalarPlant plant(c);
  L1Controller ctl(known_dynamics(plant.sys), cfg);
  double last = 0.0;
  *worst_after = 0.0;
  const SdeControl control = [&](double t, const Vector& y, double dt) {
    const Vector u = ctl(t, y, dt);
    last = u(0);
    if (t >= settle) *worst_after = std::max(*worst_after, std::abs(u(0) + c));
    return u;
  };
  const int knots = static_cast<int>(std::lround(horizon / cfg.ts));
  integrate_sde(plant.sys, control, Vector::Zero(1), Partition(horizon, knots, substeps_per_ts),
                RngStream{1, 0});
  return last;
}

}  // namespace

TEST_CASE("theta_ad examples and identities") {
  CHECK((theta_ad(0.25 * Matrix::Identity(4, 4)) - 4.0 * Matrix::Identity(4, 4)).norm() < 1e-14);
  Matrix e1 = Matrix::Zero(2, 1);
  e1(0) = 1;
  const Matrix t = theta_ad(e1);
  CHECK(t.rows() == 1);
  CHECK(std::abs(t(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(t(0, 1)) < 1e-15);

  RngCursor c(RngStream{1, 0});
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5;
    const int m = 1 + trial % n;
    Matrix g(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) g(i, j) = c.gaussian();
    const Matrix th = theta_ad(g);
    CHECK((th * g - Matrix::Identity(m, m)).norm() < 1e-10);
    if (n > m) CHECK((th * nullspace_basis(g)).norm() < 1e-10);
  }
  Matrix singular(3, 2);
  singular << 1, 2, 1, 2, 1, 2;
  CHECK_THROWS_AS(theta_ad(singular), RankDeficient);
}

TEST_CASE("predictor step") {
  L1Config cfg;
  const KnownDynamics known = zero_known(2, 2, Matrix::Identity(2, 2));
  L1State s = initial_l1_state(Vector::Ones(2), 2);
  predictor_step(s, known, Vector::Ones(2), 0.0, 0.01, cfg);
  CHECK(s.y_hat == Vector::Ones(2));

  // Constant y, nothing else: error shrinks by (1 - λ_s dt) per step.
  cfg.lambda_s = 50;
  s = initial_l1_state(Vector::Zero(2), 2);
  Vector y = Vector::Ones(2);
  double prev = (s.y_hat - y).norm();
  for (int i = 0; i < 20; ++i) {
    predictor_step(s, known, y, 0.0, 0.001, cfg);
    const double err = (s.y_hat - y).norm();
    CHECK(err == doctest::Approx(prev * (1 - 50 * 0.001)).epsilon(1e-12));
    prev = err;
  }

  // Hand-computed Euler step with every term active.
  cfg.lambda_s = 10;
  KnownDynamics k2{[](double, const Vector& x) { return Vector(-x); },
                   [](double) { return Matrix(2.0 * Matrix::Identity(2, 2)); }, 2, 2};
  s = initial_l1_state((Vector(2) << 1, 2).finished(), 2);
  s.u = (Vector(2) << 0.5, -1).finished();
  s.lambda_hat = (Vector(2) << 0.1, 0.2).finished();
  y = (Vector(2) << 0.5, 1.5).finished();
  predictor_step(s, k2, y, 0.0, 0.1, cfg);
  // rate = -10(ŷ-y) - y + 2u + Λ̂ = (-5-0.5+1+0.1, -5-1.5-2+0.2)
  CHECK(s.y_hat(0) == doctest::Approx(1 + 0.1 * (-4.4)));
  CHECK(s.y_hat(1) == doctest::Approx(2 + 0.1 * (-8.3)));
}

TEST_CASE("adaptation law") {
  L1Config cfg;
  cfg.lambda_s = 10;
  cfg.ts = 0.01;
  const KnownDynamics known = zero_known(4, 4, 0.25 * Matrix::Identity(4, 4));
  CHECK(cfg.adaptation_coefficient() == doctest::Approx(10.0 / (1.0 - std::exp(0.1))));
  CHECK(cfg.adaptation_coefficient() == doctest::Approx(-95.083).epsilon(1e-4));

  L1State s = initial_l1_state(Vector::Zero(4), 4);
  adaptation_update(s, known, Vector::Zero(4), 0.02, cfg);
  CHECK(s.lambda_hat.norm() == 0.0);
  CHECK(s.lambda_hat_parallel.norm() == 0.0);

  const double eps = 1e-3;
  s.y_hat = eps * Vector::Unit(4, 0);
  adaptation_update(s, known, Vector::Zero(4), 0.0, cfg);
  CHECK(s.lambda_hat.norm() == 0.0);
  adaptation_update(s, known, Vector::Zero(4), 0.03, cfg);
  CHECK(s.lambda_hat(0) == doctest::Approx(cfg.adaptation_coefficient() * eps));
  CHECK(s.lambda_hat_parallel(0) == doctest::Approx(4.0 * cfg.adaptation_coefficient() * eps));
  CHECK_THROWS_AS(adaptation_update(s, known, Vector::Zero(4), 0.015, cfg), ContractViolation);

  cfg.sign = AdaptationSign::kNegatedExponent;
  CHECK(cfg.adaptation_coefficient() == doctest::Approx(10.0 / (1.0 - std::exp(-0.1))));
  CHECK(parse_adaptation_sign(to_string(AdaptationSign::kNegatedExponent)) ==
        AdaptationSign::kNegatedExponent);
  CHECK_THROWS_AS(parse_adaptation_sign("other"), ContractViolation);
}

TEST_CASE("filter step") {
  L1Config cfg;
  cfg.omega = 20;
  L1State s = initial_l1_state(Vector::Zero(1), 1);
  s.lambda_hat_parallel = Vector::Constant(1, 0.7);
  const double dt = 0.001;
  for (int i = 1; i <= 300; ++i) {
    filter_step(s, dt, cfg);
    CHECK(s.u(0) == doctest::Approx(-0.7 * (1 - std::exp(-20 * dt * i))).epsilon(1e-12));
    REQUIRE(std::abs(s.u(0)) <= 0.7);
  }

  s.lambda_hat_parallel.setZero();
  s.u = Vector::Constant(1, 2.0);
  filter_step(s, 0.05, cfg);
  CHECK(s.u(0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-14));

  L1State a = initial_l1_state(Vector::Zero(1), 1), b = a;
  a.u(0) = b.u(0) = 0.3;
  a.lambda_hat_parallel(0) = b.lambda_hat_parallel(0) = -1.1;
  filter_step(a, 0.01, cfg);
  filter_step(b, 0.005, cfg);
  filter_step(b, 0.005, cfg);
  CHECK(std::abs(a.u(0) - b.u(0)) < 1e-15);
}

TEST_CASE("controller with nothing to reject stays at zero") {
  BenchmarkOptions o;
  o.uncertainty_scale = 0.0;
  const SystemBundle sys = benchmark_system(7, o);
  const auto expert = std::make_shared<const ExpertPolicy>(expert_policy(2.0, sys));
  L1Config cfg;
  L1Controller ctl(known_dynamics(sys, expert), cfg);
  double worst = 0.0;
  const SdeControl control = [&](double t, const Vector& y, double dt) {
    const Vector u = ctl(t, y, dt);
    worst = std::max(worst, u.norm());
    return Vector(expert->evaluate(y) + u);
  };
  integrate_sde(sys, control, Vector::Ones(4), Partition(10.0, 100, 10), RngStream{1, 0});
  CHECK(worst < 1e-6);
}

TEST_CASE("scalar disturbance rejection as Ts shrinks") {
  L1Config cfg;
  cfg.omega = 100;
  cfg.ts = 1e-4;
  cfg.lambda_s = 10;
  double worst = 0.0;
  final_input(cfg, 1.0, 0.5, 10, 5.0 / cfg.omega, &worst);
  CHECK(worst <= 0.02);
}

TEST_CASE("steady-state input leaves an e^{-lambda_s Ts} fraction") {
  for (double ts : {0.01, 0.005}) {
    L1Config cfg;
    cfg.omega = 20;
    cfg.ts = ts;
    cfg.lambda_s = 10;
    double worst = 0.0;
    const double u = final_input(cfg, 1.0, 3.0, 10, 1.0, &worst);
    CHECK(u == doctest::Approx(-std::exp(-cfg.lambda_s * ts)).epsilon(5e-3));
  }
}

TEST_CASE("controller trace: held estimates and zero start") {
  ScalarPlant plant(1.0);
  L1Config cfg;
  cfg.ts = 0.01;
  const double dt = 0.001;
  L1Controller ctl(known_dynamics(plant.sys), cfg, dt);
  const SdeControl control = [&](double t, const Vector& y, double h) { return ctl(t, y, h); };
  integrate_sde(plant.sys, control, Vector::Zero(1), Partition(0.5, 50, 10), RngStream{1, 0});
  const auto& trace = ctl.trace();
  // One row per substep, plus the input recorded at the horizon.
  REQUIRE(trace.size() == 501);
  double max_lambda = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].t < cfg.ts - 1e-12) {
      CHECK(trace[i].lambda_hat.norm() == 0.0);
      CHECK(trace[i].u.norm() == 0.0);
    }
    if (i % 10 != 0) CHECK(trace[i].lambda_hat == trace[i - 1].lambda_hat);
    max_lambda = std::max(max_lambda, trace[i].lambda_hat.norm());
    CHECK(trace[i].u.norm() <= max_lambda + 1e-15);
  }
}

TEST_CASE("step must divide Ts") {
  L1Config cfg;
  cfg.ts = 0.01;
  L1State s;
  const KnownDynamics known = zero_known(1, 1, Matrix::Identity(1, 1));
  CHECK_THROWS_AS(l1_control(s, known, Vector::Zero(1), 0.0, 0.003, cfg), ContractViolation);
  L1Config bad;
  bad.omega = -1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}
