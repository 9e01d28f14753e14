#include <cmath>

#include <doctest.h>

#include "drip/dynamics.hpp"
#include "drip/l1drac.hpp"
#include "drip/policy.hpp"
#include "drip/simulate.hpp"

using namespace drip;

namespace {

SystemBundle scalar(double a) { return linear_system(Matrix::Constant(1, 1, a), Matrix::Identity(1, 1)); }

FeedbackLaw zero_law(int m) {
  return [m](const Vector&) { return Vector::Zero(m); };
}

SdeControl zero_control(int m) {
  return [m](double, const Vector&, double) { return Vector::Zero(m); };
}

Vector one(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("partition grid") {
  const Partition p(10.0, 100, 10);
  CHECK(p.knot(0) == 0.0);
  CHECK(p.knot(100) == 10.0);
  CHECK(p.interval() == doctest::Approx(0.1));
  CHECK(p.step() == doctest::Approx(0.01));
  for (int i = 1; i <= 100; ++i) REQUIRE(p.knot(i) > p.knot(i - 1));
  CHECK(p.knot_index(2.5) == 25);
  CHECK_THROWS_AS(p.knot_index(2.55), ContractViolation);
  CHECK_THROWS_AS(Partition(0.0, 10, 1), ContractViolation);
  CHECK_THROWS_AS(Partition(1.0, 0, 1), ContractViolation);
  CHECK_THROWS_AS(p.knot(101), ContractViolation);
}

TEST_CASE("RK4 on exponential decay") {
  const SystemBundle sys = scalar(-1.0);
  const Trajectory t = integrate_ode(sys, zero_law(1), nullptr, one(1.0), Partition(1.0, 10, 100));
  REQUIRE(t.complete());
  CHECK(std::abs(t.states.back()(0) - std::exp(-1.0)) < 1e-8);
  CHECK(!t.provenance.has_value());
}

TEST_CASE("RK4 converges at fourth order") {
  const SystemBundle sys = scalar(-3.0);
  const double exact = std::exp(-3.0);
  const double e1 = std::abs(integrate_ode(sys, zero_law(1), nullptr, one(1.0), Partition(1.0, 4, 4)).states.back()(0) - exact);
  const double e2 = std::abs(integrate_ode(sys, zero_law(1), nullptr, one(1.0), Partition(1.0, 4, 8)).states.back()(0) - exact);
  const double ratio = e1 / e2;
  CHECK(ratio > 8.0);
  CHECK(ratio < 32.0);
}

TEST_CASE("zero drift keeps the state") {
  const SystemBundle sys = scalar(0.0);
  const Trajectory t = integrate_ode(sys, zero_law(1), nullptr, one(2.5), Partition(3.0, 30, 3));
  for (const auto& x : t.states) CHECK(x(0) == 2.5);
  const Trajectory s = integrate_sde(sys, zero_control(1), one(2.5), Partition(3.0, 30, 3), RngStream{1, 0});
  for (const auto& x : s.states) CHECK(x(0) == 2.5);
}

TEST_CASE("benchmark expert closed loop decays at rate 0.55") {
  const SystemBundle sys = benchmark_system(7);
  const ExpertPolicy expert = expert_policy(2.0, sys);
  const Partition p(10.0, 100, 10);
  const Trajectory t = integrate_ode(sys, expert.feedback(), nullptr, Vector::Ones(4), p);
  REQUIRE(t.complete());
  for (int i = 1; i <= p.knots(); ++i) {
    REQUIRE(t.states[i].norm() < t.states[i - 1].norm());
    CHECK(t.states[i].norm() == doctest::Approx(2.0 * std::exp(-0.55 * p.knot(i))).epsilon(1e-7));
  }
}

TEST_CASE("extra input enters through g") {
  const SystemBundle sys = scalar(-1.0);
  const Partition p(5.0, 50, 20);
  const PerturbationSignal c{std::vector<Vector>(50, one(0.5))};
  const Trajectory t = integrate_ode(sys, zero_law(1), &c, one(0.0), p);
  // x(t) = c(1 - e^{-t})
  CHECK(t.states.back()(0) == doctest::Approx(0.5 * (1 - std::exp(-5.0))).epsilon(1e-9));
  CHECK(c.sup_norm() == 0.5);
}

TEST_CASE("divergence is flagged and truncates") {
  const SystemBundle sys = scalar(5.0);
  const Trajectory t = integrate_ode(sys, zero_law(1), nullptr, one(1.0), Partition(10.0, 100, 10));
  CHECK(t.diverged);
  CHECK(!t.complete());
  CHECK(t.diverged_at > 0);
  CHECK(t.states.size() < 101);
}

TEST_CASE("flow map") {
  const SystemBundle sys = scalar(-1.0);
  const Partition p(1.0, 10, 10);
  CHECK(flow_map(sys, zero_law(1), one(1.0), 0.3, p)(0) == doctest::Approx(std::exp(-0.1)).epsilon(1e-10));
  CHECK(flow_map(scalar(0.0), zero_law(1), one(4.0), 0.0, p)(0) == 4.0);
  CHECK_THROWS_AS(flow_map(sys, zero_law(1), one(1.0), 1.0, p), ContractViolation);
  CHECK_THROWS_AS(flow_map(sys, zero_law(1), one(1.0), 0.33, p), ContractViolation);
}

TEST_CASE("flow maps compose to the ODE solution") {
  const SystemBundle sys = benchmark_system(7);
  const ExpertPolicy expert = expert_policy(2.0, sys);
  const Partition p(1.0, 10, 10);
  const Vector x0 = (Vector(4) << 1.0, -0.5, 0.3, 2.0).finished();
  const Trajectory t = integrate_ode(sys, expert.feedback(), nullptr, x0, p);
  Vector x = x0;
  for (int i = 0; i < 5; ++i) x = flow_map(sys, expert.feedback(), x, p.knot(i), p);
  CHECK((x - t.states[5]).norm() < 1e-9);
}

TEST_CASE("SDE paths replay from their stream") {
  const SystemBundle sys = benchmark_system(7);
  const ExpertPolicy expert = expert_policy(2.0, sys);
  const SdeControl control = [&](double, const Vector& x, double) { return expert.evaluate(x); };
  const Partition p(2.0, 20, 10);
  const Trajectory a = integrate_sde(sys, control, Vector::Ones(4), p, RngStream{5, 3});
  const Trajectory b = integrate_sde(sys, control, Vector::Ones(4), p, RngStream{5, 3});
  const Trajectory c = integrate_sde(sys, control, Vector::Ones(4), p, RngStream{5, 4});
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) REQUIRE(a.states[i] == b.states[i]);
  CHECK(a.states.back() != c.states.back());
  CHECK(a.provenance == RngStream{5, 3});
}

TEST_CASE("Euler-Maruyama matches OU mean, variance and second moment") {
  SystemBundle ou = scalar(-1.0);
  const double sigma = 0.5;
  ou.diffusion_uncertainty = [sigma](double, const Vector&) -> Matrix { return Matrix::Constant(1, 1, sigma); };
  EnsembleSpec spec;
  spec.system = &ou;
  spec.make_control = [](int) { return zero_control(1); };
  spec.initial_law = InitialLaw::point_mass(one(1.0));
  spec.count = 10000;
  spec.partition = Partition(2.0, 20, 100);
  spec.master_seed = 31;
  spec.workers = 4;
  const Ensemble e = simulate_ensemble(spec);
  double s = 0, s2 = 0, s4 = 0;
  for (const auto& t : e.trajectories) {
    const double x = t.states.back()(0);
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double n = 10000;
  const double mean = s / n, m2 = s2 / n, var = m2 - mean * mean;
  const double exact_mean = std::exp(-2.0);
  const double exact_var = sigma * sigma / 2 * (1 - std::exp(-4.0));
  CHECK(std::abs(mean - exact_mean) < 3 * std::sqrt(var / n));
  CHECK(std::abs(m2 - (exact_var + exact_mean * exact_mean)) < 3 * std::sqrt((s4 / n - m2 * m2) / n));
}

TEST_CASE("ensembles do not depend on the worker count") {
  const SystemBundle sys = benchmark_system(7);
  const auto expert = std::make_shared<const ExpertPolicy>(expert_policy(2.0, sys));
  L1Config l1;
  EnsembleSpec spec;
  spec.system = &sys;
  spec.make_control = [&](int) { return make_layered_control(sys, expert, &l1); };
  spec.initial_law = InitialLaw::parse("uniform:-2,2", 4);
  spec.count = 12;
  spec.partition = Partition(2.0, 20, 10);
  spec.master_seed = 8;
  spec.workers = 1;
  const Ensemble a = simulate_ensemble(spec);
  spec.workers = 5;
  const Ensemble b = simulate_ensemble(spec);
  REQUIRE(a.trajectories.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(a.trajectories[i].provenance == ensemble_stream(8, StreamPurpose::kNoise, static_cast<int>(i)));
    for (std::size_t k = 0; k < a.trajectories[i].states.size(); ++k)
      REQUIRE(a.trajectories[i].states[k] == b.trajectories[i].states[k]);
  }
  CHECK(a.diverged_count() == 0);
}

TEST_CASE("single point-mass ensemble equals one SDE call") {
  const SystemBundle sys = benchmark_system(7);
  const ExpertPolicy expert = expert_policy(2.0, sys);
  const SdeControl control = [&](double, const Vector& x, double) { return expert.evaluate(x); };
  EnsembleSpec spec;
  spec.system = &sys;
  spec.make_control = [&](int) { return control; };
  spec.initial_law = InitialLaw::point_mass(Vector::Ones(4));
  spec.count = 1;
  spec.partition = Partition(1.0, 10, 10);
  spec.master_seed = 3;
  const Ensemble e = simulate_ensemble(spec);
  const Trajectory t = integrate_sde(sys, control, Vector::Ones(4), spec.partition,
                                     ensemble_stream(3, StreamPurpose::kNoise, 0));
  CHECK(e.trajectories[0].states.back() == t.states.back());
}

TEST_CASE("initial laws") {
  const InitialLaw u = InitialLaw::parse("uniform:-2,2", 4);
  CHECK(u.kind() == InitialLaw::Kind::kUniformBox);
  CHECK(u.compact_support());
  CHECK(u.dim() == 4);
  CHECK(u.mean().norm() == 0.0);
  CHECK(u.variance()(0) == doctest::Approx(16.0 / 12.0));
  const InitialLaw g = InitialLaw::parse("gaussian:1,0.5", 2);
  CHECK(!g.compact_support());
  CHECK(g.mean()(1) == 1.0);
  CHECK(InitialLaw::parse("point:1,2", 2).mean()(1) == 2.0);
  CHECK_THROWS_AS(InitialLaw::parse("uniform:2,-2", 4), ContractViolation);
  CHECK_THROWS_AS(InitialLaw::parse("cauchy:0,1", 4), ContractViolation);
  CHECK_THROWS_AS(InitialLaw::parse("point:1,2,3", 4), ContractViolation);

  RngCursor c(RngStream{1, 0});
  for (int i = 0; i < 1000; ++i) {
    const Vector x = u.sample(c);
    REQUIRE(x.maxCoeff() <= 2.0);
    REQUIRE(x.minCoeff() >= -2.0);
  }
  const InitialLaw emp = InitialLaw::empirical({one(1.0), one(3.0)});
  CHECK(emp.mean()(0) == 2.0);
  for (int i = 0; i < 100; ++i) {
    const double v = emp.sample(c)(0);
    REQUIRE((v == 1.0 || v == 3.0));
  }
}
