#include <cmath>

#include <doctest.h>

#include "drip/dynamics.hpp"

using namespace drip;

namespace {

BenchmarkOptions no_h() {
  BenchmarkOptions o;
  o.network_weight_std = 0.0;
  return o;
}

Vector unit(int n, int i) {
  Vector v = Vector::Zero(n);
  v(i) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("true drift of the benchmark at the origin") {
  const SystemBundle sys = benchmark_system(7, no_h());
  const Vector d = eval_true_drift(sys, 0.0, Vector::Zero(4), Vector::Zero(4));
  CHECK((d - 0.1 * Vector::Ones(4)).norm() < 1e-15);
}

TEST_CASE("zero-uncertainty bundle") {
  BenchmarkOptions o = no_h();
  o.uncertainty_scale = 0.0;
  const SystemBundle sys = benchmark_system(7, o);
  CHECK(sys.uncertainty_free);
  CHECK(eval_true_drift(sys, 0.0, Vector::Zero(4), Vector::Zero(4)).norm() == 0.0);
  CHECK((eval_true_drift(sys, 0.0, unit(4, 0), Vector::Zero(4)) + 0.05 * unit(4, 0)).norm() < 1e-15);
}

TEST_CASE("nominal drift examples") {
  const SystemBundle sys = benchmark_system(7, no_h());
  CHECK((eval_nominal_drift(sys, 0.0, unit(4, 0), Vector::Zero(4)) + 0.05 * unit(4, 0)).norm() < 1e-15);
  CHECK((eval_nominal_drift(sys, 0.0, Vector::Zero(4), unit(4, 0)) - 0.25 * unit(4, 0)).norm() < 1e-15);

  const SystemBundle full = benchmark_system(7);
  const Vector x = (Vector(4) << 0.3, -1.2, 2.0, 0.7).finished();
  const Matrix g = full.input_operator(0.0);
  const Vector u = -g.completeOrthogonalDecomposition().pseudoInverse() * full.nominal_drift(0.0, x);
  CHECK(eval_nominal_drift(full, 0.0, x, u).norm() < 1e-12);
}

TEST_CASE("true minus nominal drift is the drift uncertainty") {
  const SystemBundle sys = benchmark_system(7);
  RngCursor c(RngStream{1, 2});
  for (int i = 0; i < 50; ++i) {
    const Vector x = 3.0 * gaussian_draw(c, 4);
    const Vector u = gaussian_draw(c, 4);
    const double t = 10.0 * c.uniform();
    const Vector diff = eval_true_drift(sys, t, x, u) - eval_nominal_drift(sys, t, x, u);
    CHECK((diff - sys.drift_uncertainty(t, x)).norm() < 1e-13);
  }
}

TEST_CASE("dimension mismatch is a contract violation") {
  const SystemBundle sys = benchmark_system(7);
  CHECK_THROWS_AS(eval_true_drift(sys, 0.0, Vector::Zero(3), Vector::Zero(4)), ContractViolation);
  CHECK_THROWS_AS(eval_nominal_drift(sys, 0.0, Vector::Zero(4), Vector::Zero(2)), ContractViolation);
}

TEST_CASE("benchmark diffusion and input operator") {
  const SystemBundle sys = benchmark_system(7);
  const Matrix s0 = sys.diffusion_uncertainty(0.0, Vector::Zero(4));
  CHECK((s0 - 0.1 * Matrix::Identity(4, 4)).norm() < 1e-15);
  CHECK(s0.norm() == doctest::Approx(0.2));
  for (double t : {0.0, 1.7, 9.9}) CHECK(sys.input_operator(t).norm() == doctest::Approx(0.5));
  const Vector x = 4.0 * Vector::Ones(4);  // ‖x‖ = 8
  CHECK(sys.diffusion_uncertainty(0.0, x)(0, 0) == doctest::Approx(0.1 + 0.05 * std::sqrt(8.0)));
}

TEST_CASE("state reading of the drift uncertainty") {
  BenchmarkOptions o;
  o.drift_reading = DriftUncertaintyReading::kState;
  const SystemBundle sys = benchmark_system(7, o);
  const Vector x = (Vector(4) << 1, 2, 2, 0).finished();  // ‖x‖ = 3
  CHECK((sys.drift_uncertainty(0.0, x) - 0.25 * x).norm() < 1e-15);
}

TEST_CASE("same h_seed gives identical networks") {
  const Mlp a = benchmark_network(7, {});
  const Mlp b = benchmark_network(7, {});
  CHECK(a.parameters() == b.parameters());
  CHECK(a.widths() == std::vector<int>{4, 16, 4});
  CHECK(benchmark_network(8, {}).parameters() != a.parameters());
}

TEST_CASE("analytic drift Jacobian matches finite differences") {
  const SystemBundle sys = benchmark_system(7);
  RngCursor c(RngStream{2, 0});
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = 2.0 * gaussian_draw(c, 4);
    const Matrix j = sys.nominal_drift_jacobian(0.0, x);
    Matrix fd(4, 4);
    const double h = 1e-6;
    for (int k = 0; k < 4; ++k)
      fd.col(k) = (sys.nominal_drift(0.0, x + h * unit(4, k)) - sys.nominal_drift(0.0, x - h * unit(4, k))) /
                  (2 * h);
    CHECK((j - fd).norm() < 1e-8);
  }
}

TEST_CASE("growth constants of the benchmark") {
  const SystemBundle sys = benchmark_system(7);
  const GrowthConstants g = fit_growth_constants(sys, 10.0, 4000);
  CHECK(g.delta_mu == doctest::Approx(std::sqrt(0.05) * 1.05).epsilon(5e-3));
  CHECK(std::abs(g.delta_g - 0.525) <= 1e-12);

  // The fitted constants certify the inequalities at fresh random states.
  RngCursor c(RngStream{4, 0});
  for (int i = 0; i < 10000; ++i) {
    Vector x = gaussian_draw(c, 4);
    x *= 10.0 * std::pow(c.uniform(), 0.25) / x.norm();
    const double r2 = x.squaredNorm();
    REQUIRE(sys.drift_uncertainty(0.0, x).squaredNorm() <= g.delta_mu * g.delta_mu * (1 + r2));
    REQUIRE(sys.diffusion_uncertainty(0.0, x).squaredNorm() <=
            g.delta_sigma * g.delta_sigma * std::sqrt(1 + r2));
  }
}

TEST_CASE("growth constants of the zero-uncertainty bundle") {
  BenchmarkOptions o;
  o.uncertainty_scale = 0.0;
  const GrowthConstants g = fit_growth_constants(benchmark_system(7, o), 10.0, 1000);
  CHECK(g.delta_mu == 0.0);
  CHECK(g.delta_sigma == 0.0);
}

TEST_CASE("non-finite fields are reported") {
  SystemBundle sys = benchmark_system(7);
  sys.drift_uncertainty = [](double, const Vector& x) -> Vector {
    return Vector::Constant(4, x.norm() > 5.0 ? std::nan("") : 0.0);
  };
  CHECK_THROWS_AS(fit_growth_constants(sys, 10.0, 1000), NonFiniteField);
}

TEST_CASE("input operator keeps full column rank") {
  const SystemBundle sys = benchmark_system(7);
  for (int i = 0; i < 100; ++i) {
    Eigen::JacobiSVD<Matrix> svd(sys.input_operator(0.1 * i));
    CHECK(svd.singularValues().minCoeff() > 1e-8);
  }
}
