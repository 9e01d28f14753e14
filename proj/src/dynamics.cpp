#include "drip/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace drip {

namespace {

void check_dims(const SystemBundle& sys, const Vector& x, const Vector& u, const char* op) {
  if (x.size() != sys.state_dim || u.size() != sys.input_dim) {
    throw ContractViolation(std::string(op) + ": expected x in R^" + std::to_string(sys.state_dim) +
                            " and u in R^" + std::to_string(sys.input_dim) + ", got " +
                            std::to_string(x.size()) + " and " + std::to_string(u.size()));
  }
}

}  // namespace

Vector eval_nominal_drift(const SystemBundle& sys, double t, const Vector& x, const Vector& u) {
  check_dims(sys, x, u, "eval_nominal_drift");
  return sys.nominal_drift(t, x) + sys.input_operator(t) * u;
}

Vector eval_true_drift(const SystemBundle& sys, double t, const Vector& x, const Vector& u) {
  check_dims(sys, x, u, "eval_true_drift");
  return sys.nominal_drift(t, x) + sys.input_operator(t) * u + sys.drift_uncertainty(t, x);
}

Mlp benchmark_network(std::uint64_t h_seed, const BenchmarkOptions& options) {
  RngCursor cursor(RngStream{derive_seed(h_seed, 0x68), 0});
  const std::vector<int> widths = {4, options.network_hidden, 4};
  if (options.network_weight_std <= 0.0) return Mlp(widths);
  return Mlp::gaussian(widths, cursor, options.network_weight_std, /*random_bias=*/true);
}

SystemBundle benchmark_system(std::uint64_t h_seed, const BenchmarkOptions& options) {
  constexpr int n = 4;
  auto h = std::make_shared<const Mlp>(benchmark_network(h_seed, options));
  const BenchmarkOptions o = options;

  SystemBundle sys;
  sys.state_dim = n;
  sys.input_dim = n;
  sys.noise_dim = n;
  sys.known_network = h;
  sys.nominal_drift = [h, o](double, const Vector& x) -> Vector {
    return -o.decay * x - o.network_gain * h->evaluate(x);
  };
  sys.nominal_drift_jacobian = [h, o](double, const Vector& x) -> Matrix {
    return -o.decay * Matrix::Identity(n, n) - o.network_gain * h->state_jacobian(x);
  };
  sys.input_operator = [o](double) -> Matrix { return o.input_gain * Matrix::Identity(n, n); };
  sys.drift_uncertainty = [o](double, const Vector& x) -> Vector {
    const double magnitude = o.uncertainty_scale * (o.mu_offset + o.mu_slope * x.norm());
    if (o.drift_reading == DriftUncertaintyReading::kState) return magnitude * x;
    return Vector::Constant(n, magnitude);
  };
  sys.diffusion_uncertainty = [o](double, const Vector& x) -> Matrix {
    const double magnitude =
        o.uncertainty_scale * (o.sigma_offset + o.sigma_slope * std::sqrt(x.norm()));
    return magnitude * Matrix::Identity(n, n);
  };
  sys.uncertainty_free = o.uncertainty_scale == 0.0;
  return sys;
}

SystemBundle linear_system(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw ContractViolation("linear_system: incompatible A/B shapes");
  }
  SystemBundle sys;
  sys.state_dim = static_cast<int>(a.rows());
  sys.input_dim = static_cast<int>(b.cols());
  sys.noise_dim = static_cast<int>(a.rows());
  sys.nominal_drift = [a](double, const Vector& x) -> Vector { return a * x; };
  sys.nominal_drift_jacobian = [a](double, const Vector&) -> Matrix { return a; };
  sys.input_operator = [b](double) -> Matrix { return b; };
  const int n = sys.state_dim;
  sys.drift_uncertainty = [n](double, const Vector&) -> Vector { return Vector::Zero(n); };
  sys.diffusion_uncertainty = [n](double, const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  sys.uncertainty_free = true;
  return sys;
}

GrowthConstants fit_growth_constants(const SystemBundle& sys, double radius, int grid_points,
                                     double horizon, std::uint64_t seed) {
  if (!(radius > 0.0)) throw ContractViolation("fit_growth_constants: radius must be > 0");
  if (grid_points < 1000) throw ContractViolation("fit_growth_constants: grid_points must be >= 1000");
  const int n = sys.state_dim;

  // Directions: ± axes, ± diagonal, then a few fixed random unit vectors.
  std::vector<Vector> directions;
  for (int i = 0; i < n; ++i) {
    directions.push_back(Vector::Unit(n, i));
    directions.push_back(-Vector::Unit(n, i));
  }
  directions.push_back(Vector::Ones(n).normalized());
  directions.push_back(-Vector::Ones(n).normalized());
  RngCursor cursor(RngStream{derive_seed(seed, 0x67726f77), 0});
  for (int i = 0; i < 8; ++i) directions.push_back(gaussian_draw(cursor, n).normalized());

  const int radii = std::max(2, (grid_points + static_cast<int>(directions.size()) - 1) /
                                    static_cast<int>(directions.size()));
  constexpr int kTimes = 11;

  double mu_sq = 0.0;
  double sigma_sq = 0.0;
  double g_norm = 0.0;
  int probe = 0;
  for (int r = 0; r < radii; ++r) {
    const double rho = radius * r / (radii - 1);
    for (const Vector& dir : directions) {
      const double t = horizon * static_cast<double>(probe % kTimes) / (kTimes - 1);
      ++probe;
      const Vector x = rho * dir;
      const Vector mu = sys.drift_uncertainty(t, x);
      const Matrix sigma = sys.diffusion_uncertainty(t, x);
      const Matrix g = sys.input_operator(t);
      if (!all_finite(mu) || !all_finite(sigma) || !all_finite(g)) {
        throw NonFiniteField("fit_growth_constants: non-finite field at radius " +
                             std::to_string(rho) + ", t=" + std::to_string(t));
      }
      const double s = x.squaredNorm();
      mu_sq = std::max(mu_sq, mu.squaredNorm() / (1.0 + s));
      sigma_sq = std::max(sigma_sq, sigma.squaredNorm() / std::sqrt(1.0 + s));
      g_norm = std::max(g_norm, g.norm());
    }
  }
  return GrowthConstants{kCertificationMargin * std::sqrt(mu_sq),
                         kCertificationMargin * std::sqrt(sigma_sq), kCertificationMargin * g_norm};
}

}  // namespace drip
