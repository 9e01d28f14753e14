#include <cmath>
#include <vector>

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "drip/numerics.hpp"

using namespace drip;

namespace {

Matrix random_matrix(RngCursor& c, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = c.gaussian();
  return m;
}

}  // namespace

TEST_CASE("sym_eig_max on small matrices") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = -1;
  d(1, 1) = -2;
  CHECK(sym_eig_max(d) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(sym_eig_max(Matrix::Ones(2, 2)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(sym_eig_max(Matrix::Zero(2, 2))) < 1e-15);
}

TEST_CASE("sym_eig rejects bad input") {
  CHECK_THROWS_AS(sym_eig_max(Matrix::Zero(2, 3)), ContractViolation);
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = 1.0;
  CHECK_THROWS_AS(sym_eig_max(a), ContractViolation);
}

TEST_CASE("sym_eig matches Eigen's solver") {
  RngCursor c(RngStream{3, 0});
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 16;
    Matrix a = random_matrix(c, n, n);
    a = (a + a.transpose()).eval();
    const SymmetricEigen e = sym_eig(a);
    Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
    for (int i = 0; i < n; ++i)
      CHECK(e.values(i) == doctest::Approx(ref.eigenvalues()(i)).epsilon(1e-10).scale(1.0));
    CHECK((a * e.vectors - e.vectors * e.values.asDiagonal()).norm() < 1e-9);
  }
}

TEST_CASE("log_norm_2 examples") {
  CHECK(log_norm_2(-0.55 * Matrix::Identity(4, 4)) == doctest::Approx(-0.55).epsilon(1e-14));
  Matrix skew(2, 2);
  skew << 0, 1, -1, 0;
  CHECK(std::abs(log_norm_2(skew)) < 1e-15);
  Matrix upper(2, 2);
  upper << 1, 2, 0, 1;
  CHECK(log_norm_2(upper) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(log_norm_2(Matrix::Zero(3, 2)), ContractViolation);
}

TEST_CASE("log norm bounds the spectral abscissa and shifts with c") {
  RngCursor c(RngStream{5, 1});
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_matrix(c, 4, 4);
    Eigen::EigenSolver<Matrix> es(a);
    const double abscissa = es.eigenvalues().real().maxCoeff();
    CHECK(log_norm_2(a) >= abscissa - 1e-10);
    const double shift = 3.0 * c.gaussian();
    CHECK(log_norm_2(a + shift * Matrix::Identity(4, 4)) ==
          doctest::Approx(log_norm_2(a) + shift).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("top singular value against Eigen SVD") {
  RngCursor c(RngStream{9, 0});
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(c, 4, 4);
    Eigen::JacobiSVD<Matrix> svd(a);
    const TopSingular top = top_singular(a);
    CHECK(top.value == doctest::Approx(svd.singularValues()(0)).epsilon(1e-10));
    CHECK((a * top.right - top.value * top.left).norm() < 1e-9);
    CHECK(spectral_norm(a) == doctest::Approx(top.value).epsilon(1e-12));
  }
}

TEST_CASE("nullspace_basis examples") {
  CHECK(nullspace_basis(0.25 * Matrix::Identity(4, 4)).cols() == 0);
  CHECK(nullspace_basis(0.25 * Matrix::Identity(4, 4)).rows() == 4);

  Matrix e1 = Matrix::Zero(3, 1);
  e1(0) = 1;
  const Matrix n1 = nullspace_basis(e1);
  REQUIRE(n1.cols() == 2);
  CHECK(n1.row(0).norm() < 1e-12);
  CHECK((n1.transpose() * n1 - Matrix::Identity(2, 2)).norm() < 1e-12);

  Matrix diag(2, 1);
  diag << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  const Matrix n2 = nullspace_basis(diag);
  REQUIRE(n2.cols() == 1);
  CHECK(std::abs(std::abs(n2(0, 0)) - 1 / std::sqrt(2.0)) < 1e-12);
  CHECK(n2(0, 0) == doctest::Approx(-n2(1, 0)).epsilon(1e-12));
}

TEST_CASE("nullspace_basis is orthonormal and annihilated by M^T") {
  RngCursor c(RngStream{11, 0});
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7;
    const int m = 1 + trial % n;
    const Matrix mat = random_matrix(c, n, m);
    const Matrix basis = nullspace_basis(mat);
    REQUIRE(basis.cols() == n - m);
    CHECK((mat.transpose() * basis).norm() < 1e-10);
    CHECK((basis.transpose() * basis - Matrix::Identity(n - m, n - m)).norm() < 1e-10);
  }
}

TEST_CASE("nullspace_basis rejects rank deficiency") {
  Matrix m(3, 2);
  m << 1, 2, 2, 4, 3, 6;
  CHECK_THROWS_AS(nullspace_basis(m), RankDeficient);
}

TEST_CASE("inverse_partial_pivot") {
  RngCursor c(RngStream{13, 0});
  const Matrix a = random_matrix(c, 6, 6);
  CHECK((a * inverse_partial_pivot(a) - Matrix::Identity(6, 6)).norm() < 1e-10);
  CHECK_THROWS_AS(inverse_partial_pivot(Matrix::Ones(3, 3)), RankDeficient);
}

TEST_CASE("streams replay and separate") {
  RngCursor a(RngStream{7, 0}), b(RngStream{7, 0});
  const Vector va = gaussian_draw(a, 4);
  const Vector vb = gaussian_draw(b, 4);
  CHECK(va == vb);
  RngCursor other(RngStream{7, 1});
  CHECK(gaussian_draw(other, 4) != va);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK_THROWS_AS(gaussian_draw(a, 0), ContractViolation);
}

TEST_CASE("cursor position resumes a stream") {
  RngCursor a(RngStream{21, 4});
  for (int i = 0; i < 7; ++i) a.next_u64();
  const std::uint64_t expected = a.next_u64();
  RngCursor b(RngStream{21, 4});
  for (int i = 0; i < 7; ++i) b.next_u64();
  CHECK(b.next_u64() == expected);
}

TEST_CASE("gaussian moments over a million draws") {
  RngCursor c(RngStream{7, 0});
  const int n = 1000000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = c.gaussian();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 4e-3);
  CHECK(std::abs(sum2 / n - mean * mean - 1.0) < 5e-3);
}

TEST_CASE("uniform draws stay in range") {
  RngCursor c(RngStream{8, 0});
  for (int i = 0; i < 100000; ++i) {
    const double u = c.uniform();
    const double v = c.uniform_open_zero();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("distinct streams are uncorrelated") {
  RngCursor a(RngStream{99, 0}), b(RngStream{99, 1});
  const int n = 100000;
  double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.gaussian(), y = b.gaussian();
    sab += x * y;
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  CHECK(std::abs(corr) < 0.01);
}

TEST_CASE("philox4x32-10 known-answer vectors") {
  RngCursor zero(RngStream{0, 0});
  CHECK(zero.next_u64() == 0x6627e8d5e169c58dull);
  CHECK(zero.next_u64() == 0xbc57ac4c9b00dbd8ull);
  const std::uint64_t ones = ~std::uint64_t{0};
  RngCursor full(RngStream{ones, ones}, ones);
  CHECK(full.next_u64() == 0x408f276d41c83b0eull);
  CHECK(full.next_u64() == 0xa20bc7c66d5451fdull);
}
