#include "drip/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace drip {

namespace {

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) {
    throw ContractViolation(std::string(op) + ": matrix is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ", expected square");
  }
}

}  // namespace

SymmetricEigen sym_eig(const Matrix& a_in) {
  require_square(a_in, "sym_eig");
  const Eigen::Index n = a_in.rows();
  const double scale = std::max(1.0, a_in.cwiseAbs().maxCoeff());
  if ((a_in - a_in.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ContractViolation("sym_eig: input is not symmetric");
  }
  if (!all_finite(a_in)) throw ContractViolation("sym_eig: non-finite input");

  Matrix a = 0.5 * (a_in + a_in.transpose());
  Matrix v = Matrix::Identity(n, n);

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(1.0, a.squaredNorm())) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation zeroing a(p,q).
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.values(i) = a(src, src);
    out.vectors.col(i) = v.col(src);
  }
  return out;
}

double sym_eig_max(const Matrix& a) {
  const SymmetricEigen e = sym_eig(a);
  return e.values.size() == 0 ? 0.0 : e.values(e.values.size() - 1);
}

double log_norm_2(const Matrix& a) {
  require_square(a, "log_norm_2");
  return sym_eig_max(0.5 * (a + a.transpose()));
}

TopSingular top_singular(const Matrix& a) {
  TopSingular out;
  out.left = Vector::Zero(a.rows());
  out.right = Vector::Zero(a.cols());
  if (a.size() == 0) return out;
  const SymmetricEigen e = sym_eig(a.transpose() * a);
  const Eigen::Index last = e.values.size() - 1;
  out.value = std::sqrt(std::max(0.0, e.values(last)));
  if (out.value > 0.0) {
    out.right = e.vectors.col(last);
    out.left = a * out.right / out.value;
  }
  return out;
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return std::sqrt(std::max(0.0, sym_eig_max(a.transpose() * a)));
}

Matrix nullspace_basis(const Matrix& m) {
  const Eigen::Index n = m.rows();
  const Eigen::Index k = m.cols();
  if (k > n) throw RankDeficient("nullspace_basis: more columns than rows");
  if (!all_finite(m)) throw ContractViolation("nullspace_basis: non-finite input");

  // Householder QR of M with column pivoting. Q's trailing n-k columns span
  // ker(M^T); the pivoted diagonal of R serves as the rank test.
  Matrix r = m;
  Matrix q = Matrix::Identity(n, n);
  Vector col_norms = r.colwise().squaredNorm().transpose();
  double r_max = 0.0;

  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index pivot = j;
    for (Eigen::Index c = j + 1; c < k; ++c)
      if (col_norms(c) > col_norms(pivot)) pivot = c;
    if (pivot != j) {
      r.col(j).swap(r.col(pivot));
      std::swap(col_norms(j), col_norms(pivot));
    }

    Vector x = r.col(j).tail(n - j);
    const double alpha = x.norm();
    if (j == 0) r_max = alpha;
    if (alpha <= 1e-10 * r_max || alpha == 0.0) {
      throw RankDeficient("nullspace_basis: matrix is rank deficient (column " +
                          std::to_string(j) + ")");
    }
    Vector v = x;
    v(0) += (x(0) >= 0.0 ? alpha : -alpha);
    v.normalize();
    r.bottomRows(n - j) -= 2.0 * v * (v.transpose() * r.bottomRows(n - j));
    q.rightCols(n - j) -= 2.0 * (q.rightCols(n - j) * v) * v.transpose();

    for (Eigen::Index c = j + 1; c < k; ++c) col_norms(c) = r.col(c).tail(n - j - 1).squaredNorm();
  }
  return q.rightCols(n - k);
}

Matrix inverse_partial_pivot(const Matrix& a_in) {
  require_square(a_in, "inverse_partial_pivot");
  const Eigen::Index n = a_in.rows();
  Matrix a = a_in;
  Matrix inv = Matrix::Identity(n, n);
  const double scale = std::max(1e-300, a.cwiseAbs().maxCoeff());
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) <= 1e-14 * scale) {
      throw RankDeficient("inverse_partial_pivot: singular matrix");
    }
    if (pivot != col) {
      a.row(col).swap(a.row(pivot));
      inv.row(col).swap(inv.row(pivot));
    }
    const double d = a(col, col);
    a.row(col) /= d;
    inv.row(col) /= d;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a(r, col);
      if (factor == 0.0) continue;
      a.row(r) -= factor * a.row(col);
      inv.row(r) -= factor * inv.row(col);
    }
  }
  return inv;
}

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

using Block = std::array<std::uint32_t, 4>;

Block philox4x32_10(Block ctr, std::uint32_t k0, std::uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t tag) {
  return splitmix64(splitmix64(master_seed) ^ splitmix64(tag + 0x632BE59BD9B4E019ull));
}

std::uint64_t RngCursor::next_u64() {
  if (buffered_ == 0) {
    const Block ctr = {static_cast<std::uint32_t>(position_),
                       static_cast<std::uint32_t>(position_ >> 32),
                       static_cast<std::uint32_t>(stream_.stream_id),
                       static_cast<std::uint32_t>(stream_.stream_id >> 32)};
    const Block out = philox4x32_10(ctr, static_cast<std::uint32_t>(stream_.master_seed),
                                    static_cast<std::uint32_t>(stream_.master_seed >> 32));
    buffer_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    buffer_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    buffered_ = 2;
    ++position_;
  }
  return buffer_[2 - buffered_--];
}

double RngCursor::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngCursor::uniform_open_zero() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double RngCursor::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double radius = std::sqrt(-2.0 * std::log(uniform_open_zero()));
  const double angle = 2.0 * std::numbers::pi * uniform();
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Vector gaussian_draw(RngCursor& cursor, int count) {
  if (count < 1) throw ContractViolation("gaussian_draw: count must be >= 1");
  Vector out(count);
  for (int i = 0; i < count; ++i) out(i) = cursor.gaussian();
  return out;
}

}  // namespace drip
