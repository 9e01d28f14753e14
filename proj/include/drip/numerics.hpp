// Dense small-dimension linear algebra and reproducible random streams.
//
// Everything here works on Eigen dense types. Dimensions are small
// (n <= 16) so the eigen/QR routines are written out directly.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace drip {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

class RankDeficient : public std::runtime_error {
 public:
  explicit RankDeficient(const std::string& what) : std::runtime_error(what) {}
};

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values(i)
};

/// Cyclic Jacobi eigensolve of a symmetric matrix.
SymmetricEigen sym_eig(const Matrix& a);

/// Largest eigenvalue of a symmetric matrix.
double sym_eig_max(const Matrix& a);

/// 2-norm logarithmic norm: largest eigenvalue of the symmetric part.
double log_norm_2(const Matrix& a);

/// Operator 2-norm (largest singular value).
double spectral_norm(const Matrix& a);

/// Largest singular value with its left/right singular vectors.
struct TopSingular {
  double value = 0.0;
  Vector left;
  Vector right;
};
TopSingular top_singular(const Matrix& a);

// Orthonormal basis of ker(M^T) for an n x m matrix of full column rank.
// Returns an n x (n - m) matrix; n x 0 when M is square.
Matrix nullspace_basis(const Matrix& m);

/// Inverse by Gaussian elimination with partial pivoting.
Matrix inverse_partial_pivot(const Matrix& a);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// ---------------------------------------------------------------------------
// Random streams.
//
// Philox4x32-10 keyed by the master seed; the 128-bit counter holds the
// stream id (upper half) and the draw position (lower half). A stream is an
// immutable descriptor; the position lives in an RngCursor owned by the
// caller.

struct RngStream {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

// Seed for an independent family of streams derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t tag);

class RngCursor {
 public:
  explicit RngCursor(RngStream stream, std::uint64_t position = 0)
      : stream_(stream), position_(position) {}

  const RngStream& stream() const { return stream_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1].
  double uniform_open_zero();
  double gaussian();

 private:
  RngStream stream_;
  std::uint64_t position_;
  // Philox yields four 32-bit words per block; we consume them as two u64.
  std::uint64_t buffer_[2] = {0, 0};
  int buffered_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// `count` i.i.d. standard normal draws.
Vector gaussian_draw(RngCursor& cursor, int count);

}  // namespace drip
