// Fully connected tanh network with analytic state Jacobian and
// parameter gradients through both the output and the Jacobian.
//
// Hidden layers use tanh, the output layer is affine. A width list of
// {n, m} is a plain affine map. Parameters are one flat vector laid out
// layer by layer: weights row-major (out x in), then biases.

#pragma once

#include <vector>

#include "drip/numerics.hpp"

namespace drip {

class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(std::vector<int> widths);

  /// Weights ~ N(0, weight_std^2); weight_std <= 0 means 1/sqrt(fan_in).
  /// Biases are zero unless `random_bias`, in which case they share the
  /// weight distribution.
  static Mlp gaussian(std::vector<int> widths, RngCursor& cursor, double weight_std,
                      bool random_bias);

  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  Eigen::Index parameter_count() const { return params_.size(); }

  const Vector& parameters() const { return params_; }
  void set_parameters(const Vector& params);

  Vector evaluate(const Vector& x) const;
  Matrix state_jacobian(const Vector& x) const;
  void evaluate_with_jacobian(const Vector& x, Vector& u, Matrix& jacobian) const;

  // Forward-pass intermediates kept for a later reverse sweep.
  struct Tape {
    std::vector<Vector> act;    // input to each layer
    std::vector<Matrix> dact;   // d(act)/dx
    std::vector<Vector> slope;  // tanh' per hidden layer
    std::vector<Matrix> dz;     // d(pre-activation)/dx per hidden layer
    Vector output;
    Matrix jacobian;
  };

  /// Output and state Jacobian at x, recording the tape.
  void forward(const Vector& x, Tape& tape) const;

  // Adds d(loss)/d(params) to `grad` given the cotangents of the output
  // (`u_bar`, m) and of the state Jacobian (`jacobian_bar`, m x n) at x.
  void accumulate_parameter_gradient(const Vector& x, const Vector& u_bar,
                                     const Matrix& jacobian_bar, Eigen::Ref<Vector> grad) const;
  void accumulate_parameter_gradient(const Tape& tape, const Vector& u_bar,
                                     const Matrix& jacobian_bar, Eigen::Ref<Vector> grad) const;

 private:
  using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                     Eigen::RowMajor>>;
  using MutRowMajorMap =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  RowMajorMap weight(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  std::size_t layers() const { return widths_.size() - 1; }

  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's weights
  Vector params_;
};

}  // namespace drip
