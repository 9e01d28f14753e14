#include "drip/mlp.hpp"

#include <cmath>

namespace drip {

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ContractViolation("Mlp: need at least input and output widths");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < 1 || widths_[l + 1] < 1) throw ContractViolation("Mlp: widths must be >= 1");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
  }
  params_ = Vector::Zero(total);
}

Mlp Mlp::gaussian(std::vector<int> widths, RngCursor& cursor, double weight_std,
                  bool random_bias) {
  Mlp net(std::move(widths));
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const int fan_in = net.widths_[l];
    const int fan_out = net.widths_[l + 1];
    const double std_dev = weight_std > 0.0 ? weight_std : 1.0 / std::sqrt(fan_in);
    const Eigen::Index w0 = net.offsets_[l];
    const Eigen::Index nw = static_cast<Eigen::Index>(fan_in) * fan_out;
    for (Eigen::Index i = 0; i < nw; ++i) net.params_(w0 + i) = std_dev * cursor.gaussian();
    if (random_bias) {
      for (Eigen::Index i = 0; i < fan_out; ++i) net.params_(w0 + nw + i) = std_dev * cursor.gaussian();
    }
  }
  return net;
}

void Mlp::set_parameters(const Vector& params) {
  if (params.size() != params_.size()) {
    throw ContractViolation("Mlp::set_parameters: expected " + std::to_string(params_.size()) +
                            " parameters, got " + std::to_string(params.size()));
  }
  params_ = params;
}

Mlp::RowMajorMap Mlp::weight(std::size_t l) const {
  return RowMajorMap(params_.data() + offsets_[l], widths_[l + 1], widths_[l]);
}

Eigen::Map<const Vector> Mlp::bias(std::size_t l) const {
  const Eigen::Index start = offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l];
  return Eigen::Map<const Vector>(params_.data() + start, widths_[l + 1]);
}

Vector Mlp::evaluate(const Vector& x) const {
  if (x.size() != input_dim()) throw ContractViolation("Mlp::evaluate: input dimension mismatch");
  Vector a = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    Vector z = weight(l) * a + bias(l);
    a = (l + 1 < layers()) ? Vector(z.array().tanh()) : z;
  }
  return a;
}

Matrix Mlp::state_jacobian(const Vector& x) const {
  Vector u;
  Matrix jac;
  evaluate_with_jacobian(x, u, jac);
  return jac;
}

void Mlp::evaluate_with_jacobian(const Vector& x, Vector& u, Matrix& jacobian) const {
  if (x.size() != input_dim()) throw ContractViolation("Mlp: input dimension mismatch");
  Vector a = x;
  Matrix da;  // d(a)/dx; identity at the input, left implicit.
  for (std::size_t l = 0; l < layers(); ++l) {
    Vector z = weight(l) * a + bias(l);
    Matrix dz = (l == 0) ? Matrix(weight(l)) : Matrix(weight(l) * da);
    if (l + 1 < layers()) {
      a = z.array().tanh();
      const Vector slope = 1.0 - a.array().square();
      da = slope.asDiagonal() * dz;
    } else {
      u = std::move(z);
      jacobian = std::move(dz);
    }
  }
}

void Mlp::forward(const Vector& x, Tape& tape) const {
  if (x.size() != input_dim()) throw ContractViolation("Mlp: input dimension mismatch");
  const std::size_t nl = layers();
  tape.act.resize(nl);
  tape.dact.resize(nl);
  tape.slope.resize(nl);
  tape.dz.resize(nl);
  tape.act[0] = x;
  tape.dact[0] = Matrix::Identity(x.size(), x.size());
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    const Vector z = weight(l) * tape.act[l] + bias(l);
    tape.dz[l].noalias() = weight(l).lazyProduct(tape.dact[l]);
    tape.act[l + 1] = z.array().tanh();
    tape.slope[l] = 1.0 - tape.act[l + 1].array().square();
    tape.dact[l + 1].noalias() = tape.slope[l].asDiagonal() * tape.dz[l];
  }
  tape.output.noalias() = weight(nl - 1) * tape.act[nl - 1];
  tape.output += bias(nl - 1);
  tape.jacobian.noalias() = weight(nl - 1).lazyProduct(tape.dact[nl - 1]);
}

void Mlp::accumulate_parameter_gradient(const Vector& x, const Vector& u_bar,
                                        const Matrix& jacobian_bar, Eigen::Ref<Vector> grad) const {
  Tape tape;
  forward(x, tape);
  accumulate_parameter_gradient(tape, u_bar, jacobian_bar, grad);
}

void Mlp::accumulate_parameter_gradient(const Tape& tape, const Vector& u_bar,
                                        const Matrix& jacobian_bar, Eigen::Ref<Vector> grad) const {
  const std::size_t nl = layers();
  Vector a_bar = u_bar;
  Matrix da_bar = jacobian_bar;
  // Reverse sweep. At layer l the output cotangents are (z_bar, dz_bar).
  for (std::size_t li = nl; li-- > 0;) {
    Vector z_bar;
    Matrix dz_bar;
    if (li + 1 == nl) {
      z_bar = a_bar;
      dz_bar = da_bar;
    } else {
      const Vector& s = tape.slope[li];
      const Vector& a = tape.act[li + 1];
      dz_bar = s.asDiagonal() * da_bar;
      const Vector curvature = (da_bar.array() * tape.dz[li].array()).rowwise().sum();
      z_bar = a_bar.array() * s.array() - 2.0 * a.array() * s.array() * curvature.array();
    }
    const Eigen::Index rows = widths_[li + 1];
    const Eigen::Index cols = widths_[li];
    MutRowMajorMap gw(grad.data() + offsets_[li], rows, cols);
    gw.noalias() += z_bar * tape.act[li].transpose();
    gw.noalias() += dz_bar.lazyProduct(tape.dact[li].transpose());
    grad.segment(offsets_[li] + rows * cols, rows) += z_bar;
    if (li > 0) {
      a_bar.noalias() = weight(li).transpose() * z_bar;
      da_bar.noalias() = weight(li).transpose().lazyProduct(dz_bar);
    }
  }
}

}  // namespace drip
