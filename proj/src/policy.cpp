#include "drip/policy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace drip {

MlpPolicy mlp_policy(const std::vector<int>& widths, RngStream init_stream) {
  RngCursor cursor(init_stream);
  return MlpPolicy(Mlp::gaussian(widths, cursor, /*weight_std=*/0.0, /*random_bias=*/false));
}

std::string to_string(ExpertSign sign) {
  return sign == ExpertSign::kCancelH ? "cancel_h" : "paper_literal";
}

ExpertSign parse_expert_sign(const std::string& text) {
  if (text == "cancel_h") return ExpertSign::kCancelH;
  if (text == "paper_literal") return ExpertSign::kPaperLiteral;
  throw ContractViolation("unknown expert sign convention '" + text + "'");
}

ExpertPolicy::ExpertPolicy(double k_gain, std::shared_ptr<const Mlp> h, ExpertSign sign)
    : k_gain_(k_gain), h_(std::move(h)), sign_(sign) {
  if (!h_) throw ContractViolation("ExpertPolicy: missing reference network");
  if (!std::isfinite(k_gain)) throw ContractViolation("ExpertPolicy: gain must be finite");
  if (h_->input_dim() != h_->output_dim()) {
    throw ContractViolation("ExpertPolicy: K = k·I needs a square reference network");
  }
}

Matrix ExpertPolicy::gain() const {
  return k_gain_ * Matrix::Identity(input_dim(), state_dim());
}

Vector ExpertPolicy::evaluate(const Vector& x) const {
  const double s = sign_ == ExpertSign::kCancelH ? 1.0 : -1.0;
  return -k_gain_ * x + s * h_->evaluate(x);
}

Matrix ExpertPolicy::state_jacobian(const Vector& x) const {
  const double s = sign_ == ExpertSign::kCancelH ? 1.0 : -1.0;
  return -gain() + s * h_->state_jacobian(x);
}

ExpertPolicy expert_policy(double k_gain, const SystemBundle& sys, ExpertSign sign) {
  if (!sys.known_network) throw ContractViolation("expert_policy: system has no known network h");
  return ExpertPolicy(k_gain, sys.known_network, sign);
}

namespace {

void require_complete(const Trajectory& traj, const char* op) {
  if (!traj.complete()) {
    throw ContractViolation(std::string(op) + ": trajectory has " + std::to_string(traj.states.size()) +
                            " states, partition expects " +
                            std::to_string(traj.partition.knots() + 1));
  }
}

}  // namespace

PerturbationSignal perturbation_theta(const Policy& pi_hat, const Policy& expert,
                                      const Trajectory& pi_hat_rollout) {
  require_complete(pi_hat_rollout, "perturbation_theta");
  PerturbationSignal out;
  const int k = pi_hat_rollout.partition.knots();
  out.values.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const Vector& x = pi_hat_rollout.states[static_cast<std::size_t>(i)];
    out.values.push_back(pi_hat.evaluate(x) - expert.evaluate(x));
  }
  return out;
}

PsiSequence perturbation_psi(const Policy& pi_hat, const Policy& expert,
                             const Trajectory& expert_rollout) {
  require_complete(expert_rollout, "perturbation_psi");
  PsiSequence out;
  const int k = expert_rollout.partition.knots();
  for (int i = 0; i < k; ++i) {
    const Vector& x = expert_rollout.states[static_cast<std::size_t>(i)];
    out.values.values.push_back(pi_hat.evaluate(x) - expert.evaluate(x));
    out.jacobian_mismatch.push_back(pi_hat.state_jacobian(x) - expert.state_jacobian(x));
  }
  return out;
}

LipschitzEstimate estimate_lipschitz(const Policy& pi, double radius, int samples,
                                     std::uint64_t seed) {
  if (samples < 1000) throw ContractViolation("estimate_lipschitz: samples must be >= 1000");
  if (!(radius > 0.0)) throw ContractViolation("estimate_lipschitz: radius must be > 0");
  const int n = pi.state_dim();
  RngCursor cursor(RngStream{derive_seed(seed, 0x6c6970), 0});
  auto in_ball = [&](double r) {
    const Vector dir = gaussian_draw(cursor, n).normalized();
    return Vector(r * std::pow(cursor.uniform(), 1.0 / n) * dir);
  };

  LipschitzEstimate est;
  for (int s = 0; s < samples; ++s) {
    const Vector z0 = in_ball(radius);
    Vector step = gaussian_draw(cursor, n).normalized();
    step *= radius * (1e-3 + (1.0 - 1e-3) * cursor.uniform());
    const Vector z = z0 + step;

    const Matrix jac0 = pi.state_jacobian(z0);
    est.l_pi = std::max(est.l_pi, spectral_norm(jac0));
    const Vector remainder = pi.evaluate(z) - pi.evaluate(z0) - jac0 * step;
    est.l_dpi = std::max(est.l_dpi, 2.0 * remainder.norm() / step.squaredNorm());
  }
  est.l_pi *= kCertificationMargin;
  est.l_dpi *= kCertificationMargin;
  return est;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  std::filesystem::path p = stem;
  p += ext;
  return p;
}

void write_params(const std::filesystem::path& path, const Vector& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(params(i));
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

Vector read_params(const std::filesystem::path& path, Eigen::Index expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("missing parameter file " + path.string());
  Vector params(expected);
  for (Eigen::Index i = 0; i < expected; ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw MissingArtifact("truncated parameter file " + path.string());
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    params(i) = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw MissingArtifact("parameter file " + path.string() + " is longer than its manifest says");
  }
  return params;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const MlpPolicy& policy,
                     const CheckpointInfo& info) {
  const Mlp& net = policy.network();
  json j;
  j["kind"] = "mlp";
  j["architecture"] = {{"widths", net.widths()},
                       {"activation", "tanh"},
                       {"output", "affine"},
                       {"layout", "per layer: weights row-major (out x in), then biases"}};
  j["seeds"] = {{"init", info.init_seed}, {"data", info.data_seed}};
  j["mode"] = info.mode;
  j["parameter_count"] = net.parameter_count();
  j["parameter_file"] = with_ext(stem, ".bin").filename().string();
  j["encoding"] = "float64 little-endian";
  write_params(with_ext(stem, ".bin"), net.parameters());
  write_json(with_ext(stem, ".json"), j);
}

void save_expert_checkpoint(const std::filesystem::path& stem, const ExpertPolicy& expert,
                            std::uint64_t h_seed) {
  json j;
  j["kind"] = "expert";
  j["k_gain"] = expert.k_gain();
  j["sign_convention"] = to_string(expert.sign());
  j["h_seed"] = h_seed;
  j["parameter_count"] = 0;
  j["parameter_file"] = with_ext(stem, ".bin").filename().string();
  j["encoding"] = "float64 little-endian";
  write_params(with_ext(stem, ".bin"), Vector());
  write_json(with_ext(stem, ".json"), j);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& stem, const SystemBundle& sys) {
  const auto manifest = with_ext(stem, ".json");
  std::ifstream in(manifest);
  if (!in) throw MissingArtifact("missing checkpoint manifest " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw MissingArtifact("unreadable checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  LoadedCheckpoint out;
  out.info.kind = j.value("kind", "");
  if (out.info.kind == "expert") {
    const double k_gain = j.at("k_gain").get<double>();
    const ExpertSign sign = parse_expert_sign(j.at("sign_convention").get<std::string>());
    out.policy = std::make_shared<ExpertPolicy>(expert_policy(k_gain, sys, sign));
    return out;
  }
  if (out.info.kind != "mlp") throw MissingArtifact("checkpoint kind '" + out.info.kind + "' unknown");
  out.info.widths = j.at("architecture").at("widths").get<std::vector<int>>();
  out.info.init_seed = j.at("seeds").at("init").get<std::uint64_t>();
  out.info.data_seed = j.at("seeds").at("data").get<std::uint64_t>();
  out.info.mode = j.value("mode", "");
  Mlp net(out.info.widths);
  const auto bin = stem.parent_path() / j.at("parameter_file").get<std::string>();
  net.set_parameters(read_params(bin, net.parameter_count()));
  out.policy = std::make_shared<MlpPolicy>(std::move(net));
  return out;
}

}  // namespace drip
