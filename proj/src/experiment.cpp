#include "drip/experiment.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#include "drip/artifacts.hpp"
#include "drip/l1drac.hpp"
#include "drip/metrics.hpp"
#include "drip/policy.hpp"
#include "drip/tasil.hpp"

namespace drip {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path certify_dir(const RunOptions& o) { return o.out_dir / "certify"; }
fs::path train_dir(const RunOptions& o) { return o.out_dir / "train"; }
fs::path evaluate_dir(const RunOptions& o) { return o.out_dir / "evaluate"; }
fs::path figure5_dir(const RunOptions& o) { return o.out_dir / "figure5"; }
fs::path sweep_dir(const RunOptions& o) { return o.out_dir / "sweep"; }
fs::path checkpoint_stem(const RunOptions& o) {
  return o.checkpoint ? *o.checkpoint : train_dir(o) / "tasil";
}

std::uint64_t data_seed(const ExperimentConfig& c) { return derive_seed(c.master_seed, 0x64617461); }
std::uint64_t evaluation_seed(const ExperimentConfig& c) {
  return derive_seed(c.master_seed, 0x6576616c);
}

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::ostream& log_of(const RunOptions& o) {
  static std::ofstream null_stream;
  return o.log != nullptr ? *o.log : static_cast<std::ostream&>(null_stream);
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Runs a stage with its manifest, mapping exceptions to exit codes.
int run_stage(const RunOptions& options, const std::string& command, const fs::path& dir,
              int fallback_code, const std::function<int(RunManifest&)>& body) {
  std::ostream& log = log_of(options);
  try {
    options.config.validate();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  fs::create_directories(dir);
  RunManifest manifest(dir / "manifest.json", command, serialize_config_text(options.config),
                       options.config.master_seed, options.workers);
  int code = fallback_code;
  std::string status = "failed";
  try {
    code = body(manifest);
    status = code == kExitOk ? "ok" : "failed";
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    code = kExitConfig;
  } catch (const CertificationFailed& e) {
    log << "certification failed: " << e.what() << '\n';
    code = kExitCertification;
  } catch (const ExpertUnstable& e) {
    log << "training aborted: " << e.what() << '\n';
    code = kExitTraining;
  } catch (const TrainingAborted& e) {
    log << "training aborted: " << e.what() << '\n';
    code = kExitTraining;
  } catch (const MissingArtifact& e) {
    log << "missing artifact: " << e.what() << '\n';
    code = kExitEvaluation;
  } catch (const std::exception& e) {
    log << command << " failed: " << e.what() << '\n';
    code = fallback_code;
  }
  manifest.set("error_exit", code != kExitOk);
  manifest.finalize(status, code);
  return code;
}

struct Setup {
  SystemBundle sys;
  std::shared_ptr<const ExpertPolicy> expert;
};

Setup make_setup(const ExperimentConfig& config) {
  Setup s;
  s.sys = config.build_system();
  s.expert = std::make_shared<const ExpertPolicy>(
      expert_policy(config.system.k_gain, s.sys, config.expert_sign()));
  return s;
}

LoadedCheckpoint load_policy(const RunOptions& options, const SystemBundle& sys) {
  const fs::path stem = checkpoint_stem(options);
  return load_checkpoint(stem, sys);
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_certify(const RunOptions& options) {
  const fs::path dir = certify_dir(options);
  return run_stage(options, "certify", dir, kExitCertification, [&](RunManifest& manifest) {
    const ExperimentConfig& c = options.config;
    std::ostream& log = log_of(options);
    const Setup s = make_setup(c);
    json report;
    report["expert"] = {{"k_gain", c.system.k_gain}, {"sign", c.system.expert_sign}};

    Stopwatch growth_clock;
    const GrowthConstants growth =
        fit_growth_constants(s.sys, c.certify.probe_radius, c.certify.growth_points,
                             c.partition.horizon, c.master_seed);
    manifest.time_phase("growth_constants", growth_clock.seconds());
    report["growth_constants"] = {{"delta_mu", growth.delta_mu},
                                  {"delta_sigma", growth.delta_sigma},
                                  {"delta_g", growth.delta_g},
                                  {"radius", c.certify.probe_radius},
                                  {"margin", kCertificationMargin}};
    const Matrix g = s.sys.input_operator(0.0);
    const Matrix theta = theta_ad(g);
    report["input_operator_full_rank"] =
        (theta * g - Matrix::Identity(g.cols(), g.cols())).cwiseAbs().maxCoeff() < 1e-9;

    const fs::path report_path = dir / "certification.json";
    Stopwatch cert_clock;
    try {
      const ContractionCertificate cert = certify_contraction(
          s.sys, *s.expert, c.certify.probe_radius, c.certify.probes, c.partition.horizon,
          c.master_seed);
      manifest.time_phase("contraction", cert_clock.seconds());
      report["status"] = "certified";
      report["contraction"] = {{"lambda", cert.lambda},
                               {"worst_log_norm", cert.worst_log_norm},
                               {"worst_point", vector_json(cert.worst_point)},
                               {"worst_t", cert.worst_t},
                               {"probes", cert.probes},
                               {"probe_radius", c.certify.probe_radius},
                               {"jacobian_crosscheck", finite_or_null(cert.jacobian_crosscheck)}};
      report["theta_grid"] = theta_grid(cert.lambda, growth.delta_g);
      log << "certified: lambda=" << cert.lambda << " delta_mu=" << growth.delta_mu
          << " delta_g=" << growth.delta_g << '\n';
    } catch (const CertificationFailed& e) {
      report["status"] = "failed";
      report["failure"] = {{"message", e.what()},
                           {"worst_point", vector_json(e.worst_point)},
                           {"worst_t", e.worst_t},
                           {"worst_log_norm", finite_or_null(e.worst_log_norm)}};
      write_json_file(report_path, report);
      manifest.add_artifact(report_path);
      manifest.set("certification", report);
      throw;
    }

    Stopwatch lip_clock;
    const LipschitzEstimate lip = estimate_lipschitz(*s.expert, c.certify.probe_radius,
                                                     c.certify.lipschitz_samples, c.master_seed);
    manifest.time_phase("lipschitz", lip_clock.seconds());
    report["lipschitz"] = {{"l_pi", lip.l_pi}, {"l_dpi", lip.l_dpi}};

    write_json_file(report_path, report);
    manifest.add_artifact(report_path);
    const fs::path expert_stem = dir / "expert";
    save_expert_checkpoint(expert_stem, *s.expert, c.system.h_seed);
    manifest.add_artifact(fs::path(expert_stem).concat(".json"));
    manifest.set("certification", report);
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int cmd_train(const RunOptions& options) {
  const fs::path dir = train_dir(options);
  return run_stage(options, "train", dir, kExitTraining, [&](RunManifest& manifest) {
    const ExperimentConfig& c = options.config;
    std::ostream& log = log_of(options);
    if (!options.skip_certify) {
      const fs::path cert_path = certify_dir(options) / "certification.json";
      std::ifstream in(cert_path);
      if (!in) {
        log << "no certification at " << cert_path.string()
            << "; run `certify` first or pass --skip-certify\n";
        return static_cast<int>(kExitCertification);
      }
      const json cert = json::parse(in);
      if (cert.value("status", "") != "certified") {
        log << "certification at " << cert_path.string() << " did not pass\n";
        return static_cast<int>(kExitCertification);
      }
      manifest.set("certification", cert);
    }

    const Setup s = make_setup(c);
    const Partition partition = c.build_partition();
    Stopwatch data_clock;
    const TrainingSet data = generate_training_data(s.sys, s.expert, c.training_law(),
                                                    c.training.trajectories, partition,
                                                    data_seed(c));
    manifest.time_phase("training_data", data_clock.seconds());
    log << "generated " << data.size() << " expert trajectories\n";

    json summary;
    summary["trajectories"] = data.size();
    summary["data_seed"] = data_seed(c);
    summary["architecture"] = c.training.architecture;

    auto train_one = [&](const std::string& name, LossTerms terms) {
      OptimizerConfig opt = c.optimizer(options.workers);
      opt.terms = terms;
      Stopwatch clock;
      const TrainingResult result = train_tasil(data, c.training.architecture, opt);
      manifest.time_phase(name, clock.seconds());
      const fs::path stem = dir / name;
      save_checkpoint(stem, result.policy,
                      CheckpointInfo{"mlp", c.training.architecture, opt.init_seed, data_seed(c),
                                     terms == LossTerms::kValueOnly ? "bc" : "tasil"});
      manifest.add_artifact(fs::path(stem).concat(".json"));
      manifest.add_artifact(fs::path(stem).concat(".bin"));
      const fs::path log_path = dir / (name + "_log.csv");
      write_training_log_csv(log_path, result.log);
      manifest.add_artifact(log_path);
      const TasilLossReport final_loss = tasil_loss(result.policy, data);
      summary[name] = {{"initial_loss", result.initial_loss},
                       {"best_loss", result.best_loss},
                       {"best_step", result.best_step},
                       {"final_value_term", final_loss.mean_value_term},
                       {"final_jacobian_term", final_loss.mean_jacobian_term}};
      log << name << ": loss " << result.initial_loss << " -> " << result.best_loss << " (step "
          << result.best_step << ")\n";
    };
    train_one("tasil", LossTerms::kValueAndJacobian);
    if (options.bc) train_one("bc", LossTerms::kValueOnly);

    const fs::path expert_stem = dir / "expert";
    save_expert_checkpoint(expert_stem, *s.expert, c.system.h_seed);
    manifest.add_artifact(fs::path(expert_stem).concat(".json"));
    const fs::path summary_path = dir / "training.json";
    write_json_file(summary_path, summary);
    manifest.add_artifact(summary_path);
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------

int cmd_evaluate(const RunOptions& options) {
  const fs::path dir = evaluate_dir(options);
  return run_stage(options, "evaluate", dir, kExitEvaluation, [&](RunManifest& manifest) {
    const ExperimentConfig& c = options.config;
    std::ostream& log = log_of(options);
    const Setup s = make_setup(c);
    const LoadedCheckpoint ckpt = load_policy(options, s.sys);
    const Partition partition = c.build_partition();
    const std::uint64_t seed = evaluation_seed(c);
    manifest.set("checkpoint", checkpoint_stem(options).string());

    Stopwatch gap_clock;
    const LayeredPolicy layered{ckpt.policy, c.l1_config()};
    const PairedRollouts rollouts =
        paired_rollouts(layered, *s.expert, s.sys, c.coupling(), c.evaluation.ensemble_size,
                        partition, seed, options.workers);
    const GapDecomposition gaps = decompose_gaps(rollouts, c.evaluation.p_orders);
    manifest.time_phase("gaps", gap_clock.seconds());

    json summary;
    summary["coupling"] = c.coupling().describe();
    const std::pair<const char*, const GapReport*> reports[] = {
        {"policy_gap", &gaps.policy}, {"uncertainty_gap", &gaps.uncertainty},
        {"total_gap", &gaps.total}};
    for (const auto& [name, report] : reports) {
      const fs::path csv = dir / (std::string(name) + ".csv");
      write_gap_csv(csv, *report);
      manifest.add_artifact(csv);
      summary[name] = gap_summary_json(*report);
    }
    summary["decomposition"] = {
        {"max_pathwise_violation", finite_or_null(gaps.max_pathwise_violation)},
        {"max_mean_violation", finite_or_null(gaps.max_mean_violation)},
        {"holds", !(gaps.max_pathwise_violation > 1e-12)}};

    // Linear-response check of the policy gap against the max policy mismatch.
    double max_theta = 0.0;
    for (std::size_t i = 0; i < rollouts.imitation.size(); ++i) {
      if (!rollouts.imitation[i].complete()) continue;
      const PerturbationSignal th = perturbation_theta(*ckpt.policy, *s.expert, rollouts.imitation[i]);
      max_theta = std::max(max_theta, th.sup_norm());
    }

    try {
      const ContractionCertificate cert = certify_contraction(
          s.sys, *s.expert, c.certify.probe_radius, c.certify.probes, c.partition.horizon,
          c.master_seed);
      const double delta_g = s.sys.input_operator(0.0).norm() * kCertificationMargin;
      json corollary = json::array();
      bool all_hold = true;
      for (double theta : theta_grid(cert.lambda, delta_g)) {
        const DeltaIssParams p{cert.lambda, theta, delta_g};
        const double bound = max_theta / std::sqrt(theta * p.lambda_theta());
        const bool holds = gaps.policy.max_gap <= bound;
        all_hold = all_hold && holds;
        corollary.push_back({{"theta", theta}, {"bound", bound}, {"holds", holds}});
      }
      summary["policy_gap_bound"] = {{"max_theta", max_theta},
                                     {"lambda", cert.lambda},
                                     {"delta_g", delta_g},
                                     {"grid", corollary},
                                     {"all_hold", all_hold}};

      Stopwatch iss_clock;
      const IssSuiteResult iss =
          iss_falsification_suite(s.sys, *s.expert, cert.lambda, delta_g, c.training_law(),
                                  partition, c.evaluation.iss_instances, seed);
      manifest.time_phase("delta_iss", iss_clock.seconds());
      const fs::path iss_path = dir / "delta_iss.csv";
      std::ostringstream iss_csv;
      iss_csv << "instance,theta,initial_distance,perturbation_sup,min_margin,min_margin_t\n";
      for (std::size_t i = 0; i < iss.instances.size(); ++i) {
        const IssInstance& r = iss.instances[i];
        iss_csv << i << ',' << format_double(r.theta) << ',' << format_double(r.initial_distance)
                << ',' << format_double(r.perturbation_sup) << ','
                << format_double(r.min_margin) << ',' << format_double(r.min_margin_time) << '\n';
      }
      write_text_file(iss_path, iss_csv.str());
      manifest.add_artifact(iss_path);
      summary["delta_iss"] = {{"instances", iss.instances.size()},
                              {"falsifications", iss.falsifications},
                              {"min_margin", finite_or_null(iss.min_margin)}};
    } catch (const CertificationFailed& e) {
      summary["delta_iss"] = {{"skipped", std::string("expert not certified: ") + e.what()}};
    }

    json tails = json::array();
    if (!gaps.total.path_distances.empty()) {
      for (double delta : c.evaluation.deltas) {
        const TailCheck tc = tail_check(gaps.total, delta);
        tails.push_back({{"delta", delta}, {"p", tc.p}, {"moment", tc.moment},
                         {"threshold", tc.threshold}, {"fraction", tc.fraction},
                         {"bound", tc.bound}, {"pass", tc.pass}});
      }
    }
    summary["tail_checks"] = tails;

    const fs::path summary_path = dir / "evaluation.json";
    write_json_file(summary_path, summary);
    manifest.add_artifact(summary_path);
    log << "policy gap " << gaps.policy.max_gap << ", uncertainty gap " << gaps.uncertainty.max_gap
        << ", total gap " << gaps.total.max_gap << '\n';
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------

int cmd_figure5(const RunOptions& options) {
  const fs::path dir = figure5_dir(options);
  return run_stage(options, "figure5", dir, kExitEvaluation, [&](RunManifest& manifest) {
    const ExperimentConfig& c = options.config;
    std::ostream& log = log_of(options);
    const Setup s = make_setup(c);
    const LoadedCheckpoint ckpt = load_policy(options, s.sys);
    const Partition partition = c.build_partition();
    const std::uint64_t seed = evaluation_seed(c);
    const CouplingSpec coupling = c.coupling();
    const int count = c.evaluation.ensemble_size;
    manifest.set("checkpoint", checkpoint_stem(options).string());

    Stopwatch clock;
    const PairedRollouts plain = paired_rollouts(LayeredPolicy{ckpt.policy, std::nullopt},
                                                 *s.expert, s.sys, coupling, count, partition,
                                                 seed, options.workers);
    const PairedRollouts drip = paired_rollouts(LayeredPolicy{ckpt.policy, c.l1_config()},
                                                *s.expert, s.sys, coupling, count, partition,
                                                seed, options.workers);
    manifest.time_phase("rollouts", clock.seconds());

    Figure5Columns cols;
    cols.nominal = gap_report(plain.imitation, plain.expert, c.evaluation.p_orders);
    cols.uncertain_tasil = gap_report(plain.uncertain, plain.expert, c.evaluation.p_orders);
    cols.uncertain_drip = gap_report(drip.uncertain, drip.expert, c.evaluation.p_orders);
    cols.times = cols.nominal.times;

    const fs::path csv = dir / "figure5.csv";
    write_figure5_csv(csv, cols);
    manifest.add_artifact(csv);
    const std::pair<const char*, const GapReport*> reports[] = {
        {"gap_nominal", &cols.nominal},
        {"gap_uncertain_tasil", &cols.uncertain_tasil},
        {"gap_uncertain_drip", &cols.uncertain_drip}};
    json summary;
    for (const auto& [name, report] : reports) {
      const fs::path p = dir / (std::string(name) + ".csv");
      write_gap_csv(p, *report);
      manifest.add_artifact(p);
      summary[name] = gap_summary_json(*report);
    }

    const fs::path svg = dir / "figure5.svg";
    write_svg_chart(svg, "Total imitation gap", "t [s]", "E|X_t - x_t*|", cols.times,
                    {{"TaSIL, nominal", cols.nominal.gap_mean},
                     {"TaSIL, uncertain", cols.uncertain_tasil.gap_mean},
                     {"TaSIL + L1-DRAC, uncertain", cols.uncertain_drip.gap_mean}});
    manifest.add_artifact(svg);

    // One row per ensemble member: its initial pair, noise stream and fate.
    std::ostringstream members;
    members << "index,xi1,xi2,xi3,xi4,xibar1,xibar2,xibar3,xibar4,noise_stream,"
               "diverged_nominal,diverged_uncertain_tasil,diverged_uncertain_drip\n";
    for (int i = 0; i < count; ++i) {
      const auto k = static_cast<std::size_t>(i);
      members << i;
      for (Eigen::Index j = 0; j < plain.xi[k].size(); ++j) members << ',' << format_double(plain.xi[k](j));
      for (Eigen::Index j = 0; j < plain.xi_bar[k].size(); ++j) {
        members << ',' << format_double(plain.xi_bar[k](j));
      }
      members << ',' << ensemble_stream(seed, StreamPurpose::kNoise, i).stream_id << ','
              << !plain.imitation[k].complete() << ',' << !plain.uncertain[k].complete() << ','
              << !drip.uncertain[k].complete() << '\n';
    }
    const fs::path members_path = dir / "trajectories.csv";
    write_text_file(members_path, members.str());
    manifest.add_artifact(members_path);

    // L1 internals along the first drip trajectory.
    {
      auto [xi, xi_bar] = coupling.draw(seed, 0);
      L1Controller controller(known_dynamics(s.sys, ckpt.policy), c.l1_config(),
                              partition.interval());
      auto policy = ckpt.policy;
      const Trajectory traj = integrate_sde(
          s.sys,
          [&](double t, const Vector& x, double dt) {
            return Vector(policy->evaluate(x) + controller(t, x, dt));
          },
          xi_bar, partition, ensemble_stream(seed, StreamPurpose::kNoise, 0));
      const fs::path trace = dir / "l1_trace.csv";
      write_l1_trace_csv(trace, controller.trace());
      manifest.add_artifact(trace);
      const fs::path traj_path = dir / "drip_trajectory_0.csv";
      write_trajectory_csv(traj_path, traj);
      manifest.add_artifact(traj_path);
    }

    const double g1 = cols.nominal.max_gap;
    const double g2 = cols.uncertain_tasil.max_gap;
    const double g3 = cols.uncertain_drip.max_gap;
    json tails = json::array();
    if (!cols.uncertain_drip.path_distances.empty()) {
      for (double delta : c.evaluation.deltas) {
        const TailCheck tc = tail_check(cols.uncertain_drip, delta);
        tails.push_back({{"delta", delta}, {"p", tc.p}, {"moment", tc.moment},
                         {"threshold", tc.threshold}, {"fraction", tc.fraction},
                         {"bound", tc.bound}, {"pass", tc.pass}});
      }
    }
    summary["tail_checks_drip"] = tails;
    summary["ordering"] = {
        {"nominal_le_drip", g1 <= g3},
        {"drip_lt_uncertain_tasil", g3 < g2 || cols.uncertain_tasil.diverged_count > 0},
        {"uncertain_tasil_ratio", finite_or_null(g2 / g1)},
        {"drip_ratio", finite_or_null(g3 / g1)}};
    const fs::path summary_path = dir / "figure5.json";
    write_json_file(summary_path, summary);
    manifest.add_artifact(summary_path);
    log << "figure5: nominal " << g1 << ", uncertain TaSIL " << g2 << " (diverged "
        << cols.uncertain_tasil.diverged_count << "), TaSIL+L1 " << g3 << '\n';
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------

int cmd_sweep(const RunOptions& options) {
  const fs::path dir = sweep_dir(options);
  return run_stage(options, "sweep", dir, kExitEvaluation, [&](RunManifest& manifest) {
    const ExperimentConfig& c = options.config;
    std::ostream& log = log_of(options);
    const Setup s = make_setup(c);
    const LoadedCheckpoint ckpt = load_policy(options, s.sys);
    const Partition partition = c.build_partition();
    const std::uint64_t seed = evaluation_seed(c);
    const CouplingSpec coupling = c.coupling();

    std::ostringstream csv;
    csv << "omega,ts,lambda_s,max_gap,max_gap_se,final_gap,diverged_count\n";
    for (double omega : c.sweep.omega) {
      for (double ts : c.sweep.ts) {
        L1Config l1 = c.l1_config();
        l1.omega = omega;
        l1.ts = ts;
        const PairedRollouts r =
            paired_rollouts(LayeredPolicy{ckpt.policy, l1}, *s.expert, s.sys, coupling,
                            c.evaluation.ensemble_size, partition, seed, options.workers);
        const GapReport g = gap_report(r.uncertain, r.expert, c.evaluation.p_orders);
        const double se = g.gap_se.empty() ? 0.0 : g.gap_se[static_cast<std::size_t>(g.max_index)];
        csv << format_double(omega) << ',' << format_double(ts) << ','
            << format_double(l1.lambda_s) << ',' << format_double(g.max_gap) << ','
            << format_double(se) << ',' << format_double(g.gap_mean.back()) << ','
            << g.diverged_count << '\n';
        log << "sweep omega=" << omega << " ts=" << ts << ": max gap " << g.max_gap << '\n';
      }
    }
    const fs::path path = dir / "sweep.csv";
    write_text_file(path, csv.str());
    manifest.add_artifact(path);
    return static_cast<int>(kExitOk);
  });
}

}  // namespace drip
