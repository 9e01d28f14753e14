// drip_cli: certify | train | evaluate | figure5 | sweep | config

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drip/config.hpp"
#include "drip/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out_dir;
  std::string checkpoint;
  bool bc = false;
  bool skip_certify = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Experiment config (sectioned text or JSON)");
  cmd->add_option("--seed", flags.seed, "Override master_seed");
  cmd->add_option("--workers", flags.workers, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", flags.out_dir, "Output root (default $DRIP_OUT_DIR or ./out)");
}

int run(int (*command)(const drip::RunOptions&), const CommonFlags& flags) {
  drip::RunOptions options;
  try {
    if (!flags.config_path.empty()) options.config = drip::load_config(flags.config_path);
    if (flags.seed) options.config.master_seed = *flags.seed;
    options.config.validate();
  } catch (const drip::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return drip::kExitConfig;
  }
  if (!flags.out_dir.empty()) {
    options.out_dir = flags.out_dir;
  } else if (const char* env = std::getenv("DRIP_OUT_DIR"); env != nullptr && *env != '\0') {
    options.out_dir = env;
  }
  options.workers = flags.workers;
  options.bc = flags.bc;
  options.skip_certify = flags.skip_certify;
  if (!flags.checkpoint.empty()) options.checkpoint = flags.checkpoint;
  options.log = &std::cerr;
  return command(options);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered imitation + L1 adaptive control experiments"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* certify = app.add_subcommand("certify", "Growth bounds, contraction, Lipschitz estimates");
  add_common(certify, flags);

  auto* train = app.add_subcommand("train", "Generate expert data and train the TaSIL policy");
  add_common(train, flags);
  train->add_flag("--bc", flags.bc, "Also train a value-only (behavior cloning) baseline");
  train->add_flag("--skip-certify", flags.skip_certify, "Do not require certify artifacts");

  auto* evaluate = app.add_subcommand("evaluate", "Imitation gaps, decomposition and δ-ISS checks");
  add_common(evaluate, flags);
  evaluate->add_option("--checkpoint", flags.checkpoint, "Policy checkpoint stem");

  auto* figure5 = app.add_subcommand("figure5", "Nominal / uncertain / uncertain+L1 comparison");
  add_common(figure5, flags);
  figure5->add_option("--checkpoint", flags.checkpoint, "Policy checkpoint stem");

  auto* sweep = app.add_subcommand("sweep", "Total gap over an (omega, Ts) grid");
  add_common(sweep, flags);
  sweep->add_option("--checkpoint", flags.checkpoint, "Policy checkpoint stem");

  std::string format = "text";
  auto* config = app.add_subcommand("config", "Print the resolved config with every default");
  config->add_option("--config", flags.config_path, "Config to resolve");
  config->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : drip::kExitConfig;
  }

  if (*certify) return run(drip::cmd_certify, flags);
  if (*train) return run(drip::cmd_train, flags);
  if (*evaluate) return run(drip::cmd_evaluate, flags);
  if (*figure5) return run(drip::cmd_figure5, flags);
  if (*sweep) return run(drip::cmd_sweep, flags);
  try {
    drip::ExperimentConfig resolved;
    if (!flags.config_path.empty()) resolved = drip::load_config(flags.config_path);
    std::cout << (format == "json" ? drip::serialize_config_json(resolved) + "\n"
                                   : drip::serialize_config_text(resolved));
  } catch (const drip::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return drip::kExitConfig;
  }
  return 0;
}
