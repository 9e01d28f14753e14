// Subcommand pipeline: certify -> train -> evaluate -> figure5, plus an L1
// parameter sweep. Stages hand off through files under the output root.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "drip/config.hpp"

namespace drip {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitCertification = 2,
  kExitTraining = 3,
  kExitEvaluation = 4,
};

struct RunOptions {
  ExperimentConfig config;
  std::filesystem::path out_dir = "out";
  int workers = 1;
  bool bc = false;
  bool skip_certify = false;
  std::optional<std::filesystem::path> checkpoint;  // defaults to <out>/train/tasil
  std::ostream* log = nullptr;                       // progress messages
};

// Output layout under out_dir.
std::filesystem::path certify_dir(const RunOptions& options);
std::filesystem::path train_dir(const RunOptions& options);
std::filesystem::path evaluate_dir(const RunOptions& options);
std::filesystem::path figure5_dir(const RunOptions& options);
std::filesystem::path sweep_dir(const RunOptions& options);
std::filesystem::path checkpoint_stem(const RunOptions& options);

// Derived seeds for the stages; all come from config.master_seed.
std::uint64_t data_seed(const ExperimentConfig& config);
std::uint64_t evaluation_seed(const ExperimentConfig& config);

int cmd_certify(const RunOptions& options);
int cmd_train(const RunOptions& options);
int cmd_evaluate(const RunOptions& options);
int cmd_figure5(const RunOptions& options);
int cmd_sweep(const RunOptions& options);

}  // namespace drip
