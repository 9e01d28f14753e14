// CSV/JSON/SVG writers and the run manifest.

#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "drip/l1drac.hpp"
#include "drip/metrics.hpp"
#include "drip/simulate.hpp"
#include "drip/tasil.hpp"

namespace drip {

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// t,x1..xn,u1..um
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
// t,gap_mean,gap_se,p2_moment,p4_moment,p6_moment,diverged_count
void write_gap_csv(const std::filesystem::path& path, const GapReport& report);
nlohmann::json gap_summary_json(const GapReport& report);
// step,loss,value_term,jac_term,grad_norm
void write_training_log_csv(const std::filesystem::path& path,
                            const std::vector<TrainingLogRow>& log);
// t,yhat1..n,lambdahat1..n,u1..m
void write_l1_trace_csv(const std::filesystem::path& path, const std::vector<L1TraceRow>& trace);

struct Figure5Columns {
  std::vector<double> times;
  GapReport nominal;
  GapReport uncertain_tasil;
  GapReport uncertain_drip;
};

// t,gap_nominal,gap_uncertain_tasil,gap_uncertain_drip,se_nominal,
// se_uncertain_tasil,se_uncertain_drip,diverged_nominal,diverged_uncertain_tasil,
// diverged_uncertain_drip
void write_figure5_csv(const std::filesystem::path& path, const Figure5Columns& columns);

struct SvgSeries {
  std::string label;
  std::vector<double> y;
};

/// Self-contained line chart; non-finite points break the line.
void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<double>& x, const std::vector<SvgSeries>& series);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Written at the start of a run (status "running") and finalized with the
// artifact list, checksums and timings.
class RunManifest {
 public:
  RunManifest(std::filesystem::path path, std::string command, const std::string& config_text,
              std::uint64_t master_seed, int workers);

  void add_artifact(const std::filesystem::path& file);
  void set(const std::string& key, nlohmann::json value);
  void time_phase(const std::string& phase, double seconds);
  void finalize(const std::string& status, int exit_code);

  const nlohmann::json& document() const { return doc_; }

 private:
  void flush() const;

  std::filesystem::path path_;
  nlohmann::json doc_;
  std::vector<std::filesystem::path> artifacts_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace drip
