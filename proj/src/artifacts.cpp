#include "drip/artifacts.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace drip {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void put_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_double(v(i));
}

void put_nan(std::ostream& out, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) out << ",nan";
}

double moment_at(const GapReport& r, int p, std::size_t k) {
  for (std::size_t j = 0; j < r.moment_orders.size(); ++j) {
    if (r.moment_orders[j] == p) return r.moments[j][k];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out = open_out(path);
  const Eigen::Index n = traj.states.empty() ? 0 : traj.states.front().size();
  const Eigen::Index m = traj.inputs.empty() ? 0 : traj.inputs.front().size();
  out << 't';
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",u" << i;
  out << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    out << format_double(traj.partition.knot(static_cast<int>(k)));
    put_vector(out, traj.states[k]);
    if (k < traj.inputs.size()) {
      put_vector(out, traj.inputs[k]);
    } else {
      put_nan(out, m);
    }
    out << '\n';
  }
}

void write_gap_csv(const std::filesystem::path& path, const GapReport& report) {
  std::ofstream out = open_out(path);
  out << "t,gap_mean,gap_se,p2_moment,p4_moment,p6_moment,diverged_count\n";
  for (std::size_t k = 0; k < report.times.size(); ++k) {
    out << format_double(report.times[k]) << ',' << format_double(report.gap_mean[k]) << ','
        << format_double(report.gap_se[k]) << ',' << format_double(moment_at(report, 1, k)) << ','
        << format_double(moment_at(report, 2, k)) << ',' << format_double(moment_at(report, 3, k))
        << ',' << report.diverged_count << '\n';
  }
}

json gap_summary_json(const GapReport& report) {
  json j;
  j["max_gap"] = finite_or_null(report.max_gap);
  j["max_gap_time"] = report.times.empty() ? json(nullptr)
                                           : json(report.times[static_cast<std::size_t>(report.max_index)]);
  j["max_gap_se"] = report.gap_se.empty()
                        ? json(nullptr)
                        : finite_or_null(report.gap_se[static_cast<std::size_t>(report.max_index)]);
  j["final_gap"] = report.gap_mean.empty() ? json(nullptr) : finite_or_null(report.gap_mean.back());
  j["sample_count"] = report.sample_count;
  j["diverged_count"] = report.diverged_count;
  j["diverged_fraction"] =
      report.sample_count > 0 ? static_cast<double>(report.diverged_count) / report.sample_count : 0.0;
  json moments = json::object();
  for (int p : report.moment_orders) {
    moments["p" + std::to_string(p)] =
        report.path_distances.empty() ? json(nullptr) : finite_or_null(report.max_moment(p));
  }
  j["max_moments"] = moments;
  return j;
}

void write_training_log_csv(const std::filesystem::path& path,
                            const std::vector<TrainingLogRow>& log) {
  std::ofstream out = open_out(path);
  out << "step,loss,value_term,jac_term,grad_norm\n";
  for (const TrainingLogRow& r : log) {
    out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.value_term) << ','
        << format_double(r.jacobian_term) << ',' << format_double(r.grad_norm) << '\n';
  }
}

void write_l1_trace_csv(const std::filesystem::path& path, const std::vector<L1TraceRow>& trace) {
  std::ofstream out = open_out(path);
  const Eigen::Index n = trace.empty() ? 0 : trace.front().y_hat.size();
  const Eigen::Index m = trace.empty() ? 0 : trace.front().u.size();
  out << 't';
  for (Eigen::Index i = 1; i <= n; ++i) out << ",yhat" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",lambdahat" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",u" << i;
  out << '\n';
  for (const L1TraceRow& r : trace) {
    out << format_double(r.t);
    put_vector(out, r.y_hat);
    put_vector(out, r.lambda_hat);
    put_vector(out, r.u);
    out << '\n';
  }
}

void write_figure5_csv(const std::filesystem::path& path, const Figure5Columns& c) {
  std::ofstream out = open_out(path);
  out << "t,gap_nominal,gap_uncertain_tasil,gap_uncertain_drip,se_nominal,se_uncertain_tasil,"
         "se_uncertain_drip,diverged_nominal,diverged_uncertain_tasil,diverged_uncertain_drip\n";
  const GapReport* reports[] = {&c.nominal, &c.uncertain_tasil, &c.uncertain_drip};
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    out << format_double(c.times[k]);
    for (const GapReport* r : reports) out << ',' << format_double(r->gap_mean[k]);
    for (const GapReport* r : reports) out << ',' << format_double(r->gap_se[k]);
    for (const GapReport* r : reports) out << ',' << r->diverged_count;
    out << '\n';
  }
}

void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<double>& x, const std::vector<SvgSeries>& series) {
  const double width = 720, height = 440, left = 70, right = 180, top = 40, bottom = 55;
  const double pw = width - left - right, ph = height - top - bottom;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0.0;
  for (double v : x) {
    x0 = std::min(x0, v);
    x1 = std::max(x1, v);
  }
  for (const SvgSeries& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) y1 = std::max(y1, v);
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > 0.0)) y1 = 1.0;
  y1 *= 1.05;
  auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto sy = [&](double v) { return top + ph - v / y1 * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream out = open_out(path);
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    const double yv = y1 * i / 5.0;
    out << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << xv << "</text>\n";
    out << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << sy(yv) << "\" y2=\""
        << sy(yv) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv
        << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << x_label << "</text>\n";
  out << "<text transform=\"translate(16," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = palette[s % 6];
    std::string d;
    bool pen_down = false;
    for (std::size_t k = 0; k < x.size() && k < series[s].y.size(); ++k) {
      const double v = series[s].y[k];
      if (!std::isfinite(v)) {
        pen_down = false;
        continue;
      }
      std::ostringstream pt;
      pt << std::setprecision(6) << (pen_down ? " L" : " M") << sx(x[k]) << ',' << sy(v);
      d += pt.str();
      pen_down = true;
    }
    out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << colour
        << "\" stroke-width=\"1.6\"/>\n";
    const double ly = top + 16 + 20.0 * static_cast<double>(s);
    out << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 36 << "\" y1=\"" << ly
        << "\" y2=\"" << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << series[s].label
        << "</text>\n";
  }
  out << "</svg>\n";
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

// ---------------------------------------------------------------------------

RunManifest::RunManifest(std::filesystem::path path, std::string command,
                         const std::string& config_text, std::uint64_t master_seed, int workers)
    : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {
  doc_["command"] = std::move(command);
  doc_["status"] = "running";
  doc_["master_seed"] = master_seed;
  doc_["workers"] = workers;
  doc_["config"] = config_text;
  doc_["versions"] = {{"drip", "1.0.0"},
                      {"compiler", __VERSION__},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)}};
  doc_["artifacts"] = json::array();
  doc_["timings"] = json::object();
  flush();
}

void RunManifest::add_artifact(const std::filesystem::path& file) { artifacts_.push_back(file); }

void RunManifest::set(const std::string& key, json value) {
  doc_[key] = std::move(value);
  flush();
}

void RunManifest::time_phase(const std::string& phase, double seconds) {
  doc_["timings"][phase] = seconds;
}

void RunManifest::finalize(const std::string& status, int exit_code) {
  json list = json::array();
  const std::filesystem::path base = path_.parent_path();
  for (const auto& file : artifacts_) {
    json entry;
    entry["path"] = std::filesystem::relative(file, base).generic_string();
    if (std::filesystem::exists(file)) {
      entry["sha256"] = sha256_file(file);
      entry["bytes"] = std::filesystem::file_size(file);
    } else {
      entry["sha256"] = nullptr;
    }
    list.push_back(entry);
  }
  doc_["artifacts"] = list;
  doc_["status"] = status;
  doc_["exit_code"] = exit_code;
  doc_["timings"]["total_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  flush();
}

void RunManifest::flush() const { write_json_file(path_, doc_); }

}  // namespace drip
