#include "drip/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace drip {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + s + "' is not a valid number");
  }
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  return std::string(buf, ptr);
}

void parse_value(const std::string& s, double& v) { v = parse_number<double>(s); }
void parse_value(const std::string& s, int& v) { v = parse_number<int>(s); }
void parse_value(const std::string& s, std::uint64_t& v) { v = parse_number<std::uint64_t>(s); }
void parse_value(const std::string& s, std::string& v) {
  v = trim(s);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
}
template <typename T>
void parse_value(const std::string& s, std::vector<T>& v) {
  std::string body = trim(s);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') {
    body = body.substr(1, body.size() - 2);
  }
  v.clear();
  for (const std::string& item : split_list(body)) {
    T x{};
    parse_value(item, x);
    v.push_back(x);
  }
}

std::string format_value(double v) { return format_number(v); }
std::string format_value(int v) { return format_number(v); }
std::string format_value(std::uint64_t v) { return format_number(v); }
std::string format_value(const std::string& v) { return v; }
template <typename T>
std::string format_value(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_value(v[i]);
  return out;
}

json to_json_value(double v) { return v; }
json to_json_value(int v) { return v; }
json to_json_value(std::uint64_t v) { return v; }
json to_json_value(const std::string& v) { return v; }
template <typename T>
json to_json_value(const std::vector<T>& v) {
  json arr = json::array();
  for (const T& x : v) arr.push_back(to_json_value(x));
  return arr;
}

// JSON scalars and arrays are rendered back into the text form.
std::string from_json_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned()) return format_number(v.get<std::uint64_t>());
  if (v.is_number_integer()) return format_number(v.get<std::int64_t>());
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + from_json_value(v[i]);
    return out;
  }
  throw ConfigError("unsupported JSON value " + v.dump());
}

struct Field {
  std::string section;  // empty for top-level keys
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<json(const ExperimentConfig&)> get_json;
  std::function<void(ExperimentConfig&, const std::string&)> set;

  std::string name() const { return section.empty() ? key : section + "." + key; }
};

template <typename Access>
Field make_field(std::string section, std::string key, Access access) {
  Field f;
  f.section = std::move(section);
  f.key = std::move(key);
  f.get = [access](const ExperimentConfig& c) {
    return format_value(access(const_cast<ExperimentConfig&>(c)));
  };
  f.get_json = [access](const ExperimentConfig& c) {
    return to_json_value(access(const_cast<ExperimentConfig&>(c)));
  };
  f.set = [access](ExperimentConfig& c, const std::string& v) { parse_value(v, access(c)); };
  return f;
}

#define DRIP_FIELD(sec, member) \
  make_field(#sec, #member, [](ExperimentConfig& c) -> auto& { return c.sec.member; })

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      make_field("", "master_seed", [](ExperimentConfig& c) -> auto& { return c.master_seed; }),
      DRIP_FIELD(system, h_seed),
      DRIP_FIELD(system, h_hidden),
      DRIP_FIELD(system, h_weight_std),
      DRIP_FIELD(system, decay),
      DRIP_FIELD(system, network_gain),
      DRIP_FIELD(system, input_gain),
      DRIP_FIELD(system, mu_offset),
      DRIP_FIELD(system, mu_slope),
      DRIP_FIELD(system, sigma_offset),
      DRIP_FIELD(system, sigma_slope),
      DRIP_FIELD(system, uncertainty_scale),
      DRIP_FIELD(system, drift_reading),
      DRIP_FIELD(system, expert_sign),
      DRIP_FIELD(system, k_gain),
      DRIP_FIELD(partition, horizon),
      DRIP_FIELD(partition, knots),
      DRIP_FIELD(partition, substeps),
      DRIP_FIELD(certify, probe_radius),
      DRIP_FIELD(certify, probes),
      DRIP_FIELD(certify, growth_points),
      DRIP_FIELD(certify, lipschitz_samples),
      DRIP_FIELD(training, trajectories),
      DRIP_FIELD(training, architecture),
      DRIP_FIELD(training, initial_law),
      DRIP_FIELD(training, learning_rate),
      DRIP_FIELD(training, steps),
      DRIP_FIELD(training, beta_start),
      DRIP_FIELD(training, beta_end),
      DRIP_FIELD(training, jacobian_norm),
      DRIP_FIELD(training, init_seed),
      DRIP_FIELD(l1, omega),
      DRIP_FIELD(l1, ts),
      DRIP_FIELD(l1, lambda_s),
      DRIP_FIELD(l1, adaptation_sign_variant),
      DRIP_FIELD(evaluation, ensemble_size),
      DRIP_FIELD(evaluation, coupling),
      DRIP_FIELD(evaluation, nominal_law),
      DRIP_FIELD(evaluation, true_law),
      DRIP_FIELD(evaluation, shift),
      DRIP_FIELD(evaluation, scale),
      DRIP_FIELD(evaluation, p_orders),
      DRIP_FIELD(evaluation, deltas),
      DRIP_FIELD(evaluation, iss_instances),
      DRIP_FIELD(sweep, omega),
      DRIP_FIELD(sweep, ts),
  };
  return fields;
}

#undef DRIP_FIELD

const Field* find_field(const std::string& name) {
  for (const Field& f : schema())
    if (f.name() == name) return &f;
  return nullptr;
}

void assign(ExperimentConfig& config, std::set<std::string>& seen, const std::string& name,
            const std::string& value, const std::string& where) {
  const Field* field = find_field(name);
  if (field == nullptr) throw ConfigError(where + ": unknown key '" + name + "'");
  if (!seen.insert(name).second) throw ConfigError(where + ": duplicate key '" + name + "'");
  try {
    field->set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + name + ": " + e.what());
  }
}

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key + ": " + message);
}

}  // namespace

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config_text(a) == serialize_config_text(b);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : schema()) out.push_back(f.name());
  return out;
}

namespace {

ExperimentConfig parse_text(const std::string& text, const std::string& origin,
                            std::map<std::string, int>* key_lines) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const Field& f : schema()) known = known || f.section == section;
      if (!known) throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": missing key");
    const std::string name = section.empty() || key.find('.') != std::string::npos
                                 ? key
                                 : section + "." + key;
    assign(config, seen, name, line.substr(eq + 1), where);
    if (key_lines != nullptr) (*key_lines)[name] = line_no;
  }
  return config;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  return parse_text(text, origin, nullptr);
}

ExperimentConfig parse_config_json(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": invalid JSON (" + e.what() + ")");
  }
  if (!doc.is_object()) throw ConfigError(origin + ": top level must be an object");
  ExperimentConfig config;
  std::set<std::string> seen;
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object()) {
      for (const auto& [sub, v] : value.items()) {
        assign(config, seen, key + "." + sub, from_json_value(v), origin);
      }
    } else {
      assign(config, seen, key, from_json_value(value), origin);
    }
  }
  return config;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') return parse_config_json(text, origin);
  return parse_config_text(text, origin);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string origin = path.string();
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    // A run manifest carries the resolved config text; rerun from it directly.
    json doc = json::parse(text, nullptr, false);
    if (doc.is_object() && doc.contains("command") && doc.contains("config") &&
        doc["config"].is_string()) {
      ExperimentConfig config = parse_text(doc["config"].get<std::string>(), origin, nullptr);
      config.validate();
      return config;
    }
    ExperimentConfig config = parse_config_json(text, origin);
    try {
      config.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": " + e.what());
    }
    return config;
  }
  std::map<std::string, int> key_lines;
  ExperimentConfig config = parse_text(text, origin, &key_lines);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    // Anchor semantic errors at the line that set the key, when there is one.
    const std::string what = e.what();
    const std::string key = what.substr(0, what.find(':'));
    const auto it = key_lines.find(key);
    const std::string where = it == key_lines.end() ? origin : origin + ":" + std::to_string(it->second);
    throw ConfigError(where + ": " + what);
  }
  return config;
}

std::string serialize_config_text(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : schema()) {
    if (f.section != section) {
      section = f.section;
      out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << "\n";
  }
  return out.str();
}

std::string serialize_config_json(const ExperimentConfig& config) {
  json doc = json::object();
  for (const Field& f : schema()) {
    if (f.section.empty()) {
      doc[f.key] = f.get_json(config);
    } else {
      doc[f.section][f.key] = f.get_json(config);
    }
  }
  return doc.dump(2);
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  const SystemSection& s = system;
  require(s.h_hidden >= 1, "system.h_hidden", "must be >= 1");
  require(nonneg(s.h_weight_std), "system.h_weight_std", "must be finite and >= 0");
  for (auto [key, v] : {std::pair{"system.decay", s.decay}, {"system.network_gain", s.network_gain},
                        {"system.input_gain", s.input_gain}, {"system.mu_offset", s.mu_offset},
                        {"system.mu_slope", s.mu_slope}, {"system.sigma_offset", s.sigma_offset},
                        {"system.sigma_slope", s.sigma_slope},
                        {"system.uncertainty_scale", s.uncertainty_scale}}) {
    require(std::isfinite(v), key, "must be finite");
  }
  require(s.input_gain != 0.0, "system.input_gain", "must be nonzero (g needs full column rank)");
  require(s.drift_reading == "all_ones" || s.drift_reading == "state", "system.drift_reading",
          "must be all_ones or state");
  require(s.expert_sign == "cancel_h" || s.expert_sign == "paper_literal", "system.expert_sign",
          "must be cancel_h or paper_literal");
  require(std::isfinite(s.k_gain), "system.k_gain", "must be finite");

  require(positive(partition.horizon), "partition.horizon", "must be positive");
  require(partition.knots >= 1, "partition.knots", "must be >= 1");
  require(partition.substeps >= 1, "partition.substeps", "must be >= 1");

  require(positive(certify.probe_radius), "certify.probe_radius", "must be positive");
  require(certify.probes >= 10000, "certify.probes", "must be >= 10000");
  require(certify.growth_points >= 1000, "certify.growth_points", "must be >= 1000");
  require(certify.lipschitz_samples >= 1000, "certify.lipschitz_samples", "must be >= 1000");

  const TrainingSection& t = training;
  require(t.trajectories >= 1, "training.trajectories", "must be >= 1");
  require(t.architecture.size() >= 2 && t.architecture.front() == 4 &&
              t.architecture.back() == 4,
          "training.architecture", "must start and end with 4 (the benchmark state/input size)");
  for (int w : t.architecture) require(w >= 1, "training.architecture", "widths must be >= 1");
  require(positive(t.learning_rate), "training.learning_rate", "must be positive");
  require(t.steps >= 1, "training.steps", "must be >= 1");
  require(positive(t.beta_start) && positive(t.beta_end), "training.beta_start",
          "beta_start and beta_end must be positive");
  require(t.jacobian_norm == "operator" || t.jacobian_norm == "frobenius",
          "training.jacobian_norm", "must be operator or frobenius");
  try {
    if (!training_law().compact_support()) {
      throw ConfigError("law must have compact support");
    }
  } catch (const std::exception& e) {
    throw ConfigError(std::string("training.initial_law: ") + e.what());
  }

  try {
    l1_config().validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("l1: ") + e.what());
  }

  const EvaluationSection& ev = evaluation;
  require(ev.ensemble_size >= 30, "evaluation.ensemble_size", "must be >= 30");
  try {
    const CouplingSpec c = coupling();
    (void)c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("evaluation: ") + e.what());
  }
  require(ev.shift.empty() || ev.shift.size() == 4, "evaluation.shift",
          "must be empty or have 4 entries");
  require(std::isfinite(ev.scale), "evaluation.scale", "must be finite");
  require(!ev.p_orders.empty(), "evaluation.p_orders", "must not be empty");
  for (int p : ev.p_orders) require(p >= 1, "evaluation.p_orders", "orders must be >= 1");
  for (double d : ev.deltas) require(d > 0.0 && d < 1.0, "evaluation.deltas", "must lie in (0,1)");
  require(ev.iss_instances >= 0, "evaluation.iss_instances", "must be >= 0");

  const double dt = partition.horizon / partition.knots / partition.substeps;
  auto multiple_of_step = [dt](double ts) {
    const double r = ts / dt;
    return std::round(r) >= 1.0 && std::abs(r - std::round(r)) <= 1e-6 * std::max(1.0, r);
  };
  require(multiple_of_step(l1.ts), "l1.ts", "must be an integer multiple of the integrator step");
  for (double w : sweep.omega) require(positive(w), "sweep.omega", "must be positive");
  for (double v : sweep.ts) {
    require(positive(v) && multiple_of_step(v), "sweep.ts",
            "entries must be positive multiples of the integrator step");
  }
}

BenchmarkOptions ExperimentConfig::benchmark_options() const {
  BenchmarkOptions o;
  o.decay = system.decay;
  o.network_gain = system.network_gain;
  o.input_gain = system.input_gain;
  o.mu_offset = system.mu_offset;
  o.mu_slope = system.mu_slope;
  o.sigma_offset = system.sigma_offset;
  o.sigma_slope = system.sigma_slope;
  o.uncertainty_scale = system.uncertainty_scale;
  o.drift_reading = system.drift_reading == "state" ? DriftUncertaintyReading::kState
                                                    : DriftUncertaintyReading::kAllOnes;
  o.network_hidden = system.h_hidden;
  o.network_weight_std = system.h_weight_std;
  return o;
}

SystemBundle ExperimentConfig::build_system() const {
  return benchmark_system(system.h_seed, benchmark_options());
}

ExpertSign ExperimentConfig::expert_sign() const { return parse_expert_sign(system.expert_sign); }

Partition ExperimentConfig::build_partition() const {
  return Partition(partition.horizon, partition.knots, partition.substeps);
}

InitialLaw ExperimentConfig::training_law() const {
  return InitialLaw::parse(training.initial_law, 4);
}

OptimizerConfig ExperimentConfig::optimizer(int workers) const {
  OptimizerConfig o;
  o.learning_rate = training.learning_rate;
  o.steps = training.steps;
  o.beta_start = training.beta_start;
  o.beta_end = training.beta_end;
  o.init_seed = training.init_seed;
  o.norm = training.jacobian_norm == "frobenius" ? JacobianNorm::kFrobenius
                                                 : JacobianNorm::kOperator;
  o.workers = workers;
  return o;
}

L1Config ExperimentConfig::l1_config() const {
  L1Config c;
  c.omega = l1.omega;
  c.ts = l1.ts;
  c.lambda_s = l1.lambda_s;
  try {
    c.sign = parse_adaptation_sign(l1.adaptation_sign_variant);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("l1.adaptation_sign_variant: ") + e.what());
  }
  return c;
}

CouplingSpec ExperimentConfig::coupling() const {
  CouplingSpec c;
  try {
    c.mode = parse_coupling_mode(evaluation.coupling);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("evaluation.coupling: ") + e.what());
  }
  try {
    c.nominal_law = InitialLaw::parse(evaluation.nominal_law, 4);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("evaluation.nominal_law: ") + e.what());
  }
  try {
    c.true_law = InitialLaw::parse(evaluation.true_law, 4);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("evaluation.true_law: ") + e.what());
  }
  c.shift = Vector::Zero(4);
  for (std::size_t i = 0; i < evaluation.shift.size() && i < 4; ++i) {
    c.shift(static_cast<Eigen::Index>(i)) = evaluation.shift[i];
  }
  c.scale = evaluation.scale;
  return c;
}

}  // namespace drip
