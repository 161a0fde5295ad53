#include "mixbart/config.hpp"

#include <fstream>
#include <sstream>

#include "mixbart/csv.hpp"
#include "mixbart/error.hpp"

namespace mixbart {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Strips a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(std::string_view s, const std::string& key) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return std::string(s.substr(1, s.size() - 2));
  if (!s.empty() && s.front() == '"') throw ConfigError("unterminated string for key '" + key + "'");
  return std::string(s);
}

std::vector<std::string> split_array(std::string_view raw, const std::string& key) {
  raw = trim(raw);
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    // A scalar is a one-element list.
    return {unquote(raw, key)};
  }
  raw = trim(raw.substr(1, raw.size() - 2));
  std::vector<std::string> out;
  if (raw.empty()) return out;
  std::string current;
  bool quoted = false;
  for (char c : raw) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(unquote(current, key));
      current.clear();
    } else {
      current += c;
    }
  }
  if (quoted) throw ConfigError("unterminated string in array '" + key + "'");
  out.push_back(unquote(current, key));
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return parse_double(v, key);
  } catch (const DataError&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

long to_long(const std::string& v, const std::string& key) {
  try {
    return static_cast<long>(parse_int(v, key));
  } catch (const DataError&) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string list_of(const std::vector<std::string>& items, bool quoted) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += quoted ? quote(items[i]) : items[i];
  }
  return out + "]";
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

void apply_prior_keys(const KeyValueConfig& c, PriorConfig& p, bool grid_keys) {
  p.schedule.burn_in = c.get_int("burn_in", p.schedule.burn_in);
  p.schedule.samples = c.get_int("samples", p.schedule.samples);
  p.schedule.thin = c.get_int("thin", p.schedule.thin);
  const long seed = c.get_int("seed", static_cast<long>(p.seed));
  if (seed < 0) throw ConfigError("seed must be non-negative");
  p.seed = static_cast<std::uint64_t>(seed);
  if (grid_keys) {
    p.bart.trees = static_cast<int>(c.get_int("trees", p.bart.trees));
    p.bart.soft = c.get_bool("soft", p.bart.soft);
    p.bart.sparse = c.get_bool("sparse", p.bart.sparse);
  }
  p.bart.tree_prior.gamma = c.get_double("split_gamma", p.bart.tree_prior.gamma);
  p.bart.tree_prior.delta = c.get_double("split_delta", p.bart.tree_prior.delta);
  p.bart.leaf_k = c.get_double("leaf_k", p.bart.leaf_k);
  p.bart.bandwidth_prior_mean = c.get_double("bandwidth_prior_mean", p.bart.bandwidth_prior_mean);
  p.bart.initial_bandwidth = c.get_double("initial_bandwidth", p.bart.initial_bandwidth);
  p.bart.update_bandwidth = c.get_bool("update_bandwidth", p.bart.update_bandwidth);
  p.bart.dirichlet_concentration = c.get_double("dirichlet_concentration", p.bart.dirichlet_concentration);
  p.bart.update_concentration = c.get_bool("update_concentration", p.bart.update_concentration);
  if (c.has("beta_prior_mean")) {
    const auto values = c.get_double_list("beta_prior_mean");
    p.beta_mean = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  p.beta_variance = c.get_double("beta_prior_variance", p.beta_variance);
  p.spatial.tau2_shape = c.get_double("tau2_shape", p.spatial.tau2_shape);
  p.spatial.tau2_rate = c.get_double("tau2_rate", p.spatial.tau2_rate);
  p.xi_shape = c.get_double("xi_shape", p.xi_shape);
  p.xi_rate = c.get_double("xi_rate", p.xi_rate);
  if (c.has("pin_rho")) p.pin_rho = c.get_double("pin_rho", 0.0);
  if (c.has("f_offset")) p.f_offset = c.get_double("f_offset", 0.0);
  p.store_eta = c.get_bool("store_eta", p.store_eta);
  p.threads = static_cast<int>(c.get_int("threads", p.threads));
}

const std::set<std::string> kPriorKeys = {
    "burn_in", "samples", "thin", "seed", "trees", "soft", "sparse", "split_gamma", "split_delta",
    "leaf_k", "bandwidth_prior_mean", "initial_bandwidth", "update_bandwidth",
    "dirichlet_concentration", "update_concentration", "beta_prior_mean", "beta_prior_variance",
    "tau2_shape", "tau2_rate", "xi_shape", "xi_rate", "pin_rho", "f_offset", "store_eta", "threads"};

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, std::string_view source) {
  KeyValueConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(strip_comment(line));
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty() || value.empty()) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": empty key or value");
    }
    config.set(key, value);
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse(in, path.string());
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

bool KeyValueConfig::has(const std::string& key) const { return find(key) != nullptr; }

void KeyValueConfig::set(const std::string& key, const std::string& raw) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = raw;
      return;
    }
  }
  entries_.emplace_back(key, raw);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? unquote(*v, key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  return v ? to_double(unquote(*v, key), key) : fallback;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  const auto* v = find(key);
  return v ? to_long(unquote(*v, key), key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  return v ? parse_bool(unquote(*v, key), key) : fallback;
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  const auto* v = find(key);
  return v ? split_array(*v, key) : std::vector<std::string>{};
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) out.push_back(to_double(s, key));
  return out;
}

std::vector<long> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<long> out;
  for (const auto& s : get_list(key)) out.push_back(to_long(s, key));
  return out;
}

std::vector<bool> KeyValueConfig::get_bool_list(const std::string& key) const {
  std::vector<bool> out;
  for (const auto& s : get_list(key)) out.push_back(parse_bool(s, key));
  return out;
}

void KeyValueConfig::require_known(const std::set<std::string>& allowed) const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (!allowed.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

const std::set<std::string>& run_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = kPriorKeys;
    k.insert({"data", "adjacency", "confounders", "exposures"});
    return k;
  }();
  return keys;
}

const std::set<std::string>& study_config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = kPriorKeys;
    k.insert({"replicates", "days", "lattice_rows", "lattice_cols", "exposures", "true_beta",
              "true_rho", "true_tau2", "true_xi", "correlation", "population_min",
              "population_max"});
    return k;
  }();
  return keys;
}

RunConfig make_run_config(const KeyValueConfig& config, const std::filesystem::path& base_dir) {
  config.require_known(run_config_keys());
  RunConfig run;
  auto resolve = [&base_dir](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  run.data = resolve(config.get_string("data"));
  run.adjacency = resolve(config.get_string("adjacency"));
  run.confounders = config.get_list("confounders");
  run.exposures = config.get_list("exposures");
  apply_prior_keys(config, run.prior, true);
  run.prior.bart.validate();
  return run;
}

std::vector<std::pair<std::string, std::string>> echo_run_config(const RunConfig& c) {
  const PriorConfig& p = c.prior;
  std::vector<std::string> beta_mean;
  for (Eigen::Index i = 0; i < p.beta_mean.size(); ++i) beta_mean.push_back(format_double(p.beta_mean[i]));
  std::vector<std::pair<std::string, std::string>> out = {
      {"data", c.data.filename().string()},
      {"adjacency", c.adjacency.filename().string()},
      {"confounders", list_of(c.confounders, true)},
      {"exposures", list_of(c.exposures, true)},
      {"burn_in", std::to_string(p.schedule.burn_in)},
      {"samples", std::to_string(p.schedule.samples)},
      {"thin", std::to_string(p.schedule.thin)},
      {"seed", std::to_string(p.seed)},
      {"trees", std::to_string(p.bart.trees)},
      {"soft", bool_text(p.bart.soft)},
      {"sparse", bool_text(p.bart.sparse)},
      {"split_gamma", format_double(p.bart.tree_prior.gamma)},
      {"split_delta", format_double(p.bart.tree_prior.delta)},
      {"leaf_k", format_double(p.bart.leaf_k)},
      {"bandwidth_prior_mean", format_double(p.bart.bandwidth_prior_mean)},
      {"initial_bandwidth", format_double(p.bart.initial_bandwidth)},
      {"update_bandwidth", bool_text(p.bart.update_bandwidth)},
      {"dirichlet_concentration", format_double(p.bart.dirichlet_concentration)},
      {"update_concentration", bool_text(p.bart.update_concentration)},
      {"beta_prior_mean", list_of(beta_mean, false)},
      {"beta_prior_variance", format_double(p.beta_variance)},
      {"tau2_shape", format_double(p.spatial.tau2_shape)},
      {"tau2_rate", format_double(p.spatial.tau2_rate)},
      {"xi_shape", format_double(p.xi_shape)},
      {"xi_rate", format_double(p.xi_rate)},
      {"pin_rho", p.pin_rho ? format_double(*p.pin_rho) : "none"},
      {"f_offset", p.f_offset ? format_double(*p.f_offset) : "auto"},
      {"store_eta", bool_text(p.store_eta)},
  };
  return out;
}

StudyConfig make_study_config(const KeyValueConfig& config) {
  config.require_known(study_config_keys());
  StudyConfig study;
  study.prior.schedule = {2000, 500, 2};
  apply_prior_keys(config, study.prior, false);
  study.seed = study.prior.seed;
  study.threads = std::max(1, study.prior.threads);
  study.replicates = static_cast<int>(config.get_int("replicates", study.replicates));
  SimConfig& sim = study.sim;
  sim.days = static_cast<int>(config.get_int("days", sim.days));
  sim.lattice_rows = static_cast<int>(config.get_int("lattice_rows", sim.lattice_rows));
  sim.lattice_cols = static_cast<int>(config.get_int("lattice_cols", sim.lattice_cols));
  sim.exposures = static_cast<int>(config.get_int("exposures", sim.exposures));
  if (config.has("true_beta")) {
    const auto b = config.get_double_list("true_beta");
    sim.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  sim.rho = config.get_double("true_rho", sim.rho);
  sim.tau2 = config.get_double("true_tau2", sim.tau2);
  sim.xi = config.get_double("true_xi", sim.xi);
  sim.population_min = config.get_double("population_min", sim.population_min);
  sim.population_max = config.get_double("population_max", sim.population_max);
  if (config.has("correlation")) {
    // Row-major flattened q x q matrix.
    const auto values = config.get_double_list("correlation");
    const auto q = static_cast<Eigen::Index>(sim.exposures);
    if (static_cast<Eigen::Index>(values.size()) != q * q) {
      throw ConfigError("correlation must list " + std::to_string(q * q) + " values");
    }
    sim.correlation = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), q, q);
  }
  // The grid keys accept either a scalar or a list.
  if (config.has("trees")) {
    study.trees.clear();
    for (long t : config.get_int_list("trees")) study.trees.push_back(static_cast<int>(t));
  }
  if (config.has("soft")) study.soft = config.get_bool_list("soft");
  if (config.has("sparse")) study.sparse = config.get_bool_list("sparse");
  study.validate();
  return study;
}

}  // namespace mixbart
