#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mixbart/model.hpp"
#include "mixbart/simlab.hpp"

namespace mixbart {

// Flat `key = value` text in TOML syntax: strings in double quotes, bare
// numbers and booleans, one-line arrays in brackets, `#` comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, std::string_view source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  // Later assignments replace earlier ones; order of first assignment is kept.
  void set(const std::string& key, const std::string& raw);

  std::string get_string(const std::string& key, const std::string& fallback = {}) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<long> get_int_list(const std::string& key) const;
  std::vector<bool> get_bool_list(const std::string& key) const;

  // Throws ConfigError naming every key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  const std::string* find(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path adjacency;
  std::vector<std::string> confounders;
  std::vector<std::string> exposures;
  PriorConfig prior;
};

const std::set<std::string>& run_config_keys();
const std::set<std::string>& study_config_keys();

// Relative file paths are resolved against base_dir.
RunConfig make_run_config(const KeyValueConfig& config, const std::filesystem::path& base_dir = {});
// Resolved settings in a fixed order; hashed into the store metadata.
std::vector<std::pair<std::string, std::string>> echo_run_config(const RunConfig& config);

StudyConfig make_study_config(const KeyValueConfig& config);

}  // namespace mixbart
