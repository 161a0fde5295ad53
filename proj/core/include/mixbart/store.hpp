#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/dataset.hpp"
#include "mixbart/softtree.hpp"

namespace mixbart {

struct StoreMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  long burn_in = 0;
  long samples = 0;
  long thin = 1;
  long iterations = 0;
  long rows = 0;
  std::vector<std::string> confounder_names;
  std::vector<std::string> exposure_names;
  std::vector<std::string> region_ids;
  // Resolved configuration, in a fixed key order.
  std::vector<std::pair<std::string, std::string>> config_echo;
  // Constant added to the tree sum; see PriorConfig::f_offset.
  double f_offset = 0.0;
  bool soft = true;
  bool sparse = true;
  int trees = 0;
  // Acceptance rates and similar run diagnostics.
  std::vector<std::pair<std::string, double>> diagnostics;
};

// Thinned posterior draws. Matrices are draw-major (one row per draw).
struct PosteriorStore {
  StoreMeta meta;
  RowMatrix beta;
  RowMatrix nu;
  RowMatrix split_probs;
  RowMatrix eta;  // may have zero columns when eta storage is off
  std::vector<double> tau2;
  std::vector<double> rho;
  std::vector<double> xi;
  std::vector<std::vector<SoftTree>> trees;

  std::size_t draws() const { return xi.size(); }

  // f(z) for draw m: offset plus the tree sum.
  double predict_f(std::size_t m, std::span<const double> z) const;
  // log Pop + X beta + f(Z) + nu for draw m, rebuilt from the components.
  Eigen::VectorXd reconstruct_eta(std::size_t m, const PanelDataset& data) const;

  // Directory layout: meta.json, <param>.bin (little-endian f64, draw-major)
  // and trees.jsonl (one line per draw).
  void write(const std::filesystem::path& dir) const;
  static PosteriorStore read(const std::filesystem::path& dir);
};

// M x n matrix of log p(y_ij | xi^(m), eta_ij^(m)) with eta rebuilt from
// the stored components.
Eigen::MatrixXd log_likelihood_matrix(const PosteriorStore& store, const PanelDataset& data);

// Throws DataError when the dataset's columns or regions disagree with the
// store metadata.
void check_store_matches(const PosteriorStore& store, const PanelDataset& data);

// Hex SHA-256 of a string or a file's bytes.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mixbart
