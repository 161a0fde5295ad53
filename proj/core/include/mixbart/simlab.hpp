#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/dataset.hpp"
#include "mixbart/model.hpp"
#include "mixbart/rng.hpp"
#include "mixbart/spatial.hpp"
#include "mixbart/store.hpp"

namespace mixbart {

struct SimConfig {
  int lattice_rows = 5;
  int lattice_cols = 4;
  int days = 100;
  Eigen::VectorXd beta = (Eigen::VectorXd(4) << -2.0, -1.0, 1.0, 2.0).finished();
  double rho = 0.9;
  double tau2 = 0.3;
  double xi = 1.0;
  int exposures = 10;
  // Empty means default_correlation(exposures).
  Eigen::MatrixXd correlation;
  double population_min = 1e3;
  double population_max = 1e5;

  int regions() const { return lattice_rows * lattice_cols; }
  Eigen::MatrixXd resolved_correlation() const;
  // validate() adds the 5 exposures the benchmark surface reads.
  void validate() const;
  void validate_layout() const;
};

// A fixed choice: 0.4 among z1..z4, -0.2 between
// z5 and z1..z4, identity for the remaining exposures.
Eigen::MatrixXd default_correlation(int exposures);

// Rook adjacency of a rows x cols lattice, regions numbered row-major.
std::vector<std::pair<int, int>> lattice_edges(int rows, int cols);

// -10 + f0 / 5 with f0 = 10 sin(z1 z2) + 20 (z3 - 0.5)^2 + 10 z4 + 5 z5.
double friedman_surface(std::span<const double> z);

struct SimTruth {
  Eigen::VectorXd f;
  Eigen::VectorXd eta;
  Eigen::VectorXd nu;
  Eigen::VectorXd beta;
  double rho = 0.0;
  double tau2 = 0.0;
  double xi = 0.0;
};

struct SimReplicate {
  PanelDataset data;
  CarStructure car;
  SimTruth truth;
};

SimReplicate generate_replicate(const SimConfig& config, RngStream& rng);

// Generic version: any surface over the first columns of Z.
SimReplicate generate_replicate(const SimConfig& config,
                                const std::function<double(std::span<const double>)>& surface,
                                RngStream& rng);

struct ParameterScore {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool covered() const { return lo <= truth && truth <= hi; }
};

struct ReplicateScore {
  // Pointwise f(Z) over rows.
  double bias = 0.0;
  double coverage = 0.0;
  double rmse = 0.0;
  std::vector<ParameterScore> parameters;  // beta_1.., rho, tau2, xi, nu (averaged)
};

// Posterior draws of f(Z_row), draws x rows.
Eigen::MatrixXd f_draws(const PosteriorStore& store, const RowMatrix& z);
ReplicateScore score_replicate(const PosteriorStore& store, const SimReplicate& replicate);

struct Metric {
  double mean = 0.0;
  double mcse = 0.0;
};
// Mean and sd / sqrt(R) over replicate-level values.
Metric summarize_metric(std::span<const double> values);

struct SettingResult {
  int trees = 0;
  bool soft = true;
  bool sparse = true;
  std::vector<ReplicateScore> replicates;
};

struct StudyConfig {
  SimConfig sim;
  int replicates = 20;
  std::vector<int> trees = {25};
  std::vector<bool> soft = {true, false};
  std::vector<bool> sparse = {true};
  PriorConfig prior;  // schedule and hyperparameters shared by every setting
  std::uint64_t seed = 1;
  int threads = 1;
  void validate() const;
};

// Replicate data depend only on (seed, replicate), so settings are paired.
std::vector<SettingResult> run_study(const StudyConfig& config,
                                     const std::function<void(const std::string&)>& log = {});

void write_metric_table(const std::filesystem::path& path, const std::vector<SettingResult>& results);
void write_parameter_table(const std::filesystem::path& path,
                           const std::vector<SettingResult>& results);

}  // namespace mixbart
