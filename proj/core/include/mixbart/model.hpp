#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/dataset.hpp"
#include "mixbart/ensemble.hpp"
#include "mixbart/rng.hpp"
#include "mixbart/spatial.hpp"
#include "mixbart/store.hpp"

namespace mixbart {

struct Schedule {
  long burn_in = 5000;
  long samples = 1000;
  long thin = 10;
  long total() const { return burn_in + samples * thin; }
};

struct PriorConfig {
  // beta ~ N(b, Sigma_beta). Empty b means zeros; empty covariance means
  // beta_variance * I.
  Eigen::VectorXd beta_mean;
  Eigen::MatrixXd beta_covariance;
  double beta_variance = 100.0;
  SpatialPrior spatial;
  double xi_shape = 1.0;
  double xi_rate = 0.1;
  BartConfig bart;
  Schedule schedule;
  std::uint64_t seed = 1;
  // Fix rho at this value and skip its update.
  std::optional<double> pin_rho;
  // Constant added to the tree sum. Defaults to log((sum y + 0.5) / sum Pop)
  // - log(initial_xi), the log marginal rate at the initial dispersion.
  std::optional<double> f_offset;
  double initial_xi = 1.0;
  int threads = 1;
  bool store_eta = true;

  Eigen::VectorXd resolved_beta_mean(int p) const;
  Eigen::MatrixXd resolved_beta_covariance(int p) const;
  void validate(int p) const;
};

struct ChainState {
  Eigen::VectorXd beta;
  SpatialState spatial;
  double xi = 1.0;
  double f_offset = 0.0;
  Eigen::VectorXd eta;
};

// Polya-gamma weights and kappa = (y - xi) / 2 for every row. The working
// response y* = kappa / omega is formed only on request.
struct PgDraw {
  Eigen::VectorXd omega;
  Eigen::VectorXd kappa;
  Eigen::VectorXd working_response() const;
};

inline constexpr double kOmegaFloor = 1e-300;

// One chain of the negative-binomial soft-BART model with a proper CAR
// random intercept.
class Sampler {
 public:
  Sampler(const PanelDataset& data, const CarStructure& car, PriorConfig prior);

  // PG -> beta -> nu -> tau2 -> rho -> trees -> xi, with eta rebuilt after
  // every block.
  void iterate();

  void pg_augment();
  void update_beta();
  void update_nu();
  void update_tau2();
  void update_rho();
  void update_trees();
  void update_xi();

  // Full conditionals at the current state (and current PG draw), exposed
  // for exact checks.
  GaussianCanonical beta_conditional() const;
  GaussianCanonical nu_conditional() const;
  // (shape, rate) given a total CRT count.
  std::pair<double, double> xi_conditional(double crt_total) const;

  const ChainState& state() const { return state_; }
  ChainState& mutable_state() { return state_; }
  const Ensemble& ensemble() const { return ensemble_; }
  Ensemble& mutable_ensemble() { return ensemble_; }
  const PgDraw& pg() const { return pg_; }
  void set_pg(PgDraw pg) { pg_ = std::move(pg); }
  const PriorConfig& prior() const { return prior_; }
  long iteration() const { return iteration_; }

  // Records the name of every block as it runs.
  void set_trace(std::function<void(std::string_view)> trace) { trace_ = std::move(trace); }

  // Rebuild eta from its components; throws NumericalError on NaN.
  void recompute_eta();
  // Current f(Z) per row (offset included).
  Eigen::VectorXd f_values() const;

 private:
  RngStream block_stream(int tag) const;
  RngStream row_stream(int tag, std::size_t row) const;
  void mark(std::string_view block);

  const PanelDataset& data_;
  const CarStructure& car_;
  PriorConfig prior_;
  Eigen::VectorXd log_pop_;
  Eigen::VectorXd beta_mean_;
  Eigen::MatrixXd beta_prior_precision_;
  ChainState state_;
  Ensemble ensemble_;
  PgDraw pg_;
  Eigen::VectorXd xb_;
  long iteration_ = 0;
  RngStream rng_;
  std::function<void(std::string_view)> trace_;
};

// Default f offset for a dataset; see PriorConfig::f_offset.
double default_f_offset(const PanelDataset& data, double initial_xi);

struct RunOptions {
  std::function<void(long iteration, long total)> progress;
  std::vector<std::pair<std::string, std::string>> config_echo;
};

PosteriorStore run_chain(const PanelDataset& data, const CarStructure& car,
                         const PriorConfig& prior, const RunOptions& options = {});

}  // namespace mixbart
