#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/rng.hpp"

namespace mixbart {

inline constexpr int kRhoGridSize = 1000;

// Adjacency and the precomputed pieces of the proper CAR prior
// nu ~ N(0, tau2 (D - rho W)^-1). Immutable once built.
class CarStructure {
 public:
  // Edges are 0-based region index pairs. Duplicates and either orientation
  // are accepted; self-loops, isolated regions and disconnected graphs are
  // rejected with DataError.
  static CarStructure from_edges(int region_count, std::span<const std::pair<int, int>> edges);

  int region_count() const { return static_cast<int>(degree_.size()); }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  const Eigen::VectorXd& degree() const { return degree_; }
  // Eigenvalues of D^-1 W, ascending.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const std::vector<double>& rho_grid() const { return rho_grid_; }
  // sum_i log(1 - rho lambda_i) per grid cell; -inf where any factor <= 0.
  const std::vector<double>& log_det_terms() const { return log_det_terms_; }
  std::vector<std::pair<int, int>> edges() const;

  // D - rho W
  Eigen::MatrixXd precision(double rho) const;
  // nu' (D - rho W) nu
  double quadratic_form(const Eigen::VectorXd& nu, double rho) const;
  // nu' W nu
  double adjacency_form(const Eigen::VectorXd& nu) const;
  // Grid cell nearest to rho.
  std::size_t grid_index(double rho) const;

 private:
  Eigen::MatrixXd adjacency_;
  Eigen::VectorXd degree_;
  Eigen::VectorXd eigenvalues_;
  std::vector<double> rho_grid_;
  std::vector<double> log_det_terms_;
};

// Connected components of an adjacency matrix, each sorted.
std::vector<std::vector<int>> connected_components(const Eigen::MatrixXd& adjacency);

struct SpatialState {
  Eigen::VectorXd nu;
  double tau2 = 1.0;
  double rho = 0.0;
};

struct SpatialPrior {
  double tau2_shape = 1.0;
  double tau2_rate = 1.0;
};

// Full conditional of nu in canonical form: precision (D - rho W)/tau2 +
// diag(region_weight) and linear term region_weighted_residual, where
// region_weight[i] = sum omega over rows of region i and
// region_weighted_residual[i] = sum omega * r over the same rows.
struct GaussianCanonical {
  Eigen::MatrixXd precision;
  Eigen::VectorXd linear;
  Eigen::VectorXd mean() const;
};

GaussianCanonical nu_conditional(const CarStructure& car, double tau2, double rho,
                                 const Eigen::VectorXd& region_weight,
                                 const Eigen::VectorXd& region_weighted_residual);

Eigen::VectorXd update_nu(const CarStructure& car, double tau2, double rho,
                          const Eigen::VectorXd& region_weight,
                          const Eigen::VectorXd& region_weighted_residual, RngStream& rng);

// Shape and rate of the inverse-gamma full conditional of tau2.
std::pair<double, double> tau2_conditional(const Eigen::VectorXd& nu, const CarStructure& car,
                                           double rho, const SpatialPrior& prior);
double update_tau2(const Eigen::VectorXd& nu, const CarStructure& car, double rho,
                   const SpatialPrior& prior, RngStream& rng);

// Unnormalized log posterior over the rho grid:
// 0.5 * log_det_terms + rho / (2 tau2) * nu' W nu.
std::vector<double> rho_log_weights(const Eigen::VectorXd& nu, const CarStructure& car,
                                    double tau2);
double update_rho(const Eigen::VectorXd& nu, const CarStructure& car, double tau2,
                  RngStream& rng);

}  // namespace mixbart
