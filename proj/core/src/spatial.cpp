#include "mixbart/spatial.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"

namespace mixbart {

namespace {

std::string describe_components(const std::vector<std::vector<int>>& components) {
  std::string out;
  for (std::size_t c = 0; c < components.size(); ++c) {
    out += c == 0 ? "{" : ", {";
    for (std::size_t i = 0; i < components[c].size(); ++i) {
      if (i > 0) out += ",";
      out += std::to_string(components[c][i]);
    }
    out += "}";
  }
  return out;
}

}  // namespace

std::vector<std::vector<int>> connected_components(const Eigen::MatrixXd& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  std::vector<int> label(n, -1);
  std::vector<std::vector<int>> components;
  for (int start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    std::vector<int> members;
    std::vector<int> stack = {start};
    label[start] = static_cast<int>(components.size());
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      members.push_back(v);
      for (int u = 0; u < n; ++u) {
        if (adjacency(v, u) != 0.0 && label[u] < 0) {
          label[u] = label[start];
          stack.push_back(u);
        }
      }
    }
    std::sort(members.begin(), members.end());
    components.push_back(std::move(members));
  }
  return components;
}

CarStructure CarStructure::from_edges(int region_count,
                                      std::span<const std::pair<int, int>> edges) {
  if (region_count < 1) throw DataError("CAR structure needs at least one region");
  CarStructure car;
  car.adjacency_ = Eigen::MatrixXd::Zero(region_count, region_count);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= region_count || b >= region_count) {
      throw DataError("adjacency edge (" + std::to_string(a) + "," + std::to_string(b) +
                      ") references an unknown region");
    }
    if (a == b) throw DataError("adjacency has a self-loop at region " + std::to_string(a));
    car.adjacency_(a, b) = 1.0;
    car.adjacency_(b, a) = 1.0;
  }
  car.degree_ = car.adjacency_.rowwise().sum();
  for (int i = 0; i < region_count; ++i) {
    if (car.degree_[i] == 0.0) {
      throw DataError("region " + std::to_string(i) + " has no neighbours; D is singular");
    }
  }
  const auto components = connected_components(car.adjacency_);
  if (components.size() > 1) {
    throw DataError("adjacency graph is disconnected; components: " +
                    describe_components(components));
  }

  // D^-1 W is similar to the symmetric D^-1/2 W D^-1/2.
  const Eigen::VectorXd inv_sqrt = car.degree_.array().rsqrt();
  const Eigen::MatrixXd sym = inv_sqrt.asDiagonal() * car.adjacency_ * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigen decomposition of D^-1 W failed");
  car.eigenvalues_ = solver.eigenvalues();

  car.rho_grid_.resize(kRhoGridSize);
  car.log_det_terms_.resize(kRhoGridSize);
  for (int g = 0; g < kRhoGridSize; ++g) {
    const double rho = static_cast<double>(g) / (kRhoGridSize - 1);
    car.rho_grid_[g] = rho;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < car.eigenvalues_.size(); ++i) {
      const double factor = 1.0 - rho * car.eigenvalues_[i];
      if (factor <= 1e-10) {
        acc = -std::numeric_limits<double>::infinity();
        break;
      }
      acc += std::log(factor);
    }
    car.log_det_terms_[g] = acc;
  }
  return car;
}

std::vector<std::pair<int, int>> CarStructure::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < region_count(); ++i) {
    for (int j = i + 1; j < region_count(); ++j) {
      if (adjacency_(i, j) != 0.0) out.emplace_back(i, j);
    }
  }
  return out;
}

Eigen::MatrixXd CarStructure::precision(double rho) const {
  Eigen::MatrixXd out = -rho * adjacency_;
  out.diagonal() += degree_;
  return out;
}

double CarStructure::quadratic_form(const Eigen::VectorXd& nu, double rho) const {
  return nu.dot(degree_.cwiseProduct(nu)) - rho * adjacency_form(nu);
}

double CarStructure::adjacency_form(const Eigen::VectorXd& nu) const {
  return nu.dot(adjacency_ * nu);
}

std::size_t CarStructure::grid_index(double rho) const {
  const double scaled = std::round(rho * (kRhoGridSize - 1));
  if (scaled <= 0.0) return 0;
  if (scaled >= kRhoGridSize - 1) return kRhoGridSize - 1;
  return static_cast<std::size_t>(scaled);
}

Eigen::VectorXd GaussianCanonical::mean() const {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("canonical precision is not positive definite");
  return llt.solve(linear);
}

GaussianCanonical nu_conditional(const CarStructure& car, double tau2, double rho,
                                 const Eigen::VectorXd& region_weight,
                                 const Eigen::VectorXd& region_weighted_residual) {
  GaussianCanonical out;
  out.precision = car.precision(rho) / tau2;
  out.precision.diagonal() += region_weight;
  out.linear = region_weighted_residual;
  return out;
}

Eigen::VectorXd update_nu(const CarStructure& car, double tau2, double rho,
                          const Eigen::VectorXd& region_weight,
                          const Eigen::VectorXd& region_weighted_residual, RngStream& rng) {
  const auto conditional = nu_conditional(car, tau2, rho, region_weight, region_weighted_residual);
  return draw_mvn_canonical(conditional.precision, conditional.linear, rng, "nu posterior precision")
      .value;
}

std::pair<double, double> tau2_conditional(const Eigen::VectorXd& nu, const CarStructure& car,
                                           double rho, const SpatialPrior& prior) {
  const double shape = prior.tau2_shape + 0.5 * car.region_count();
  const double rate = prior.tau2_rate + 0.5 * car.quadratic_form(nu, rho);
  return {shape, rate};
}

double update_tau2(const Eigen::VectorXd& nu, const CarStructure& car, double rho,
                   const SpatialPrior& prior, RngStream& rng) {
  const auto [shape, rate] = tau2_conditional(nu, car, rho, prior);
  return draw_inverse_gamma(shape, rate, rng);
}

std::vector<double> rho_log_weights(const Eigen::VectorXd& nu, const CarStructure& car,
                                    double tau2) {
  const double cross = car.adjacency_form(nu) / (2.0 * tau2);
  const auto& grid = car.rho_grid();
  const auto& logdet = car.log_det_terms();
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out[g] = std::isinf(logdet[g]) ? logdet[g] : 0.5 * logdet[g] + grid[g] * cross;
  }
  return out;
}

double update_rho(const Eigen::VectorXd& nu, const CarStructure& car, double tau2,
                  RngStream& rng) {
  const auto weights = rho_log_weights(nu, car, tau2);
  return car.rho_grid()[draw_discrete_log(weights, rng)];
}

}  // namespace mixbart
