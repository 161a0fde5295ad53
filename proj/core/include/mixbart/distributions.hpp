#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/rng.hpp"

namespace mixbart {

struct PolyaGammaParams {
  double shape;  // b > 0, y + xi in the sampler
  double tilt;   // c, the current linear predictor
};

struct CrtParams {
  double concentration;  // xi > 0
  std::int64_t count;    // y >= 0
};

inline constexpr int kPolyaGammaSeriesTerms = 24;

// PG(b, c). Integral b <= 4 uses b exact Devroye-type draws of PG(1, c);
// everything else uses the truncated gamma series with the omitted tail
// drawn from a moment-matched gamma, so mean and variance are exact. Throws DomainError for b <= 0.
double draw_polya_gamma(PolyaGammaParams params, RngStream& rng);

double polya_gamma_mean(double b, double c);
double polya_gamma_variance(double b, double c);

namespace detail {
// Exact PG(1, c).
double draw_polya_gamma_devroye(double c, RngStream& rng);
// sum_{k<=terms} g_k / (2 pi^2 ((k - 1/2)^2 + c^2 / (4 pi^2))), g_k ~ Gamma(b, 1),
// plus one gamma draw matching the mean and variance of the omitted terms.
double draw_polya_gamma_series(double b, double c, RngStream& rng, int terms);
}  // namespace detail

// Chinese restaurant table count: sum of Bernoulli(xi / (xi + m - 1)), m = 1..y.
std::int64_t draw_crt(CrtParams params, RngStream& rng);

double draw_standard_normal(RngStream& rng);
double draw_gamma(double shape, double rate, RngStream& rng);
double draw_inverse_gamma(double shape, double rate, RngStream& rng);
// log of a Gamma(shape, 1) variate; accurate for shapes far below 1.
double draw_log_gamma(double shape, RngStream& rng);
// log of a Dirichlet(shape) variate, normalized on the log scale.
std::vector<double> draw_log_dirichlet(std::span<const double> shape, RngStream& rng);

// Index drawn with probability proportional to exp(log_weights[i]).
// -inf entries have zero mass; throws DomainError if every entry is -inf.
std::size_t draw_discrete_log(std::span<const double> log_weights, RngStream& rng);
std::size_t draw_discrete(std::span<const double> weights, RngStream& rng);

// Negative binomial count with E(y) = xi * exp(eta) via its Poisson-gamma
// mixture representation.
std::int64_t draw_negative_binomial(double xi, double eta, RngStream& rng);

// Draw from N(mean, precision^-1) through a Cholesky factor of the precision.
// `name` is used in the NumericalError raised for a non-PD matrix.
Eigen::VectorXd draw_mvn_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision,
                                   RngStream& rng, std::string_view name = "precision");

// Canonical form: N(P^-1 h, P^-1). Returns both the mean and the draw so
// callers and tests can see the deterministic part.
struct CanonicalDraw {
  Eigen::VectorXd mean;
  Eigen::VectorXd value;
};
CanonicalDraw draw_mvn_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                 RngStream& rng, std::string_view name = "precision");

// log p(y | xi, eta) for the negative binomial with p = logistic(eta).
double nb_log_density(std::int64_t y, double xi, double eta);

// log(1 + e^x) without overflow.
double softplus(double x);
double log_sum_exp(std::span<const double> values);
// 1 / (1 + e^-x)
double logistic(double x);

}  // namespace mixbart
