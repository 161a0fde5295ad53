#include "mixbart/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "mixbart/error.hpp"

namespace mixbart {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Devroye / Polson-Scott-Windle PG(1, z) sampler pieces. The truncation point
// 0.64 splits the J*(1, z) density into a left inverse-Gaussian and a right
// exponential proposal.
constexpr double kTrunc = 0.64;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(normal_cdf(x));
  // Mills-ratio tail.
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * kPi);
}

double series_coefficient(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double log_a = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                       2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(log_a);
}

// Probability of using the right (exponential) proposal.
double right_mass(double z) {
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / kTrunc) * (kTrunc * z - 1.0);
  const double a = -std::sqrt(1.0 / kTrunc) * (kTrunc * z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - z + log_normal_cdf(b);
  const double xa = x0 + z + log_normal_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

double draw_exponential(RngStream& rng) { return -std::log(rng.uniform_open()); }

// Inverse Gaussian IG(1/z, 1) truncated to (0, kTrunc).
double draw_truncated_inverse_gaussian(double z, RngStream& rng) {
  double x = kTrunc + 1.0;
  if (1.0 / kTrunc > z) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = draw_exponential(rng);
      double e2 = draw_exponential(rng);
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = draw_exponential(rng);
        e2 = draw_exponential(rng);
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > kTrunc) {
      double y = draw_standard_normal(rng);
      y *= y;
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

bool is_small_integer(double b) {
  return b <= 4.0 && b == std::floor(b);
}

}  // namespace

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> values) {
  double top = -kInf;
  for (double v : values) top = std::max(top, v);
  if (top == -kInf) return -kInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

double polya_gamma_mean(double b, double c) {
  c = std::fabs(c);
  if (c < 1e-4) return 0.25 * b * (1.0 - c * c / 12.0);
  return b / (2.0 * c) * std::tanh(0.5 * c);
}

double polya_gamma_variance(double b, double c) {
  c = std::fabs(c);
  if (c < 1e-3) return b / 24.0 * (1.0 - c * c / 5.0);
  // (sinh c - c) sech^2(c/2) rewritten as 2 tanh(c/2) - c sech^2(c/2).
  const double ch = std::cosh(0.5 * c);
  return b / (4.0 * c * c * c) * (2.0 * std::tanh(0.5 * c) - c / (ch * ch));
}

namespace detail {

double draw_polya_gamma_devroye(double c, RngStream& rng) {
  const double z = 0.5 * std::fabs(c);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double p_right = right_mass(z);
  while (true) {
    double x;
    if (rng.uniform() < p_right) {
      x = kTrunc + draw_exponential(rng) / fz;
    } else {
      x = draw_truncated_inverse_gaussian(z, rng);
    }
    double s = series_coefficient(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_coefficient(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_coefficient(n, x);
        if (y > s) break;
      }
    }
  }
}

double draw_polya_gamma_series(double b, double c, RngStream& rng, int terms) {
  const double shift = c * c / (4.0 * kPi * kPi);
  const double scale = 1.0 / (2.0 * kPi * kPi);
  std::gamma_distribution<double> gamma(b, 1.0);
  double total = 0.0;
  double kept_mean = 0.0;
  double kept_var = 0.0;
  for (int k = 1; k <= terms; ++k) {
    const double d = (k - 0.5) * (k - 0.5) + shift;
    total += gamma(rng) / d;
    kept_mean += b / d;
    kept_var += b / (d * d);
  }
  // The dropped terms are a sum of many small independent gammas; replace
  // them by one gamma with the same mean and variance.
  const double tail_mean = polya_gamma_mean(b, c) - scale * kept_mean;
  const double tail_var = polya_gamma_variance(b, c) - scale * scale * kept_var;
  double tail = std::max(0.0, tail_mean);
  if (tail_mean > 0.0 && tail_var > 0.0) {
    std::gamma_distribution<double> rest(tail_mean * tail_mean / tail_var, tail_var / tail_mean);
    tail = rest(rng);
  }
  return scale * total + tail;
}

}  // namespace detail

double draw_polya_gamma(PolyaGammaParams params, RngStream& rng) {
  if (!(params.shape > 0.0) || !std::isfinite(params.shape)) {
    throw DomainError("Polya-gamma shape must be positive and finite, got " +
                      std::to_string(params.shape));
  }
  if (is_small_integer(params.shape)) {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(params.shape); ++i) {
      total += detail::draw_polya_gamma_devroye(params.tilt, rng);
    }
    return total;
  }
  return detail::draw_polya_gamma_series(params.shape, params.tilt, rng, kPolyaGammaSeriesTerms);
}

std::int64_t draw_crt(CrtParams params, RngStream& rng) {
  std::int64_t tables = 0;
  for (std::int64_t m = 1; m <= params.count; ++m) {
    const double p = params.concentration / (params.concentration + static_cast<double>(m - 1));
    if (rng.uniform() < p) ++tables;
  }
  return tables;
}

double draw_standard_normal(RngStream& rng) {
  // Marsaglia polar method; the second variate is discarded so that the
  // stream position depends only on the number of calls.
  while (true) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double draw_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw DomainError("gamma shape and rate must be positive");
  }
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return gamma(rng);
}

double draw_inverse_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw DomainError("inverse-gamma shape and rate must be positive");
  }
  std::gamma_distribution<double> gamma(shape, 1.0);
  return rate / gamma(rng);
}

double draw_log_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0)) throw DomainError("gamma shape must be positive");
  if (shape >= 1.0) {
    std::gamma_distribution<double> gamma(shape, 1.0);
    return std::log(gamma(rng));
  }
  // G(a) = G(a + 1) * U^(1/a), kept on the log scale.
  std::gamma_distribution<double> gamma(shape + 1.0, 1.0);
  return std::log(gamma(rng)) + std::log(rng.uniform_open()) / shape;
}

std::vector<double> draw_log_dirichlet(std::span<const double> shape, RngStream& rng) {
  std::vector<double> out(shape.size());
  for (std::size_t k = 0; k < shape.size(); ++k) out[k] = draw_log_gamma(shape[k], rng);
  const double norm = log_sum_exp(out);
  for (double& v : out) v -= norm;
  return out;
}

std::size_t draw_discrete_log(std::span<const double> log_weights, RngStream& rng) {
  const double norm = log_sum_exp(log_weights);
  if (norm == -kInf || std::isnan(norm)) {
    throw DomainError("discrete draw: all log-weights are -inf");
  }
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    if (log_weights[i] == -kInf) continue;
    cumulative += std::exp(log_weights[i] - norm);
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

std::size_t draw_discrete(std::span<const double> weights, RngStream& rng) {
  std::vector<double> logs(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw DomainError("discrete draw: negative weight");
    logs[i] = weights[i] > 0.0 ? std::log(weights[i]) : -kInf;
  }
  return draw_discrete_log(logs, rng);
}

std::int64_t draw_negative_binomial(double xi, double eta, RngStream& rng) {
  // theta ~ Gamma(shape xi, scale e^eta), y ~ Poisson(theta).
  std::gamma_distribution<double> gamma(xi, std::exp(eta));
  const double theta = gamma(rng);
  if (theta <= 0.0) return 0;
  std::poisson_distribution<std::int64_t> poisson(theta);
  return poisson(rng);
}

Eigen::VectorXd draw_mvn_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision,
                                   RngStream& rng, std::string_view name) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("matrix '" + std::string(name) + "' is not positive definite");
  }
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = draw_standard_normal(rng);
  // P = L L^T, x = mean + L^-T z has covariance P^-1.
  return mean + llt.matrixU().solve(z);
}

CanonicalDraw draw_mvn_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                 RngStream& rng, std::string_view name) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("matrix '" + std::string(name) + "' is not positive definite");
  }
  CanonicalDraw out;
  out.mean = llt.solve(linear);
  Eigen::VectorXd z(linear.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = draw_standard_normal(rng);
  out.value = out.mean + llt.matrixU().solve(z);
  return out;
}

double nb_log_density(std::int64_t y, double xi, double eta) {
  const double yd = static_cast<double>(y);
  // log p = -softplus(-eta), log(1 - p) = -softplus(eta)
  return std::lgamma(yd + xi) - std::lgamma(yd + 1.0) - std::lgamma(xi) - xi * softplus(eta) -
         yd * softplus(-eta);
}

}  // namespace mixbart
