#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"
#include "oracles.hpp"

using namespace mixbart;

namespace {

std::vector<double> pg_sample(double b, double c, int n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = draw_polya_gamma({b, c}, rng);
  return v;
}

}  // namespace

TEST(PolyaGamma, UnitShapeZeroTiltMean) {
  const auto v = pg_sample(1.0, 0.0, 1000000, 11);
  EXPECT_NEAR(oracle::mean(v), 0.25, 0.002);
}

TEST(PolyaGamma, IntegerShapeMean) {
  const auto v = pg_sample(2.0, 3.0, 200000, 12);
  EXPECT_NEAR(oracle::mean(v), 2.0 / 6.0 * std::tanh(1.5), 0.003);
  // (2/6) tanh(1.5) = 0.301716...; the often quoted 0.30162 is a rounding slip
  // well inside the 0.003 tolerance.
  EXPECT_NEAR(2.0 / 6.0 * std::tanh(1.5), 0.301716, 1e-6);
}

TEST(PolyaGamma, SymmetricInTilt) {
  const auto a = pg_sample(1.7, -2.0, 100000, 13);
  const auto b = pg_sample(1.7, 2.0, 100000, 14);
  const double se = std::sqrt((oracle::variance(a) + oracle::variance(b)) / 100000);
  EXPECT_NEAR(oracle::mean(a), oracle::mean(b), 5 * se);
}

TEST(PolyaGamma, MomentFunctionsMatchClosedForm) {
  for (double b : {0.5, 1.0, 3.3, 40.0}) {
    for (double c : {-4.0, -0.7, 0.0, 0.3, 2.5}) {
      EXPECT_NEAR(polya_gamma_mean(b, c), oracle::pg_mean(b, c), 1e-12 * b);
      EXPECT_NEAR(polya_gamma_variance(b, c), oracle::pg_variance(b, c), 1e-9 * b);
    }
    // The closed form cancels badly near c = 0; compare with the c = 0 limits
    // and the leading small-c term instead.
    const double c = 1e-4;
    EXPECT_NEAR(polya_gamma_mean(b, c), b / 4 * (1 - c * c / 12), 1e-14 * b);
    EXPECT_NEAR(polya_gamma_variance(b, c), b / 24 * (1 - c * c / 5), 1e-12 * b);
  }
}

// Both sampler paths against the defining series, drawn with an unrelated
// generator.
TEST(PolyaGamma, MatchesSeriesOracleInDistribution) {
  std::mt19937_64 gen(2024);
  for (auto [b, c] : {std::pair{1.0, 1.5}, std::pair{3.0, -0.5}, std::pair{1.7, 2.0},
                      std::pair{12.4, 0.8}}) {
    const int n = 20000;
    std::vector<double> ref(n);
    for (auto& x : ref) x = oracle::polya_gamma_series(b, c, gen);
    const auto got = pg_sample(b, c, n, 99);
    EXPECT_GT(oracle::ks_two_sample_pvalue(got, ref), 0.001) << "b=" << b << " c=" << c;
  }
}

TEST(PolyaGamma, SeriesPathMomentsOnFractionalShapes) {
  for (auto [b, c] : {std::pair{0.3, 0.0}, std::pair{2.6, 4.0}, std::pair{7.5, -12.0}, std::pair{55.2, 0.4}}) {
    const auto v = pg_sample(b, c, 100000, 31);
    EXPECT_NEAR(oracle::mean(v), oracle::pg_mean(b, c), 5 * std::sqrt(oracle::variance(v) / v.size())) << b;
    EXPECT_NEAR(oracle::variance(v), oracle::pg_variance(b, c), 5 * oracle::variance_se(v)) << b;
  }
}

TEST(PolyaGamma, DevroyeAndSeriesAgree) {
  RngStream r1(1, 1), r2(2, 2);
  const int n = 100000;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = detail::draw_polya_gamma_devroye(0.9, r1);
    b[i] = detail::draw_polya_gamma_series(1.0, 0.9, r2, kPolyaGammaSeriesTerms);
  }
  EXPECT_GT(oracle::ks_two_sample_pvalue(a, b), 0.001);
}

TEST(PolyaGamma, RejectsNonPositiveShape) {
  RngStream rng(1, 1);
  EXPECT_THROW(draw_polya_gamma({0.0, 1.0}, rng), DomainError);
  EXPECT_THROW(draw_polya_gamma({-1.0, 1.0}, rng), DomainError);
}

// Gibbs on (eta, omega) for y | eta ~ NB(xi, logistic(eta)), eta ~ N(m0, s0^2)
// must reproduce the eta posterior computed by quadrature. This is the
// end-to-end content of the latent-Gaussian construction.
TEST(PolyaGamma, AugmentedGibbsMatchesQuadraturePosterior) {
  for (auto [y, xi, m0, s0] : {std::tuple{3, 1.3, 0.0, 1.0}, std::tuple{0, 2.0, 0.5, 2.0},
                               std::tuple{25, 0.7, -1.0, 1.5}}) {
    auto log_post = [&](double eta) {
      return -0.5 * (eta - m0) * (eta - m0) / (s0 * s0) + oracle::nb_log_density(y, xi, eta);
    };
    const auto truth = oracle::integrate_log_density(log_post, m0 - 12 * s0, m0 + 12 * s0);
    RngStream rng(77, static_cast<std::uint64_t>(y));
    const double kappa = (y - xi) / 2.0;
    double eta = m0;
    const int n = 200000;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) {
      const double omega = draw_polya_gamma({y + xi, eta}, rng);
      const double prec = omega + 1.0 / (s0 * s0);
      eta = (kappa + m0 / (s0 * s0)) / prec + draw_standard_normal(rng) / std::sqrt(prec);
      draws[i] = eta;
    }
    const double se = oracle::batch_se(draws);
    EXPECT_NEAR(oracle::mean(draws), truth.mean, 5 * se) << "y=" << y;
    EXPECT_NEAR(oracle::variance(draws), truth.variance, 0.03 * truth.variance) << "y=" << y;
  }
}

TEST(Crt, ZeroCountIsZero) {
  RngStream rng(1, 1);
  for (double xi : {0.1, 1.0, 50.0}) EXPECT_EQ(draw_crt({xi, 0}, rng), 0);
}

TEST(Crt, SingleCustomerOneTable) {
  RngStream rng(1, 2);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(draw_crt({0.3, 1}, rng), 1);
}

TEST(Crt, HarmonicMean) {
  RngStream rng(5, 5);
  const int n = 1000000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(draw_crt({1.0, 3}, rng));
  EXPECT_NEAR(s / n, 1.0 + 0.5 + 1.0 / 3.0, 0.005);
}

TEST(Crt, ExpectationIdentityOnGrid) {
  RngStream rng(6, 6);
  for (double xi : {0.5, 1.0, 5.0}) {
    for (long y : {1L, 5L, 50L}) {
      double expect = 0, var = 0;
      for (long m = 1; m <= y; ++m) {
        const double p = xi / (xi + m - 1);
        expect += p;
        var += p * (1 - p);
      }
      const int n = 50000;
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const auto l = draw_crt({xi, y}, rng);
        ASSERT_GE(l, 1);
        ASSERT_LE(l, y);
        s += static_cast<double>(l);
      }
      EXPECT_NEAR(s / n, expect, 5 * std::sqrt(var / n) + 1e-12) << xi << " " << y;
    }
  }
}

TEST(Mvn, IdentityPrecision) {
  RngStream rng(3, 0);
  const int n = 100000;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = draw_mvn_precision(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3), rng);
    cov += x * x.transpose();
  }
  cov /= n;
  EXPECT_LT((cov - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Mvn, DiagonalPrecision) {
  RngStream rng(3, 1);
  Eigen::Vector2d mean(1, 2);
  Eigen::Matrix2d prec;
  prec << 2, 0, 0, 4;
  const int n = 100000;
  Eigen::Vector2d s = Eigen::Vector2d::Zero(), s2 = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = draw_mvn_precision(mean, prec, rng);
    s += x;
    s2 += x.cwiseProduct(x);
  }
  const Eigen::Vector2d m = s / n;
  const Eigen::Vector2d v = s2 / n - m.cwiseProduct(m);
  EXPECT_NEAR(m(0), 1.0, 0.01);
  EXPECT_NEAR(m(1), 2.0, 0.01);
  EXPECT_NEAR(v(0), 0.5, 0.01);
  EXPECT_NEAR(v(1), 0.25, 0.01);
}

TEST(Mvn, CorrelatedPrecision) {
  RngStream rng(3, 2);
  Eigen::Matrix2d prec;
  prec << 2, 1, 1, 2;
  const int n = 100000;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = draw_mvn_precision(Eigen::Vector2d::Zero(), prec, rng);
    cov += x * x.transpose();
  }
  cov /= n;
  Eigen::Matrix2d expect;
  expect << 2.0 / 3, -1.0 / 3, -1.0 / 3, 2.0 / 3;
  EXPECT_LT((cov - expect).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Mvn, NonPositiveDefiniteNamesMatrix) {
  RngStream rng(1, 1);
  Eigen::Matrix2d bad;
  bad << 1, 2, 2, 1;
  try {
    draw_mvn_precision(Eigen::Vector2d::Zero(), bad, rng, "beta precision");
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("beta precision"), std::string::npos);
  }
}

TEST(Mvn, CanonicalMeanIsSolve) {
  RngStream rng(1, 1);
  Eigen::Matrix3d p;
  p << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const Eigen::Vector3d h(1, -2, 0.5);
  const auto d = draw_mvn_canonical(p, h, rng);
  EXPECT_LT((d.mean - p.inverse() * h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gamma, Mean) {
  RngStream rng(8, 0);
  const int n = 200000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += draw_gamma(3.0, 2.0, rng);
  EXPECT_NEAR(s / n, 1.5, 0.01);
}

TEST(Gamma, SmallShapeDistribution) {
  RngStream rng(8, 1);
  std::vector<double> v(50000);
  for (auto& x : v) x = draw_gamma(0.3, 2.0, rng);
  EXPECT_GT(oracle::ks_pvalue(v, [](double x) { return oracle::gamma_cdf(x, 0.3, 2.0); }), 0.001);
}

TEST(Gamma, LogGammaTinyShape) {
  RngStream rng(8, 2);
  std::vector<double> v(50000);
  for (auto& x : v) x = std::exp(draw_log_gamma(0.05, rng));
  EXPECT_GT(oracle::ks_pvalue(v, [](double x) { return oracle::gamma_cdf(x, 0.05, 1.0); }), 0.001);
}

TEST(InverseGamma, Mean) {
  RngStream rng(8, 3);
  const int n = 400000;
  std::vector<double> v(n);
  for (auto& x : v) x = draw_inverse_gamma(3.0, 2.0, rng);
  EXPECT_NEAR(oracle::mean(v), 1.0, 0.01);
  EXPECT_GT(oracle::ks_pvalue(std::vector<double>(v.begin(), v.begin() + 50000),
                              [](double x) { return oracle::inverse_gamma_cdf(x, 3.0, 2.0); }),
            0.001);
}

TEST(Discrete, LogWeightsWithNegativeInfinity) {
  RngStream rng(9, 0);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> lw = {0.0, 0.0, -inf};
  int counts[3] = {0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[draw_discrete_log(lw, rng)];
  EXPECT_NEAR(counts[0] / double(n), 0.5, 0.01);
  EXPECT_NEAR(counts[1] / double(n), 0.5, 0.01);
  EXPECT_EQ(counts[2], 0);
}

TEST(Discrete, AllNegativeInfinityThrows) {
  RngStream rng(9, 1);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> lw = {-inf, -inf};
  EXPECT_THROW(draw_discrete_log(lw, rng), DomainError);
}

TEST(Discrete, HugeLogWeightsNormalized) {
  RngStream rng(9, 2);
  const std::vector<double> lw = {1000.0, 1000.0 + std::log(3.0)};
  int second = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) second += draw_discrete_log(lw, rng) == 1;
  EXPECT_NEAR(second / double(n), 0.75, 0.01);
}

TEST(Dirichlet, LogDrawOnSimplex) {
  RngStream rng(4, 4);
  const std::vector<double> shape = {0.1, 0.1, 2.0, 0.01};
  const int n = 20000;
  std::vector<double> first(n);
  for (int i = 0; i < n; ++i) {
    const auto l = draw_log_dirichlet(shape, rng);
    double s = 0;
    for (double x : l) s += std::exp(x);
    ASSERT_NEAR(s, 1.0, 1e-12);
    first[i] = std::exp(l[2]);
  }
  EXPECT_NEAR(oracle::mean(first), 2.0 / 2.21, 5 * std::sqrt(oracle::variance(first) / n));
}

TEST(NegativeBinomialDensity, HandValues) {
  EXPECT_NEAR(nb_log_density(0, 1.0, 0.0), std::log(0.5), 1e-12);
  EXPECT_NEAR(nb_log_density(0, 1.0, 0.0), -0.693147, 1e-6);
  EXPECT_NEAR(nb_log_density(2, 1.0, 0.0), -2.079442, 1e-6);
  for (long y : {0L, 3L, 17L})
    for (double eta : {-3.0, 0.4, 2.0})
      EXPECT_NEAR(nb_log_density(y, 1.7, eta), oracle::nb_log_density(y, 1.7, eta), 1e-10);
}

TEST(NegativeBinomialDensity, Normalizes) {
  std::vector<double> terms;
  for (long y = 0; y <= 1000; ++y) terms.push_back(nb_log_density(y, 2.0, 1.0));
  EXPECT_NEAR(std::exp(log_sum_exp(terms)), 1.0, 1e-10);
}

TEST(NegativeBinomialDensity, StableAtExtremeEta) {
  EXPECT_TRUE(std::isfinite(nb_log_density(5, 1.0, 800.0)));
  EXPECT_TRUE(std::isfinite(nb_log_density(5, 1.0, -800.0)));
  EXPECT_NEAR(nb_log_density(0, 2.0, -800.0), 0.0, 1e-12);
}

TEST(NegativeBinomialDraw, MeanAndVariance) {
  RngStream rng(10, 0);
  for (auto [xi, eta] : {std::pair{1.0, 0.5}, std::pair{3.0, -1.0}, std::pair{0.5, 2.0}}) {
    const int n = 200000;
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(draw_negative_binomial(xi, eta, rng));
    const double mu = xi * std::exp(eta);
    const double var = mu * (1 + std::exp(eta));
    EXPECT_NEAR(oracle::mean(v), mu, 5 * std::sqrt(var / n));
    EXPECT_NEAR(oracle::variance(v), var, 5 * oracle::variance_se(v));
    EXPECT_GT(oracle::variance(v), oracle::mean(v));
  }
}

TEST(Softplus, Stable) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(1000.0), 1000.0);
  EXPECT_NEAR(softplus(-1000.0), 0.0, 1e-300);
  EXPECT_NEAR(softplus(-30.0), std::exp(-30.0), 1e-20);
}
