#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mixbart/ensemble.hpp"
#include "mixbart/error.hpp"
#include "oracles.hpp"

using namespace mixbart;

namespace {

struct Toy {
  RowMatrix z;
  Eigen::VectorXd omega;
  Eigen::VectorXd base;
};

// Weighted working response around a smooth surface of the first two columns.
Toy make_toy(int n, int q, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0, 1);
  std::normal_distribution<double> norm;
  Toy t;
  t.z.resize(n, q);
  t.omega.resize(n);
  t.base.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < q; ++k) t.z(i, k) = unif(gen);
    t.omega(i) = 0.5 + unif(gen);
    const double f = std::sin(3 * t.z(i, 0)) + (t.z(i, 1) > 0.5 ? 0.5 : -0.5);
    t.base(i) = t.omega(i) * (f + norm(gen) / std::sqrt(t.omega(i)));
  }
  return t;
}

}  // namespace

TEST(Ensemble, RootOnlySweepIsConjugateLeafDraw) {
  const Toy toy = make_toy(30, 2, 1);
  BartConfig cfg;
  cfg.trees = 1;
  cfg.tree_prior.gamma = 0.0;
  cfg.update_bandwidth = false;
  Ensemble ens(cfg, ExposureRanges::from_matrix(toy.z), 30);
  const double s2 = cfg.leaf_sd() * cfg.leaf_sd();
  const double prec = toy.omega.sum() + 1 / s2;
  const double mean = toy.base.sum() / prec;
  RngStream rng(2, 0);
  std::vector<double> v;
  for (int i = 0; i < 50000; ++i) {
    ens.sweep(toy.z, toy.omega, toy.base, rng);
    ASSERT_EQ(ens.trees()[0].leaf_count(), 1);
    v.push_back(ens.trees()[0].leaf_values()(0));
  }
  EXPECT_NEAR(oracle::mean(v), mean, 5 * std::sqrt(1 / prec / v.size()));
  EXPECT_NEAR(oracle::variance(v), 1 / prec, 5 * oracle::variance_se(v));
}

TEST(Ensemble, CacheMatchesFreshPredictions) {
  const Toy toy = make_toy(200, 3, 3);
  BartConfig cfg;
  cfg.trees = 8;
  Ensemble ens(cfg, ExposureRanges::from_matrix(toy.z), 200);
  RngStream rng(4, 0);
  for (int s = 0; s < 100; ++s) {
    ens.sweep(toy.z, toy.omega, toy.base, rng);
    ens.update_hyperparameters(rng);
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(200);
  for (int t = 0; t < cfg.trees; ++t) sum += ens.contribution(t);
  EXPECT_LT((sum - ens.fit()).cwiseAbs().maxCoeff(), 1e-9);
  for (int i = 0; i < 200; ++i) {
    const std::span<const double> zi(toy.z.row(i).data(), 3);
    EXPECT_NEAR(ens.predict(zi), ens.fit()(i), 1e-9);
    double by_tree = 0;
    for (const auto& t : ens.trees()) by_tree += t.predict(zi);
    EXPECT_NEAR(by_tree, ens.fit()(i), 1e-9);
  }
  EXPECT_GT(ens.stats().structure_accepts, 0);
}

TEST(Ensemble, FitsTheSignal) {
  const Toy toy = make_toy(300, 2, 5);
  BartConfig cfg;
  cfg.trees = 10;
  Ensemble ens(cfg, ExposureRanges::from_matrix(toy.z), 300);
  RngStream rng(6, 0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(300);
  for (int s = 0; s < 300; ++s) {
    ens.sweep(toy.z, toy.omega, toy.base, rng);
    if (s >= 100) mean += ens.fit() / 200.0;
  }
  double sse = 0, sst = 0;
  for (int i = 0; i < 300; ++i) {
    const double f = std::sin(3 * toy.z(i, 0)) + (toy.z(i, 1) > 0.5 ? 0.5 : -0.5);
    sse += (mean(i) - f) * (mean(i) - f);
    sst += f * f;
  }
  EXPECT_LT(sse / sst, 0.1);
}

TEST(Ensemble, HardModeKeepsTinyBandwidth) {
  const Toy toy = make_toy(100, 2, 7);
  BartConfig cfg;
  cfg.trees = 5;
  cfg.soft = false;
  Ensemble ens(cfg, ExposureRanges::from_matrix(toy.z), 100);
  RngStream rng(8, 0);
  for (int s = 0; s < 50; ++s) ens.sweep(toy.z, toy.omega, toy.base, rng);
  for (const auto& t : ens.trees()) EXPECT_EQ(t.bandwidth(), 1e-6);
  EXPECT_EQ(ens.stats().bandwidth_proposals, 0);
}

TEST(Ensemble, DenseSplitProbabilitiesStayUniform) {
  const Toy toy = make_toy(100, 4, 9);
  BartConfig cfg;
  cfg.trees = 5;
  cfg.sparse = false;
  Ensemble ens(cfg, ExposureRanges::from_matrix(toy.z), 100);
  RngStream rng(10, 0);
  for (int s = 0; s < 30; ++s) {
    ens.sweep(toy.z, toy.omega, toy.base, rng);
    ens.update_hyperparameters(rng);
  }
  for (double p : ens.split_probabilities().probs()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Ensemble, SetTreesCountChecked) {
  const Toy toy = make_toy(10, 1, 11);
  BartConfig cfg;
  cfg.trees = 3;
  Ensemble ens(cfg, ExposureRanges::from_matrix(toy.z), 10);
  EXPECT_THROW(ens.set_trees(std::vector<SoftTree>(2), toy.z), DomainError);
}

TEST(BartConfig, Validation) {
  BartConfig cfg;
  cfg.trees = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.trees = 25;
  EXPECT_NEAR(cfg.leaf_sd(), 1.5 / (2 * 5), 1e-15);
}

// Tree order carries no information: starting from the same ensemble with
// its trees reversed gives the same distribution of f after a few sweeps.
TEST(Ensemble, TreeOrderExchangeable) {
  const Toy toy = make_toy(60, 2, 12);
  BartConfig cfg;
  cfg.trees = 4;
  const auto ranges = ExposureRanges::from_matrix(toy.z);
  Ensemble seed_ens(cfg, ranges, 60);
  RngStream warm(13, 0);
  for (int s = 0; s < 40; ++s) seed_ens.sweep(toy.z, toy.omega, toy.base, warm);
  std::vector<SoftTree> forward = seed_ens.trees();
  std::vector<SoftTree> reversed(forward.rbegin(), forward.rend());

  std::vector<double> a, b;
  for (int run = 0; run < 200; ++run) {
    Ensemble e1(cfg, ranges, 60), e2(cfg, ranges, 60);
    e1.set_trees(forward, toy.z);
    e2.set_trees(reversed, toy.z);
    RngStream r1(14, static_cast<std::uint64_t>(run)), r2(15, static_cast<std::uint64_t>(run));
    for (int s = 0; s < 3; ++s) {
      e1.sweep(toy.z, toy.omega, toy.base, r1);
      e2.sweep(toy.z, toy.omega, toy.base, r2);
    }
    a.push_back(e1.fit()(0));
    b.push_back(e2.fit()(0));
  }
  EXPECT_GT(oracle::ks_two_sample_pvalue(a, b), 0.01);
}
