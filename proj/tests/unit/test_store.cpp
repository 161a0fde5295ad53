#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "mixbart/error.hpp"
#include "mixbart/model.hpp"
#include "mixbart/store.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace mixbart;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mixbart_store_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PanelDataset small_panel(std::uint64_t seed) {
  auto d = fixture::empty_panel(3, 12, 2, 3);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0, 1);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    d.population[r] = 500 + 2000 * unif(gen);
    for (int k = 0; k < 2; ++k) d.confounders(r, k) = unif(gen);
    for (int k = 0; k < 3; ++k) d.exposures(r, k) = unif(gen);
    const double rate = 0.01 * d.population[r] * std::exp(d.exposures(r, 0) - 0.5);
    d.count[r] = std::poisson_distribution<std::int64_t>(rate)(gen);
  }
  return d;
}

PosteriorStore small_run(const PanelDataset& d, const CarStructure& car, bool store_eta = true) {
  PriorConfig prior;
  prior.bart.trees = 4;
  prior.schedule = {20, 15, 2};
  prior.seed = 5;
  prior.store_eta = store_eta;
  RunOptions opts;
  opts.config_echo = {{"trees", "4"}, {"soft", "true"}};
  return run_chain(d, car, prior, opts);
}

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir dir;
  std::ofstream(dir / "f.txt", std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(dir / "f.txt"), sha256_hex("abc"));
  EXPECT_THROW(sha256_file(dir / "absent"), DataError);
}

TEST(PosteriorStore, WriteReadRoundTrip) {
  const auto d = small_panel(1);
  const auto car = fixture::path_graph(3);
  const auto store = small_run(d, car);
  ASSERT_EQ(store.draws(), 15u);
  TempDir dir;
  store.write(dir / "s");
  const auto back = PosteriorStore::read(dir / "s");
  EXPECT_EQ(back.draws(), store.draws());
  EXPECT_EQ(back.beta, store.beta);
  EXPECT_EQ(back.nu, store.nu);
  EXPECT_EQ(back.split_probs, store.split_probs);
  EXPECT_EQ(back.eta, store.eta);
  EXPECT_EQ(back.tau2, store.tau2);
  EXPECT_EQ(back.rho, store.rho);
  EXPECT_EQ(back.xi, store.xi);
  ASSERT_EQ(back.trees.size(), store.trees.size());
  for (std::size_t m = 0; m < store.trees.size(); ++m) {
    ASSERT_EQ(back.trees[m].size(), 4u);
    for (std::size_t t = 0; t < 4; ++t) EXPECT_TRUE(back.trees[m][t] == store.trees[m][t]);
  }
  EXPECT_EQ(back.meta.seed, 5u);
  EXPECT_EQ(back.meta.config_echo, store.meta.config_echo);
  EXPECT_EQ(back.meta.exposure_names, d.exposure_names);
  EXPECT_EQ(back.meta.region_ids, d.region_ids);
  EXPECT_EQ(back.meta.f_offset, store.meta.f_offset);
  EXPECT_EQ(back.meta.trees, 4);
  // Writing what was read gives the same bytes.
  back.write(dir / "t");
  for (const char* f : {"meta.json", "beta.bin", "nu.bin", "xi.bin", "eta.bin", "trees.jsonl"})
    EXPECT_EQ(slurp(dir / "s" / f), slurp(dir / "t" / f)) << f;
}

TEST(PosteriorStore, BinaryLayoutIsLittleEndianDrawMajor) {
  const auto d = small_panel(2);
  const auto car = fixture::path_graph(3);
  const auto store = small_run(d, car);
  TempDir dir;
  store.write(dir / "s");
  const std::string bytes = slurp(dir / "s" / "beta.bin");
  ASSERT_EQ(bytes.size(), 15u * 2 * 8);
  for (int m = 0; m < 15; ++m)
    for (int k = 0; k < 2; ++k) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[(m * 2 + k) * 8 + b]);
      double v;
      std::memcpy(&v, &bits, 8);
      EXPECT_EQ(v, store.beta(m, k));
    }
  std::ifstream trees(dir / "s" / "trees.jsonl");
  int lines = 0;
  for (std::string line; std::getline(trees, line);) ++lines;
  EXPECT_EQ(lines, 15);
}

TEST(PosteriorStore, EtaOptional) {
  const auto d = small_panel(3);
  const auto car = fixture::path_graph(3);
  const auto store = small_run(d, car, false);
  EXPECT_EQ(store.eta.cols(), 0);
  TempDir dir;
  store.write(dir / "s");
  EXPECT_FALSE(std::filesystem::exists(dir / "s" / "eta.bin"));
  const auto back = PosteriorStore::read(dir / "s");
  EXPECT_EQ(back.eta.cols(), 0);
  EXPECT_EQ(back.eta.rows(), 15);
}

TEST(PosteriorStore, ReconstructedEtaMatchesStored) {
  const auto d = small_panel(4);
  const auto car = fixture::path_graph(3);
  const auto store = small_run(d, car);
  for (std::size_t m = 0; m < store.draws(); ++m) {
    const Eigen::VectorXd eta = store.reconstruct_eta(m, d);
    EXPECT_LT((eta - store.eta.row(static_cast<Eigen::Index>(m)).transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PosteriorStore, ReadErrors) {
  TempDir dir;
  EXPECT_THROW(PosteriorStore::read(dir / "nothing"), DataError);
  const auto d = small_panel(5);
  const auto car = fixture::path_graph(3);
  small_run(d, car).write(dir / "s");
  std::filesystem::resize_file(dir / "s" / "xi.bin", 8 * 3);
  EXPECT_THROW(PosteriorStore::read(dir / "s"), DataError);
  small_run(d, car).write(dir / "u");
  std::ofstream(dir / "u" / "meta.json") << "{ not json";
  EXPECT_THROW(PosteriorStore::read(dir / "u"), DataError);
}

TEST(LogLikelihood, MatchesDensityOracle) {
  const auto d = small_panel(6);
  const auto car = fixture::path_graph(3);
  const auto store = small_run(d, car);
  const Eigen::MatrixXd ll = log_likelihood_matrix(store, d);
  ASSERT_EQ(ll.rows(), 15);
  ASSERT_EQ(ll.cols(), static_cast<Eigen::Index>(d.rows()));
  for (Eigen::Index m = 0; m < ll.rows(); ++m) {
    EXPECT_TRUE(std::isfinite(ll.row(m).sum()));
    for (Eigen::Index r = 0; r < ll.cols(); ++r)
      EXPECT_NEAR(ll(m, r), oracle::nb_log_density(d.count[r], store.xi[m], store.eta(m, r)), 1e-8);
  }
}

TEST(LogLikelihood, EmptyStoreRejected) {
  const auto d = small_panel(7);
  PosteriorStore empty;
  EXPECT_THROW(log_likelihood_matrix(empty, d), DomainError);
}

TEST(CheckStoreMatches, ColumnAndRegionMismatch) {
  const auto d = small_panel(8);
  const auto car = fixture::path_graph(3);
  const auto store = small_run(d, car);
  EXPECT_NO_THROW(check_store_matches(store, d));
  auto other = d;
  other.exposure_names[1] = "pm25";
  EXPECT_THROW(check_store_matches(store, other), DataError);
  other = d;
  other.confounder_names.pop_back();
  EXPECT_THROW(check_store_matches(store, other), DataError);
  other = d;
  other.region_ids[0] = "elsewhere";
  EXPECT_THROW(check_store_matches(store, other), DataError);
}
