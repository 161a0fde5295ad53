#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/rng.hpp"
#include "mixbart/softtree.hpp"

namespace mixbart {

struct BartConfig {
  int trees = 25;
  bool soft = true;
  bool sparse = true;
  TreePrior tree_prior;
  MoveProbabilities moves;
  double leaf_k = 2.0;
  double bandwidth_prior_mean = 0.1;
  double initial_bandwidth = 0.1;
  bool update_bandwidth = true;
  // Bandwidth used to emulate hard decision rules.
  double hard_bandwidth = 1e-6;
  double dirichlet_concentration = 1.0;
  bool update_concentration = false;

  // 1.5 / (k sqrt(T))
  double leaf_sd() const;
  void validate() const;
};

struct SweepStats {
  long structure_proposals = 0;
  long structure_accepts = 0;
  long bandwidth_proposals = 0;
  long bandwidth_accepts = 0;
  long moves[3] = {0, 0, 0};
  long accepted_moves[3] = {0, 0, 0};
};

// Sum-of-trees surface with per-tree cached leaf-weight matrices and fitted
// contributions g_t. fit() is the running total of the g_t.
class Ensemble {
 public:
  Ensemble(const BartConfig& config, ExposureRanges ranges, std::size_t rows);

  // One backfitting pass over the trees in order 1..T. `base` is
  // kappa - omega * (everything in eta except the trees), so the weighted
  // partial residual of tree t is base - omega * (fit - g_t).
  void sweep(const RowMatrix& z, const Eigen::VectorXd& omega, const Eigen::VectorXd& base,
             RngStream& rng);

  // Split-probability and concentration updates. Called once per iteration
  // after sweep().
  void update_hyperparameters(RngStream& rng);

  const Eigen::VectorXd& fit() const { return total_; }
  const Eigen::VectorXd& contribution(int t) const { return contributions_[t]; }
  const std::vector<SoftTree>& trees() const { return trees_; }
  const SplitProbabilities& split_probabilities() const { return split_; }
  const BartConfig& config() const { return config_; }
  const ExposureRanges& ranges() const { return ranges_; }
  const SweepStats& stats() const { return stats_; }
  void reset_stats() { stats_ = {}; }

  double predict(std::span<const double> z) const;
  // Replace trees (and recompute caches from z); used by tests.
  void set_trees(std::vector<SoftTree> trees, const RowMatrix& z);
  // Recompute every cache and the total from scratch.
  void recompute(const RowMatrix& z);

 private:
  double leaf_variance() const;

  BartConfig config_;
  ExposureRanges ranges_;
  std::vector<SoftTree> trees_;
  std::vector<Eigen::MatrixXd> phi_;
  std::vector<Eigen::VectorXd> contributions_;
  Eigen::VectorXd total_;
  SplitProbabilities split_;
  SweepStats stats_;
};

}  // namespace mixbart
