#include "mixbart/ensemble.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mixbart/error.hpp"
#include "mixbart/parallel.hpp"

namespace mixbart {

double BartConfig::leaf_sd() const { return 1.5 / (leaf_k * std::sqrt(static_cast<double>(trees))); }

void BartConfig::validate() const {
  if (trees < 1) throw ConfigError("trees must be >= 1, got " + std::to_string(trees));
  if (!(tree_prior.gamma >= 0.0 && tree_prior.gamma <= 1.0)) {
    throw ConfigError("split_gamma must lie in [0, 1]");
  }
  if (!(tree_prior.delta >= 0.0)) throw ConfigError("split_delta must be >= 0");
  if (!(leaf_k > 0.0)) throw ConfigError("leaf_k must be positive");
  if (!(bandwidth_prior_mean > 0.0)) throw ConfigError("bandwidth_prior_mean must be positive");
  if (!(initial_bandwidth > 0.0)) throw ConfigError("initial bandwidth must be positive");
  if (!(dirichlet_concentration > 0.0)) {
    throw ConfigError("dirichlet_concentration must be positive");
  }
  if (!(moves.grow > 0.0 && moves.prune > 0.0 && moves.change >= 0.0)) {
    throw ConfigError("move probabilities must be positive");
  }
}

Ensemble::Ensemble(const BartConfig& config, ExposureRanges ranges, std::size_t rows)
    : config_(config), ranges_(std::move(ranges)) {
  config_.validate();
  const double bandwidth = config_.soft ? config_.initial_bandwidth : config_.hard_bandwidth;
  trees_.assign(config_.trees, SoftTree(bandwidth));
  phi_.assign(config_.trees, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows), 1));
  contributions_.assign(config_.trees, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows)));
  total_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
  split_ = SplitProbabilities(static_cast<int>(ranges_.size()), config_.dirichlet_concentration,
                              config_.sparse);
}

double Ensemble::leaf_variance() const {
  const double sd = config_.leaf_sd();
  return sd * sd;
}

void Ensemble::sweep(const RowMatrix& z, const Eigen::VectorXd& omega,
                     const Eigen::VectorXd& base, RngStream& rng) {
  const double variance = leaf_variance();
  const BandwidthPrior bandwidth_prior{1.0 / config_.bandwidth_prior_mean};
  Eigen::VectorXd residual(total_.size());
  for (int t = 0; t < config_.trees; ++t) {
    residual = base - omega.cwiseProduct(total_ - contributions_[t]);

    StructureProposal proposal =
        propose_structure(trees_[t], split_, config_.tree_prior, ranges_, rng, config_.moves);
    ++stats_.structure_proposals;
    ++stats_.moves[static_cast<int>(proposal.move)];
    const double u = rng.uniform_open();
    if (std::isfinite(proposal.log_prior_ratio)) {
      Eigen::MatrixXd phi_new = proposal.tree.weight_matrix(z);
      const double log_ratio = integrated_log_likelihood(phi_new, omega, residual, variance) -
                               integrated_log_likelihood(phi_[t], omega, residual, variance) +
                               proposal.log_prior_ratio + proposal.log_proposal_ratio;
      if (std::log(u) < log_ratio) {
        trees_[t] = std::move(proposal.tree);
        phi_[t] = std::move(phi_new);
        ++stats_.structure_accepts;
        ++stats_.accepted_moves[static_cast<int>(proposal.move)];
      }
    }

    if (config_.soft && config_.update_bandwidth) {
      const auto update = update_bandwidth(trees_[t], z, omega, residual, variance,
                                           bandwidth_prior, rng, &phi_[t]);
      ++stats_.bandwidth_proposals;
      if (update.accepted) {
        ++stats_.bandwidth_accepts;
        trees_[t].set_bandwidth(update.bandwidth);
        phi_[t] = trees_[t].weight_matrix(z);
      }
    }

    const Eigen::VectorXd leaves = draw_leaves(phi_[t], omega, residual, variance, rng);
    trees_[t].set_leaf_values(leaves);
    Eigen::VectorXd updated = phi_[t] * leaves;
    total_ += updated - contributions_[t];
    contributions_[t] = std::move(updated);
  }
  // Drop accumulated rounding from the incremental updates.
  total_.setZero();
  for (const auto& g : contributions_) total_ += g;
}

void Ensemble::update_hyperparameters(RngStream& rng) {
  if (!config_.sparse) return;
  update_split_probabilities(trees_, split_, rng);
  if (config_.update_concentration) update_concentration(split_, rng);
}

double Ensemble::predict(std::span<const double> z) const { return predict_ensemble(trees_, z); }

void Ensemble::set_trees(std::vector<SoftTree> trees, const RowMatrix& z) {
  if (static_cast<int>(trees.size()) != config_.trees) {
    throw DomainError("set_trees: expected " + std::to_string(config_.trees) + " trees");
  }
  trees_ = std::move(trees);
  recompute(z);
}

void Ensemble::recompute(const RowMatrix& z) {
  total_ = Eigen::VectorXd::Zero(z.rows());
  for (int t = 0; t < config_.trees; ++t) {
    phi_[t] = trees_[t].weight_matrix(z);
    contributions_[t] = phi_[t] * trees_[t].leaf_values();
    total_ += contributions_[t];
  }
}

}  // namespace mixbart
