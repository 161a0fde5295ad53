#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/rng.hpp"

namespace mixbart {

// Exposures are kept row-major so each observation is one contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int var = -1;
  double cut = 0.0;
  double leaf = 0.0;
  bool is_leaf() const { return left < 0; }
};

// One row of the flat pre-order archive format.
struct FlatNode {
  bool leaf = true;
  int var = -1;
  double cut = 0.0;
  double value = 0.0;
  bool operator==(const FlatNode&) const = default;
};

// A binary tree whose internal nodes route an input right with probability
// logistic((z_var - cut) / bandwidth). Nodes are always stored in pre-order,
// so node 0 is the root and leaves appear in left-to-right order.
class SoftTree {
 public:
  explicit SoftTree(double bandwidth = 0.1);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  double bandwidth() const { return bandwidth_; }
  void set_bandwidth(double bandwidth);

  int leaf_count() const;
  std::vector<int> leaf_ids() const;
  std::vector<int> internal_ids() const;
  // Internal nodes whose two children are both leaves.
  std::vector<int> prunable_ids() const;
  int depth(int id) const;

  // Structure edits. Node ids are invalidated by grow/prune.
  void grow(int leaf_id, int var, double cut);
  void prune(int node_id);
  void set_split(int node_id, int var, double cut);

  Eigen::VectorXd leaf_values() const;
  void set_leaf_values(const Eigen::VectorXd& values);

  // Weight of each leaf (in leaf_ids() order); out must have leaf_count() slots.
  void leaf_weights(std::span<const double> z, std::span<double> out) const;
  std::vector<double> leaf_weights(std::span<const double> z) const;
  double predict(std::span<const double> z) const;
  // n x L matrix of leaf weights.
  Eigen::MatrixXd weight_matrix(const RowMatrix& z) const;

  std::vector<FlatNode> preorder() const;
  static SoftTree from_preorder(std::span<const FlatNode> flat, double bandwidth);

  bool same_structure(const SoftTree& other) const;
  bool operator==(const SoftTree& other) const;

 private:
  void compact();

  std::vector<TreeNode> nodes_;
  double bandwidth_;
};

double predict_ensemble(std::span<const SoftTree> trees, std::span<const double> z);

// Branching-process prior: a node at depth d splits with probability
// gamma (1 + d)^-delta.
struct TreePrior {
  double gamma = 0.95;
  double delta = 2.0;
  double split_probability(int depth) const;
};

// Observed [min, max] of each exposure; cutpoints are uniform on it.
struct ExposureRanges {
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t size() const { return lower.size(); }
  // Width used for the cutpoint density; 1 when the range is degenerate.
  double width(int var) const;
  static ExposureRanges from_matrix(const RowMatrix& z);
};

class SplitProbabilities {
 public:
  SplitProbabilities() = default;
  SplitProbabilities(int count, double concentration, bool sparse);

  int size() const { return static_cast<int>(log_probs_.size()); }
  const std::vector<double>& log_probs() const { return log_probs_; }
  std::vector<double> probs() const;
  void set_log_probs(std::vector<double> log_probs);
  double concentration() const { return concentration_; }
  void set_concentration(double a) { concentration_ = a; }
  bool sparse() const { return sparse_; }

 private:
  std::vector<double> log_probs_;
  double concentration_ = 1.0;
  bool sparse_ = false;
};

// Internal nodes splitting on each exposure, counted once per node.
std::vector<int> split_counts(std::span<const SoftTree> trees, int exposure_count);

// s ~ Dirichlet(a/q + n_k). No-op when sparsity is off.
void update_split_probabilities(std::span<const SoftTree> trees, SplitProbabilities& split,
                                RngStream& rng);
// Grid update of u = a / (a + q) with a Beta(0.5, 1) prior given the current s.
void update_concentration(SplitProbabilities& split, RngStream& rng);

// Log prior of a whole structure including the split variable and cutpoint
// densities. Leaf values are excluded.
double log_tree_prior(const SoftTree& tree, const TreePrior& prior,
                      const SplitProbabilities& split, const ExposureRanges& ranges);

enum class MoveType { Grow, Prune, Change };

struct MoveProbabilities {
  double grow = 0.3;
  double prune = 0.3;
  double change = 0.4;
};

struct StructureProposal {
  SoftTree tree;
  MoveType move = MoveType::Grow;
  double log_proposal_ratio = 0.0;  // log q(T | T') - log q(T' | T)
  double log_prior_ratio = 0.0;     // log p(T') - log p(T)
};

// Root-only trees always GROW; otherwise the move is drawn from `moves`.
StructureProposal propose_structure(const SoftTree& tree, const SplitProbabilities& split,
                                    const TreePrior& prior, const ExposureRanges& ranges,
                                    RngStream& rng, const MoveProbabilities& moves = {});

// Canonical-form leaf posterior: A = Phi' Omega Phi + I / leaf_variance and
// m = Phi' (omega * r).
struct LeafPosterior {
  Eigen::MatrixXd precision;
  Eigen::VectorXd linear;
};

LeafPosterior leaf_posterior(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                             const Eigen::VectorXd& weighted_residual, double leaf_variance);

// Part of the log marginal of r ~ N(Phi mu, Omega^-1), mu ~ N(0, leaf_variance I)
// that depends on the tree: -L/2 log leaf_variance - 1/2 log det A + 1/2 m' A^-1 m.
double integrated_log_likelihood(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                                 const Eigen::VectorXd& weighted_residual, double leaf_variance);

// Full log marginal density of the working response y*.
double integrated_log_likelihood_full(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                                      const Eigen::VectorXd& working_response,
                                      double leaf_variance);

Eigen::VectorXd draw_leaves(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                            const Eigen::VectorXd& weighted_residual, double leaf_variance,
                            RngStream& rng);

struct BandwidthPrior {
  double rate = 10.0;  // Exponential, mean 1 / rate
};

struct BandwidthUpdate {
  double bandwidth;
  bool accepted;
};

// Random-walk MH on log bandwidth: tau' = tau * 5^U, U ~ U(-1, 1).
BandwidthUpdate update_bandwidth(const SoftTree& tree, const RowMatrix& z,
                                 const Eigen::VectorXd& omega,
                                 const Eigen::VectorXd& weighted_residual, double leaf_variance,
                                 const BandwidthPrior& prior, RngStream& rng,
                                 const Eigen::MatrixXd* current_phi = nullptr);

}  // namespace mixbart
