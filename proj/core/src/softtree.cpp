#include "mixbart/softtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"

namespace mixbart {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// Fills prob[node] for every node in a pre-order tree.
void node_probabilities(const std::vector<TreeNode>& nodes, double bandwidth,
                        std::span<const double> z, std::vector<double>& prob) {
  prob.resize(nodes.size());
  prob[0] = 1.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& node = nodes[i];
    if (node.is_leaf()) continue;
    const double x = (z[node.var] - node.cut) / bandwidth;
    prob[node.right] = prob[i] * logistic(x);
    prob[node.left] = prob[i] * logistic(-x);
  }
}

}  // namespace

SoftTree::SoftTree(double bandwidth) : nodes_(1), bandwidth_(bandwidth) {
  if (!(bandwidth > 0.0)) throw DomainError("tree bandwidth must be positive");
}

void SoftTree::set_bandwidth(double bandwidth) {
  if (!(bandwidth > 0.0)) throw DomainError("tree bandwidth must be positive");
  bandwidth_ = bandwidth;
}

int SoftTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(),
                                        [](const TreeNode& n) { return n.is_leaf(); }));
}

std::vector<int> SoftTree::leaf_ids() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (nodes_[i].is_leaf()) out.push_back(i);
  }
  return out;
}

std::vector<int> SoftTree::internal_ids() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (!nodes_[i].is_leaf()) out.push_back(i);
  }
  return out;
}

std::vector<int> SoftTree::prunable_ids() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    const TreeNode& n = nodes_[i];
    if (!n.is_leaf() && nodes_[n.left].is_leaf() && nodes_[n.right].is_leaf()) out.push_back(i);
  }
  return out;
}

int SoftTree::depth(int id) const {
  int d = 0;
  while (nodes_.at(id).parent >= 0) {
    id = nodes_[id].parent;
    ++d;
  }
  return d;
}

void SoftTree::grow(int leaf_id, int var, double cut) {
  if (!nodes_.at(leaf_id).is_leaf()) throw DomainError("grow target is not a leaf");
  const int left = static_cast<int>(nodes_.size());
  TreeNode child;
  child.parent = leaf_id;
  nodes_.push_back(child);
  nodes_.push_back(child);
  TreeNode& node = nodes_[leaf_id];
  node.left = left;
  node.right = left + 1;
  node.var = var;
  node.cut = cut;
  node.leaf = 0.0;
  compact();
}

void SoftTree::prune(int node_id) {
  TreeNode& node = nodes_.at(node_id);
  if (node.is_leaf() || !nodes_[node.left].is_leaf() || !nodes_[node.right].is_leaf()) {
    throw DomainError("prune target must have two leaf children");
  }
  node.left = node.right = -1;
  node.var = -1;
  node.cut = 0.0;
  node.leaf = 0.0;
  compact();
}

void SoftTree::set_split(int node_id, int var, double cut) {
  TreeNode& node = nodes_.at(node_id);
  if (node.is_leaf()) throw DomainError("cannot set a split on a leaf");
  node.var = var;
  node.cut = cut;
}

void SoftTree::compact() {
  std::vector<TreeNode> out;
  out.reserve(nodes_.size());
  // (old id, new parent id)
  std::vector<std::pair<int, int>> stack = {{0, -1}};
  while (!stack.empty()) {
    const auto [old_id, parent] = stack.back();
    stack.pop_back();
    const int new_id = static_cast<int>(out.size());
    TreeNode node = nodes_[old_id];
    node.parent = parent;
    if (parent >= 0) {
      TreeNode& p = out[parent];
      if (p.left == -2) {
        p.left = new_id;
      } else {
        p.right = new_id;
      }
    }
    const int old_left = node.left;
    const int old_right = node.right;
    if (!node.is_leaf()) node.left = node.right = -2;
    out.push_back(node);
    if (old_left >= 0) {
      stack.emplace_back(old_right, new_id);
      stack.emplace_back(old_left, new_id);
    }
  }
  nodes_ = std::move(out);
}

Eigen::VectorXd SoftTree::leaf_values() const {
  const auto ids = leaf_ids();
  Eigen::VectorXd out(ids.size());
  for (std::size_t l = 0; l < ids.size(); ++l) out[l] = nodes_[ids[l]].leaf;
  return out;
}

void SoftTree::set_leaf_values(const Eigen::VectorXd& values) {
  const auto ids = leaf_ids();
  if (static_cast<std::size_t>(values.size()) != ids.size()) {
    throw DomainError("leaf value count does not match the tree");
  }
  for (std::size_t l = 0; l < ids.size(); ++l) nodes_[ids[l]].leaf = values[l];
}

void SoftTree::leaf_weights(std::span<const double> z, std::span<double> out) const {
  thread_local std::vector<double> prob;
  node_probabilities(nodes_, bandwidth_, z, prob);
  std::size_t l = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) out[l++] = prob[i];
  }
}

std::vector<double> SoftTree::leaf_weights(std::span<const double> z) const {
  std::vector<double> out(leaf_count());
  leaf_weights(z, out);
  return out;
}

double SoftTree::predict(std::span<const double> z) const {
  thread_local std::vector<double> prob;
  node_probabilities(nodes_, bandwidth_, z, prob);
  double total = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) total += prob[i] * nodes_[i].leaf;
  }
  return total;
}

Eigen::MatrixXd SoftTree::weight_matrix(const RowMatrix& z) const {
  const int leaves = leaf_count();
  Eigen::MatrixXd phi(z.rows(), leaves);
  if (leaves == 1) {
    phi.setOnes();
    return phi;
  }
  std::vector<double> prob;
  std::vector<int> leaf_nodes = leaf_ids();
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    node_probabilities(nodes_, bandwidth_, std::span<const double>(z.row(r).data(), z.cols()),
                       prob);
    for (int l = 0; l < leaves; ++l) phi(r, l) = prob[leaf_nodes[l]];
  }
  return phi;
}

std::vector<FlatNode> SoftTree::preorder() const {
  std::vector<FlatNode> out;
  out.reserve(nodes_.size());
  for (const TreeNode& n : nodes_) {
    FlatNode f;
    f.leaf = n.is_leaf();
    f.var = f.leaf ? -1 : n.var;
    f.cut = f.leaf ? 0.0 : n.cut;
    f.value = f.leaf ? n.leaf : 0.0;
    out.push_back(f);
  }
  return out;
}

SoftTree SoftTree::from_preorder(std::span<const FlatNode> flat, double bandwidth) {
  if (flat.empty()) throw DataError("empty tree in archive");
  SoftTree tree(bandwidth);
  tree.nodes_.clear();
  tree.nodes_.reserve(flat.size());
  // Each open internal node waits for its left then right child.
  std::vector<int> open;
  for (const FlatNode& f : flat) {
    const int id = static_cast<int>(tree.nodes_.size());
    TreeNode node;
    if (!open.empty()) {
      const int parent = open.back();
      node.parent = parent;
      TreeNode& p = tree.nodes_[parent];
      if (p.left == -2) {
        p.left = id;
      } else {
        p.right = id;
        open.pop_back();
      }
    } else if (id != 0) {
      throw DataError("malformed pre-order tree: trailing nodes");
    }
    if (f.leaf) {
      node.leaf = f.value;
    } else {
      node.var = f.var;
      node.cut = f.cut;
      node.left = node.right = -2;
    }
    tree.nodes_.push_back(node);
    if (!f.leaf) open.push_back(id);
  }
  if (!open.empty()) throw DataError("malformed pre-order tree: missing children");
  return tree;
}

bool SoftTree::same_structure(const SoftTree& other) const {
  if (nodes_.size() != other.nodes_.size()) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& a = nodes_[i];
    const TreeNode& b = other.nodes_[i];
    if (a.left != b.left || a.right != b.right || a.var != b.var || a.cut != b.cut) return false;
  }
  return true;
}

bool SoftTree::operator==(const SoftTree& other) const {
  return bandwidth_ == other.bandwidth_ && preorder() == other.preorder();
}

double predict_ensemble(std::span<const SoftTree> trees, std::span<const double> z) {
  double total = 0.0;
  for (const SoftTree& t : trees) total += t.predict(z);
  return total;
}

double TreePrior::split_probability(int depth) const {
  return gamma * std::pow(1.0 + depth, -delta);
}

double ExposureRanges::width(int var) const {
  const double w = upper.at(var) - lower.at(var);
  return w > 0.0 ? w : 1.0;
}

ExposureRanges ExposureRanges::from_matrix(const RowMatrix& z) {
  ExposureRanges out;
  if (z.rows() == 0) {
    out.lower.assign(z.cols(), 0.0);
    out.upper.assign(z.cols(), 1.0);
    return out;
  }
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    out.lower.push_back(z.col(k).minCoeff());
    out.upper.push_back(z.col(k).maxCoeff());
  }
  return out;
}

SplitProbabilities::SplitProbabilities(int count, double concentration, bool sparse)
    : log_probs_(count, -std::log(static_cast<double>(count))),
      concentration_(concentration),
      sparse_(sparse) {
  if (count < 1) throw ConfigError("at least one exposure is required");
  if (!(concentration > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
}

std::vector<double> SplitProbabilities::probs() const {
  std::vector<double> out(log_probs_.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::exp(log_probs_[k]);
  return out;
}

void SplitProbabilities::set_log_probs(std::vector<double> log_probs) {
  if (log_probs.size() != log_probs_.size()) throw DomainError("split probability size mismatch");
  log_probs_ = std::move(log_probs);
}

std::vector<int> split_counts(std::span<const SoftTree> trees, int exposure_count) {
  std::vector<int> counts(exposure_count, 0);
  for (const SoftTree& t : trees) {
    for (const TreeNode& n : t.nodes()) {
      if (!n.is_leaf()) ++counts.at(n.var);
    }
  }
  return counts;
}

void update_split_probabilities(std::span<const SoftTree> trees, SplitProbabilities& split,
                                RngStream& rng) {
  if (!split.sparse()) return;
  const int q = split.size();
  const auto counts = split_counts(trees, q);
  std::vector<double> shape(q);
  for (int k = 0; k < q; ++k) shape[k] = split.concentration() / q + counts[k];
  split.set_log_probs(draw_log_dirichlet(shape, rng));
}

void update_concentration(SplitProbabilities& split, RngStream& rng) {
  if (!split.sparse()) return;
  const int q = split.size();
  double sum_log = 0.0;
  for (double v : split.log_probs()) sum_log += v;
  constexpr int kCells = 1000;
  std::vector<double> a_values(kCells);
  std::vector<double> log_weights(kCells);
  for (int g = 0; g < kCells; ++g) {
    const double u = (g + 0.5) / kCells;
    const double a = u / (1.0 - u) * q;
    a_values[g] = a;
    // Dirichlet(a/q) density of s plus a Beta(0.5, 1) prior on u.
    log_weights[g] = std::lgamma(a) - q * std::lgamma(a / q) + (a / q - 1.0) * sum_log -
                     0.5 * std::log(u);
  }
  split.set_concentration(a_values[draw_discrete_log(log_weights, rng)]);
}

double log_tree_prior(const SoftTree& tree, const TreePrior& prior,
                      const SplitProbabilities& split, const ExposureRanges& ranges) {
  double total = 0.0;
  const auto& nodes = tree.nodes();
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    const double p = prior.split_probability(tree.depth(i));
    if (nodes[i].is_leaf()) {
      total += safe_log(1.0 - p);
    } else {
      total += safe_log(p) + split.log_probs()[nodes[i].var] - std::log(ranges.width(nodes[i].var));
    }
  }
  return total;
}

StructureProposal propose_structure(const SoftTree& tree, const SplitProbabilities& split,
                                    const TreePrior& prior, const ExposureRanges& ranges,
                                    RngStream& rng, const MoveProbabilities& moves) {
  StructureProposal out{tree, MoveType::Grow, 0.0, 0.0};
  const bool root_only = tree.nodes().size() == 1;
  MoveType move = MoveType::Grow;
  if (!root_only) {
    const double u = rng.uniform() * (moves.grow + moves.prune + moves.change);
    if (u < moves.grow) {
      move = MoveType::Grow;
    } else if (u < moves.grow + moves.prune) {
      move = MoveType::Prune;
    } else {
      move = MoveType::Change;
    }
  }
  out.move = move;

  auto draw_rule = [&](int& var, double& cut) {
    var = static_cast<int>(draw_discrete_log(split.log_probs(), rng));
    cut = ranges.lower[var] + rng.uniform() * ranges.width(var);
  };
  auto log_rule_density = [&](int var) {
    return split.log_probs()[var] - std::log(ranges.width(var));
  };

  switch (move) {
    case MoveType::Grow: {
      const auto leaves = tree.leaf_ids();
      const int leaf = leaves[static_cast<std::size_t>(rng.uniform() * leaves.size())];
      const int d = tree.depth(leaf);
      int var;
      double cut;
      draw_rule(var, cut);
      out.tree.grow(leaf, var, cut);
      const double p_d = prior.split_probability(d);
      const double p_child = prior.split_probability(d + 1);
      out.log_prior_ratio = safe_log(p_d) + log_rule_density(var) + 2.0 * safe_log(1.0 - p_child) -
                            safe_log(1.0 - p_d);
      const double forward = std::log(root_only ? 1.0 : moves.grow) -
                             std::log(static_cast<double>(leaves.size())) + log_rule_density(var);
      const double reverse =
          std::log(moves.prune) - std::log(static_cast<double>(out.tree.prunable_ids().size()));
      out.log_proposal_ratio = reverse - forward;
      break;
    }
    case MoveType::Prune: {
      const auto prunable = tree.prunable_ids();
      const int node = prunable[static_cast<std::size_t>(rng.uniform() * prunable.size())];
      const int d = tree.depth(node);
      const int var = tree.nodes()[node].var;
      out.tree.prune(node);
      const double p_d = prior.split_probability(d);
      const double p_child = prior.split_probability(d + 1);
      out.log_prior_ratio = safe_log(1.0 - p_d) - safe_log(p_d) - log_rule_density(var) -
                            2.0 * safe_log(1.0 - p_child);
      const bool becomes_root = out.tree.nodes().size() == 1;
      const double forward =
          std::log(moves.prune) - std::log(static_cast<double>(prunable.size()));
      const double reverse = std::log(becomes_root ? 1.0 : moves.grow) -
                             std::log(static_cast<double>(out.tree.leaf_count())) +
                             log_rule_density(var);
      out.log_proposal_ratio = reverse - forward;
      break;
    }
    case MoveType::Change: {
      const auto internal = tree.internal_ids();
      const int node = internal[static_cast<std::size_t>(rng.uniform() * internal.size())];
      const int old_var = tree.nodes()[node].var;
      int var;
      double cut;
      draw_rule(var, cut);
      out.tree.set_split(node, var, cut);
      out.log_prior_ratio = log_rule_density(var) - log_rule_density(old_var);
      out.log_proposal_ratio = log_rule_density(old_var) - log_rule_density(var);
      break;
    }
  }
  return out;
}

LeafPosterior leaf_posterior(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                             const Eigen::VectorXd& weighted_residual, double leaf_variance) {
  LeafPosterior out;
  const Eigen::MatrixXd weighted = phi.array().colwise() * omega.array();
  out.precision = weighted.transpose() * phi;
  out.precision.diagonal().array() += 1.0 / leaf_variance;
  out.linear = phi.transpose() * weighted_residual;
  return out;
}

double integrated_log_likelihood(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                                 const Eigen::VectorXd& weighted_residual, double leaf_variance) {
  const auto post = leaf_posterior(phi, omega, weighted_residual, leaf_variance);
  Eigen::LLT<Eigen::MatrixXd> llt(post.precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("leaf posterior precision is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const Eigen::VectorXd half = llt.matrixL().solve(post.linear);
  const double leaves = static_cast<double>(phi.cols());
  return -0.5 * leaves * std::log(leaf_variance) - 0.5 * log_det + 0.5 * half.squaredNorm();
}

double integrated_log_likelihood_full(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                                      const Eigen::VectorXd& working_response,
                                      double leaf_variance) {
  const Eigen::VectorXd weighted = omega.cwiseProduct(working_response);
  const double n = static_cast<double>(omega.size());
  return integrated_log_likelihood(phi, omega, weighted, leaf_variance) -
         0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * omega.array().log().sum() -
         0.5 * weighted.dot(working_response);
}

Eigen::VectorXd draw_leaves(const Eigen::MatrixXd& phi, const Eigen::VectorXd& omega,
                            const Eigen::VectorXd& weighted_residual, double leaf_variance,
                            RngStream& rng) {
  const auto post = leaf_posterior(phi, omega, weighted_residual, leaf_variance);
  return draw_mvn_canonical(post.precision, post.linear, rng, "leaf posterior precision").value;
}

BandwidthUpdate update_bandwidth(const SoftTree& tree, const RowMatrix& z,
                                 const Eigen::VectorXd& omega,
                                 const Eigen::VectorXd& weighted_residual, double leaf_variance,
                                 const BandwidthPrior& prior, RngStream& rng,
                                 const Eigen::MatrixXd* current_phi) {
  const double current = tree.bandwidth();
  const double proposed = current * std::pow(5.0, 2.0 * rng.uniform() - 1.0);
  // A root-only tree does not depend on the bandwidth.
  double log_ratio = -prior.rate * (proposed - current) + std::log(proposed) - std::log(current);
  if (tree.nodes().size() > 1) {
    SoftTree candidate = tree;
    candidate.set_bandwidth(proposed);
    const double ll_new =
        integrated_log_likelihood(candidate.weight_matrix(z), omega, weighted_residual, leaf_variance);
    const double ll_old = integrated_log_likelihood(
        current_phi ? *current_phi : tree.weight_matrix(z), omega, weighted_residual, leaf_variance);
    log_ratio += ll_new - ll_old;
  }
  if (std::log(rng.uniform_open()) < log_ratio) return {proposed, true};
  return {current, false};
}

}  // namespace mixbart
