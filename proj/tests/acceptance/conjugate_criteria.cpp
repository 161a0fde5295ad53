#include <cmath>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "criteria.hpp"
#include "fixtures.hpp"
#include "mixbart/distributions.hpp"
#include "mixbart/model.hpp"
#include "mixbart/softtree.hpp"
#include "mixbart/spatial.hpp"
#include "oracles.hpp"

namespace acceptance {

using namespace mixbart;

namespace {

constexpr double kExactTol = 1e-10;
constexpr double kDeterminantTol = 1e-8;
constexpr double kSe = 5.0;
constexpr int kDraws = 4000;

const std::vector<std::pair<int, int>> kEdges = {{0, 1}, {1, 2}, {2, 0}, {2, 3}};

struct HandInstance {
  PanelDataset data;
  CarStructure car;
  PriorConfig prior;
  std::vector<SoftTree> trees;
  Eigen::VectorXd beta, nu, omega;
  double tau2 = 0.7, rho = 0.0, xi = 1.8;
  Eigen::MatrixXd d{}, w{};  // built here from the edge list, not taken from car
};

HandInstance make_instance() {
  HandInstance h{fixture::empty_panel(4, 6, 2, 2), CarStructure::from_edges(4, kEdges), {}, {}, {}, {}, {}};
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> unif(0, 1);
  auto& d = h.data;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    d.population[static_cast<Eigen::Index>(r)] = 50 + 400 * unif(gen);
    for (int k = 0; k < 2; ++k) d.confounders(static_cast<Eigen::Index>(r), k) = unif(gen) - 0.5;
    for (int k = 0; k < 2; ++k) d.exposures(static_cast<Eigen::Index>(r), k) = unif(gen);
    d.count[r] = static_cast<std::int64_t>(40 * unif(gen));
  }
  h.prior.beta_mean = Eigen::Vector2d(0.3, -0.2);
  h.prior.beta_covariance = (Eigen::Matrix2d() << 2.0, 0.5, 0.5, 1.0).finished();
  h.prior.spatial = {3.0, 0.8};
  h.prior.xi_shape = 1.5;
  h.prior.xi_rate = 0.4;
  h.prior.f_offset = -4.0;
  h.prior.bart.trees = 2;
  for (int t = 0; t < 2; ++t) {
    SoftTree tree(0.1 + 0.05 * t);
    tree.grow(0, t, 0.4 + 0.2 * t);
    tree.set_leaf_values(Eigen::Vector2d(0.3 - 0.5 * t, -0.25 + 0.1 * t));
    h.trees.push_back(tree);
  }
  h.beta = Eigen::Vector2d(0.7, -1.1);
  h.nu = Eigen::Vector4d(0.2, -0.4, 0.1, 0.3);
  h.rho = h.car.rho_grid()[h.car.grid_index(0.6)];
  h.omega.resize(static_cast<Eigen::Index>(d.rows()));
  for (auto& o : h.omega) o = 0.5 + 3 * unif(gen);
  h.d = Eigen::MatrixXd::Zero(4, 4);
  h.w = Eigen::MatrixXd::Zero(4, 4);
  for (auto [a, b] : kEdges) h.w(a, b) = h.w(b, a) = 1;
  h.d.diagonal() = h.w.rowwise().sum();
  return h;
}

std::unique_ptr<Sampler> prepared(const HandInstance& h, std::uint64_t seed) {
  PriorConfig prior = h.prior;
  prior.seed = seed;
  auto s = std::make_unique<Sampler>(h.data, h.car, prior);
  s->mutable_ensemble().set_trees(h.trees, h.data.exposures);
  auto& st = s->mutable_state();
  st.beta = h.beta;
  st.spatial.nu = h.nu;
  st.spatial.tau2 = h.tau2;
  st.spatial.rho = h.rho;
  st.xi = h.xi;
  s->recompute_eta();
  PgDraw pg;
  pg.omega = h.omega;
  pg.kappa.resize(h.omega.size());
  for (Eigen::Index i = 0; i < pg.kappa.size(); ++i)
    pg.kappa[i] = 0.5 * (static_cast<double>(h.data.count[static_cast<std::size_t>(i)]) - h.xi);
  s->set_pg(pg);
  return s;
}

// f(z) for each row, straight from the hand trees.
Eigen::VectorXd tree_part(const HandInstance& h) {
  Eigen::VectorXd f(h.data.exposures.rows());
  for (Eigen::Index r = 0; r < f.size(); ++r) {
    const std::span<const double> z(h.data.exposures.row(r).data(), 2);
    f[r] = *h.prior.f_offset;
    for (const auto& t : h.trees) f[r] += t.predict(z);
  }
  return f;
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

// Mean within kSe standard errors and sample variance within kSe of its own
// standard error.
void check_moments(Report& report, const std::string& name, const std::vector<double>& v, double mean,
                   double var) {
  const double m = oracle::mean(v), s2 = oracle::variance(v);
  const double se = std::sqrt(var / static_cast<double>(v.size()));
  report.check(std::abs(m - mean) < kSe * se, str(name, " draw mean ", m, " vs ", mean, " (", (m - mean) / se, " SE)"));
  const double vse = oracle::variance_se(v);
  report.check(std::abs(s2 - var) < kSe * vse, str(name, " draw variance ", s2, " vs ", var));
}

double log_det(const Eigen::MatrixXd& m) {
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return -INFINITY;
  const Eigen::MatrixXd l = llt.matrixL();
  return 2 * l.diagonal().array().log().sum();
}

}  // namespace

bool conjugate_updates(const Context&, Report& report) {
  const HandInstance h = make_instance();
  const auto& data = h.data;
  const auto n = static_cast<Eigen::Index>(data.rows());
  const Eigen::VectorXd f = tree_part(h);
  Eigen::VectorXd ystar(n), log_pop(n), xb = data.confounders * h.beta;
  Eigen::VectorXd nu_row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    ystar[i] = 0.5 * (static_cast<double>(data.count[r]) - h.xi) / h.omega[i];
    log_pop[i] = std::log(data.population[i]);
    nu_row[i] = h.nu[data.region[r]];
  }
  const Eigen::MatrixXd& x = data.confounders;
  const auto base = prepared(h, 1);

  // beta | rest: working-response regression against the prior.
  const Eigen::MatrixXd prior_prec = h.prior.beta_covariance.inverse();
  const Eigen::MatrixXd beta_prec = prior_prec + x.transpose() * h.omega.asDiagonal() * x;
  const Eigen::VectorXd beta_lin =
      prior_prec * h.prior.beta_mean + x.transpose() * h.omega.asDiagonal() * (ystar - log_pop - nu_row - f);
  const Eigen::VectorXd beta_mean = beta_prec.ldlt().solve(beta_lin);
  const Eigen::MatrixXd beta_cov = beta_prec.inverse();
  {
    const auto c = base->beta_conditional();
    report.check(max_abs(c.precision - beta_prec) < kExactTol * (1 + max_abs(beta_prec)), "beta precision closed form");
    report.check(max_abs(c.mean() - beta_mean) < kExactTol, str("beta mean closed form, error ", max_abs(c.mean() - beta_mean)));
  }

  // nu | rest
  Eigen::MatrixXd nu_prec = (h.d - h.rho * h.w) / h.tau2;
  Eigen::VectorXd nu_lin = Eigen::VectorXd::Zero(4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = data.region[static_cast<std::size_t>(i)];
    nu_prec(r, r) += h.omega[i];
    nu_lin[r] += h.omega[i] * (ystar[i] - log_pop[i] - xb[i] - f[i]);
  }
  const Eigen::VectorXd nu_mean = nu_prec.ldlt().solve(nu_lin);
  const Eigen::MatrixXd nu_cov = nu_prec.inverse();
  {
    const auto c = base->nu_conditional();
    report.check(max_abs(c.precision - nu_prec) < kExactTol * (1 + max_abs(nu_prec)), "nu precision closed form");
    report.check(max_abs(c.mean() - nu_mean) < kExactTol, str("nu mean closed form, error ", max_abs(c.mean() - nu_mean)));
  }

  // tau2 | nu, rho: inverse gamma
  const double tau_shape = h.prior.spatial.tau2_shape + 2.0;
  const double tau_rate = h.prior.spatial.tau2_rate + 0.5 * h.nu.dot((h.d - h.rho * h.w) * h.nu);
  {
    const auto [a, b] = tau2_conditional(h.nu, h.car, h.rho, h.prior.spatial);
    report.check(std::abs(a - tau_shape) < kExactTol && std::abs(b - tau_rate) < kExactTol,
                 str("tau2 conditional (", a, ", ", b, ") vs (", tau_shape, ", ", tau_rate, ")"));
  }

  // rho | nu, tau2 on the grid, normalized against direct determinants.
  const auto& grid = h.car.rho_grid();
  std::vector<double> direct(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Eigen::MatrixXd q = h.d - grid[k] * h.w;
    // D - W is singular; a Cholesky of it can still succeed in floating point.
    direct[k] = grid[k] >= 1.0 ? -INFINITY : 0.5 * log_det(q) - 0.5 * h.nu.dot(q * h.nu) / h.tau2;
  }
  const double direct_norm = log_sum_exp(direct);
  const auto lib = rho_log_weights(h.nu, h.car, h.tau2);
  const double lib_norm = log_sum_exp(lib);
  double worst = 0, rho_mean = 0, rho_sq = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double pd = std::exp(direct[k] - direct_norm), pl = std::exp(lib[k] - lib_norm);
    worst = std::max(worst, std::abs(pd - pl));
    rho_mean += pd * grid[k];
    rho_sq += pd * grid[k] * grid[k];
  }
  report.check(worst < kExactTol, str("rho grid probabilities vs direct determinants, error ", worst));

  // xi | tables, eta: gamma(a + L, b + sum softplus(eta))
  Eigen::VectorXd eta = log_pop + xb + nu_row + f;
  double xi_rate = h.prior.xi_rate;
  for (Eigen::Index i = 0; i < n; ++i) xi_rate -= std::log1p(-1 / (1 + std::exp(-eta[i])));
  {
    const auto [a, b] = base->xi_conditional(7.0);
    report.check(std::abs(a - (h.prior.xi_shape + 7)) < kExactTol && std::abs(b - xi_rate) < kExactTol * xi_rate,
                 str("xi conditional (", a, ", ", b, ") vs (", h.prior.xi_shape + 7, ", ", xi_rate, ")"));
    report.check(max_abs(base->state().eta - eta) < kExactTol, "eta rebuilt from components");
  }
  double crt_mean = 0, crt_var = 0;
  for (auto y : data.count)
    for (long m = 1; m <= y; ++m) {
      const double p = h.xi / (h.xi + static_cast<double>(m) - 1);
      crt_mean += p;
      crt_var += p * (1 - p);
    }
  const double xi_shape_mean = h.prior.xi_shape + crt_mean;

  // Distributional: each update run from the same state under kDraws seeds.
  std::vector<std::vector<double>> beta_d(2), nu_d(4);
  std::vector<double> tau_d, rho_d, xi_d;
  for (int s = 0; s < kDraws; ++s) {
    const auto seed = static_cast<std::uint64_t>(10 + s);
    auto a = prepared(h, seed);
    a->update_beta();
    for (int k = 0; k < 2; ++k) beta_d[k].push_back(a->state().beta[k]);
    a = prepared(h, seed);
    a->update_nu();
    for (int k = 0; k < 4; ++k) nu_d[k].push_back(a->state().spatial.nu[k]);
    a = prepared(h, seed);
    a->update_tau2();
    tau_d.push_back(a->state().spatial.tau2);
    a = prepared(h, seed);
    a->update_rho();
    rho_d.push_back(a->state().spatial.rho);
    a = prepared(h, seed);
    a->update_xi();
    xi_d.push_back(a->state().xi);
  }
  for (int k = 0; k < 2; ++k) check_moments(report, str("beta_", k + 1), beta_d[k], beta_mean[k], beta_cov(k, k));
  for (int k = 0; k < 4; ++k) check_moments(report, str("nu_", k + 1), nu_d[k], nu_mean[k], nu_cov(k, k));
  check_moments(report, "tau2", tau_d, tau_rate / (tau_shape - 1),
                tau_rate * tau_rate / ((tau_shape - 1) * (tau_shape - 1) * (tau_shape - 2)));
  check_moments(report, "rho", rho_d, rho_mean, rho_sq - rho_mean * rho_mean);
  check_moments(report, "xi", xi_d, xi_shape_mean / xi_rate,
                xi_shape_mean / (xi_rate * xi_rate) + crt_var / (xi_rate * xi_rate));

  // log|D - rho W| - log|D| = sum log(1 - rho lambda) on random connected graphs.
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> unif(0, 1);
  double det_worst = 0;
  bool support_ok = true;
  int graphs = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int regions = 2 + trial % 7;
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < regions; ++i) edges.push_back({i, static_cast<int>(unif(gen) * i)});
    for (int i = 0; i < regions; ++i)
      for (int j = i + 1; j < regions; ++j)
        if (unif(gen) < 0.3) edges.push_back({i, j});
    const auto car = CarStructure::from_edges(regions, edges);
    const Eigen::MatrixXd w = car.adjacency();
    const Eigen::MatrixXd dm = w.rowwise().sum().asDiagonal();
    const double log_d = log_det(dm);
    for (int pick = 0; pick < 25; ++pick) {
      const auto k = static_cast<std::size_t>(unif(gen) * static_cast<double>(car.rho_grid().size()));
      const double lib_det = car.log_det_terms()[k];
      if (car.rho_grid()[k] >= 1.0) {
        support_ok = support_ok && std::isinf(lib_det);
        continue;
      }
      const double direct_det = log_det(dm - car.rho_grid()[k] * w);
      if (std::isinf(lib_det) || std::isinf(direct_det)) {
        support_ok = support_ok && std::isinf(lib_det) && std::isinf(direct_det);
        continue;
      }
      det_worst = std::max(det_worst, std::abs(lib_det - (direct_det - log_d)));
    }
    ++graphs;
  }
  report.check(det_worst < kDeterminantTol, str("determinant identity on ", graphs, " graphs, error ", det_worst));
  report.check(support_ok, "determinant terms are -inf exactly where D - rho W is not positive definite");
  return true;
}

}  // namespace acceptance
