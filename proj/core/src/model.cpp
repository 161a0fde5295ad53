#include "mixbart/model.hpp"

#include <cmath>
#include <string>

#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"
#include "mixbart/parallel.hpp"

namespace mixbart {

namespace {

enum BlockTag : int { kPg = 1, kBeta, kNu, kTau2, kRho, kTrees, kXi, kTagCount };

}  // namespace

Eigen::VectorXd PgDraw::working_response() const { return kappa.cwiseQuotient(omega); }

Eigen::VectorXd PriorConfig::resolved_beta_mean(int p) const {
  if (beta_mean.size() == 0) return Eigen::VectorXd::Zero(p);
  if (beta_mean.size() != p) {
    throw ConfigError("beta_prior_mean has " + std::to_string(beta_mean.size()) +
                      " entries, expected " + std::to_string(p));
  }
  return beta_mean;
}

Eigen::MatrixXd PriorConfig::resolved_beta_covariance(int p) const {
  if (beta_covariance.size() == 0) return beta_variance * Eigen::MatrixXd::Identity(p, p);
  if (beta_covariance.rows() != p || beta_covariance.cols() != p) {
    throw ConfigError("beta prior covariance must be " + std::to_string(p) + "x" + std::to_string(p));
  }
  return beta_covariance;
}

void PriorConfig::validate(int p) const {
  if (!(beta_variance > 0.0)) throw ConfigError("beta_prior_variance must be positive");
  const Eigen::MatrixXd cov = resolved_beta_covariance(p);
  resolved_beta_mean(p);
  if (p > 0) {
    if (!cov.isApprox(cov.transpose())) throw ConfigError("beta prior covariance is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("beta prior covariance is not positive definite");
  }
  if (!(spatial.tau2_shape > 0.0) || !(spatial.tau2_rate > 0.0)) {
    throw ConfigError("tau2_shape and tau2_rate must be positive");
  }
  if (!(xi_shape > 0.0) || !(xi_rate > 0.0)) throw ConfigError("xi_shape and xi_rate must be positive");
  if (!(initial_xi > 0.0)) throw ConfigError("initial xi must be positive");
  if (schedule.burn_in < 0 || schedule.samples < 0 || schedule.thin < 1) {
    throw ConfigError("burn_in and samples must be >= 0 and thin >= 1");
  }
  if (pin_rho && !(*pin_rho >= 0.0 && *pin_rho <= 1.0)) throw ConfigError("pin_rho must lie in [0, 1]");
  bart.validate();
}

double default_f_offset(const PanelDataset& data, double initial_xi) {
  double total_count = 0.0;
  for (auto y : data.count) total_count += static_cast<double>(y);
  const double total_pop = data.population.sum();
  return std::log((total_count + 0.5) / total_pop) - std::log(initial_xi);
}

Sampler::Sampler(const PanelDataset& data, const CarStructure& car, PriorConfig prior)
    : data_(data),
      car_(car),
      prior_(std::move(prior)),
      ensemble_(prior_.bart, data.ranges(), data.rows()),
      rng_(prior_.seed, 0) {
  data_.validate();
  if (car_.region_count() != data_.region_count()) {
    throw DataError("adjacency has " + std::to_string(car_.region_count()) +
                    " regions but the dataset has " + std::to_string(data_.region_count()));
  }
  const int p = static_cast<int>(data_.confounders.cols());
  prior_.validate(p);
  log_pop_ = data_.log_population();
  beta_mean_ = prior_.resolved_beta_mean(p);
  beta_prior_precision_ = prior_.resolved_beta_covariance(p).inverse();

  state_.beta = Eigen::VectorXd::Zero(p);
  state_.spatial.nu = Eigen::VectorXd::Zero(car_.region_count());
  state_.spatial.tau2 = 1.0;
  state_.spatial.rho = prior_.pin_rho ? *prior_.pin_rho : 0.5;
  state_.spatial.rho = car_.rho_grid()[car_.grid_index(state_.spatial.rho)];
  if (prior_.pin_rho) state_.spatial.rho = *prior_.pin_rho;
  state_.xi = prior_.initial_xi;
  state_.f_offset = prior_.f_offset ? *prior_.f_offset : default_f_offset(data_, prior_.initial_xi);
  const auto n = static_cast<Eigen::Index>(data_.rows());
  pg_.omega = Eigen::VectorXd::Constant(n, 0.25);
  pg_.kappa = Eigen::VectorXd::Zero(n);
  recompute_eta();
}

RngStream Sampler::block_stream(int tag) const {
  return rng_.substream(static_cast<std::uint64_t>(iteration_) * kTagCount + tag, 0);
}

RngStream Sampler::row_stream(int tag, std::size_t row) const {
  return rng_.substream(static_cast<std::uint64_t>(iteration_) * kTagCount + tag, row + 1);
}

void Sampler::mark(std::string_view block) {
  if (trace_) trace_(block);
}

Eigen::VectorXd Sampler::f_values() const {
  return ensemble_.fit().array() + state_.f_offset;
}

void Sampler::recompute_eta() {
  const auto n = static_cast<Eigen::Index>(data_.rows());
  xb_ = data_.confounders.cols() > 0 ? Eigen::VectorXd(data_.confounders * state_.beta)
                                     : Eigen::VectorXd::Zero(n);
  state_.eta.resize(n);
  const Eigen::VectorXd& fit = ensemble_.fit();
  for (Eigen::Index r = 0; r < n; ++r) {
    const double value = log_pop_[r] + xb_[r] + state_.f_offset + fit[r] +
                         state_.spatial.nu[data_.region[static_cast<std::size_t>(r)]];
    if (std::isnan(value)) {
      throw NumericalError("NaN in linear predictor at iteration " + std::to_string(iteration_) +
                           ", row " + std::to_string(r));
    }
    state_.eta[r] = value;
  }
}

void Sampler::pg_augment() {
  mark("pg");
  const std::size_t n = data_.rows();
  const double xi = state_.xi;
  parallel_for(n, prior_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      RngStream rng = row_stream(kPg, r);
      const auto i = static_cast<Eigen::Index>(r);
      const double y = static_cast<double>(data_.count[r]);
      const double omega = draw_polya_gamma({y + xi, state_.eta[i]}, rng);
      pg_.omega[i] = std::max(omega, kOmegaFloor);
      pg_.kappa[i] = 0.5 * (y - xi);
    }
  });
}

GaussianCanonical Sampler::beta_conditional() const {
  // omega * r_beta = kappa - omega * (eta - X beta)
  const Eigen::VectorXd weighted =
      pg_.kappa - pg_.omega.cwiseProduct(state_.eta - xb_);
  const Eigen::MatrixXd& x = data_.confounders;
  GaussianCanonical out;
  out.precision = beta_prior_precision_ + x.transpose() * pg_.omega.asDiagonal() * x;
  out.linear = beta_prior_precision_ * beta_mean_ + x.transpose() * weighted;
  return out;
}

void Sampler::update_beta() {
  mark("beta");
  if (data_.confounders.cols() > 0) {
    const auto conditional = beta_conditional();
    RngStream rng = block_stream(kBeta);
    state_.beta =
        draw_mvn_canonical(conditional.precision, conditional.linear, rng, "beta posterior precision")
            .value;
  }
  recompute_eta();
}

GaussianCanonical Sampler::nu_conditional() const {
  const int regions = car_.region_count();
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(regions);
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(regions);
  for (std::size_t r = 0; r < data_.rows(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const int region = data_.region[r];
    const double nu = state_.spatial.nu[region];
    weight[region] += pg_.omega[i];
    weighted[region] += pg_.kappa[i] - pg_.omega[i] * (state_.eta[i] - nu);
  }
  return mixbart::nu_conditional(car_, state_.spatial.tau2, state_.spatial.rho, weight, weighted);
}

void Sampler::update_nu() {
  mark("nu");
  const auto conditional = nu_conditional();
  RngStream rng = block_stream(kNu);
  state_.spatial.nu =
      draw_mvn_canonical(conditional.precision, conditional.linear, rng, "nu posterior precision").value;
  recompute_eta();
}

void Sampler::update_tau2() {
  mark("tau2");
  RngStream rng = block_stream(kTau2);
  state_.spatial.tau2 =
      mixbart::update_tau2(state_.spatial.nu, car_, state_.spatial.rho, prior_.spatial, rng);
  recompute_eta();
}

void Sampler::update_rho() {
  mark("rho");
  if (!prior_.pin_rho) {
    RngStream rng = block_stream(kRho);
    state_.spatial.rho = mixbart::update_rho(state_.spatial.nu, car_, state_.spatial.tau2, rng);
  }
  recompute_eta();
}

void Sampler::update_trees() {
  mark("trees");
  const Eigen::VectorXd base = pg_.kappa - pg_.omega.cwiseProduct(state_.eta - ensemble_.fit());
  RngStream rng = block_stream(kTrees);
  ensemble_.sweep(data_.exposures, pg_.omega, base, rng);
  ensemble_.update_hyperparameters(rng);
  recompute_eta();
}

std::pair<double, double> Sampler::xi_conditional(double crt_total) const {
  double rate = prior_.xi_rate;
  for (Eigen::Index r = 0; r < state_.eta.size(); ++r) rate += softplus(state_.eta[r]);
  return {prior_.xi_shape + crt_total, rate};
}

void Sampler::update_xi() {
  mark("xi");
  const std::size_t n = data_.rows();
  std::vector<std::int64_t> tables(n, 0);
  const double xi = state_.xi;
  parallel_for(n, prior_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      if (data_.count[r] == 0) continue;
      RngStream rng = row_stream(kXi, r);
      tables[r] = draw_crt({xi, data_.count[r]}, rng);
    }
  });
  double total = 0.0;
  for (auto t : tables) total += static_cast<double>(t);
  const auto [shape, rate] = xi_conditional(total);
  RngStream rng = block_stream(kXi);
  state_.xi = draw_gamma(shape, rate, rng);
  recompute_eta();
}

void Sampler::iterate() {
  ++iteration_;
  pg_augment();
  update_beta();
  update_nu();
  update_tau2();
  update_rho();
  update_trees();
  update_xi();
}

namespace {

void append_row(RowMatrix& m, long draw, const Eigen::VectorXd& v) {
  m.row(draw) = v.transpose();
}

}  // namespace

PosteriorStore run_chain(const PanelDataset& data, const CarStructure& car,
                         const PriorConfig& prior, const RunOptions& options) {
  Sampler sampler(data, car, prior);
  PosteriorStore store;
  StoreMeta& meta = store.meta;
  meta.seed = prior.seed;
  meta.burn_in = prior.schedule.burn_in;
  meta.samples = prior.schedule.samples;
  meta.thin = prior.schedule.thin;
  meta.iterations = prior.schedule.total();
  meta.rows = static_cast<long>(data.rows());
  meta.confounder_names = data.confounder_names;
  meta.exposure_names = data.exposure_names;
  meta.region_ids = data.region_ids;
  meta.config_echo = options.config_echo;
  std::string canonical;
  for (const auto& [k, v] : options.config_echo) canonical += k + "=" + v + "\n";
  meta.config_hash = sha256_hex(canonical);
  meta.f_offset = sampler.state().f_offset;
  meta.soft = prior.bart.soft;
  meta.sparse = prior.bart.sparse;
  meta.trees = prior.bart.trees;

  const long draws = prior.schedule.samples;
  const int p = static_cast<int>(data.confounders.cols());
  const int q = static_cast<int>(data.exposures.cols());
  store.beta.resize(draws, p);
  store.nu.resize(draws, car.region_count());
  store.split_probs.resize(draws, q);
  store.eta.resize(draws, prior.store_eta ? static_cast<Eigen::Index>(data.rows()) : 0);
  store.tau2.reserve(draws);
  store.rho.reserve(draws);
  store.xi.reserve(draws);
  store.trees.reserve(draws);

  const long total = prior.schedule.total();
  long kept = 0;
  for (long it = 1; it <= total; ++it) {
    sampler.iterate();
    if (it > prior.schedule.burn_in && (it - prior.schedule.burn_in) % prior.schedule.thin == 0) {
      const ChainState& s = sampler.state();
      append_row(store.beta, kept, s.beta);
      append_row(store.nu, kept, s.spatial.nu);
      const auto probs = sampler.ensemble().split_probabilities().probs();
      for (int k = 0; k < q; ++k) store.split_probs(kept, k) = probs[k];
      if (prior.store_eta) append_row(store.eta, kept, s.eta);
      store.tau2.push_back(s.spatial.tau2);
      store.rho.push_back(s.spatial.rho);
      store.xi.push_back(s.xi);
      store.trees.push_back(sampler.ensemble().trees());
      ++kept;
    }
    if (options.progress) options.progress(it, total);
  }

  const SweepStats& stats = sampler.ensemble().stats();
  auto rate = [](long accepted, long proposed) {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  };
  meta.diagnostics = {
      {"structure_acceptance", rate(stats.structure_accepts, stats.structure_proposals)},
      {"grow_acceptance", rate(stats.accepted_moves[0], stats.moves[0])},
      {"prune_acceptance", rate(stats.accepted_moves[1], stats.moves[1])},
      {"change_acceptance", rate(stats.accepted_moves[2], stats.moves[2])},
      {"bandwidth_acceptance", rate(stats.bandwidth_accepts, stats.bandwidth_proposals)},
  };
  return store;
}

}  // namespace mixbart
