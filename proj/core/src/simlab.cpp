#include "mixbart/simlab.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "mixbart/csv.hpp"
#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"
#include "mixbart/interpret.hpp"

namespace mixbart {

Eigen::MatrixXd default_correlation(int exposures) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(exposures, exposures);
  const int core = std::min(exposures, 4);
  for (int a = 0; a < core; ++a) {
    for (int b = 0; b < core; ++b) {
      if (a != b) sigma(a, b) = 0.4;
    }
  }
  if (exposures >= 5) {
    for (int a = 0; a < 4; ++a) sigma(a, 4) = sigma(4, a) = -0.2;
  }
  return sigma;
}

Eigen::MatrixXd SimConfig::resolved_correlation() const {
  return correlation.size() == 0 ? default_correlation(exposures) : correlation;
}

void SimConfig::validate() const {
  validate_layout();
  if (exposures < 5) throw ConfigError("the benchmark surface needs at least 5 exposures");
}

void SimConfig::validate_layout() const {
  if (lattice_rows < 1 || lattice_cols < 1 || lattice_rows * lattice_cols < 2) {
    throw ConfigError("the lattice needs at least two regions");
  }
  if (days < 1) throw ConfigError("days must be >= 1");
  if (exposures < 1) throw ConfigError("exposures must be >= 1");
  if (beta.size() != 4) throw ConfigError("true beta must have 4 components");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("true rho must lie in [0, 1)");
  if (!(tau2 > 0.0) || !(xi > 0.0)) throw ConfigError("true tau2 and xi must be positive");
  if (!(population_min > 0.0 && population_max >= population_min)) {
    throw ConfigError("population range is invalid");
  }
  const Eigen::MatrixXd sigma = resolved_correlation();
  if (sigma.rows() != exposures || sigma.cols() != exposures) {
    throw ConfigError("exposure correlation must be " + std::to_string(exposures) + "x" +
                      std::to_string(exposures));
  }
  if (!sigma.isApprox(sigma.transpose())) throw ConfigError("exposure correlation is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw ConfigError("exposure correlation is not positive definite");
}

std::vector<std::pair<int, int>> lattice_edges(int rows, int cols) {
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int id = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(id, id + 1);
      if (r + 1 < rows) edges.emplace_back(id, id + cols);
    }
  }
  return edges;
}

double friedman_surface(std::span<const double> z) {
  const double f0 = 10.0 * std::sin(z[0] * z[1]) + 20.0 * (z[2] - 0.5) * (z[2] - 0.5) +
                    10.0 * z[3] + 5.0 * z[4];
  return -10.0 + f0 / 5.0;
}

SimReplicate generate_replicate(const SimConfig& config, RngStream& rng) {
  config.validate();
  return generate_replicate(config, friedman_surface, rng);
}

SimReplicate generate_replicate(const SimConfig& config,
                                const std::function<double(std::span<const double>)>& surface,
                                RngStream& rng) {
  config.validate_layout();
  const int regions = config.regions();
  const auto edges = lattice_edges(config.lattice_rows, config.lattice_cols);
  SimReplicate out{PanelDataset{}, CarStructure::from_edges(regions, edges), SimTruth{}};
  PanelDataset& data = out.data;
  const int q = config.exposures;
  const long n = static_cast<long>(regions) * config.days;

  for (int i = 0; i < regions; ++i) data.region_ids.push_back("r" + std::to_string(i + 1));
  for (int k = 0; k < 4; ++k) data.confounder_names.push_back("x_" + std::to_string(k + 1));
  for (int k = 0; k < q; ++k) data.exposure_names.push_back("z" + std::to_string(k + 1));

  std::vector<double> region_pop(regions);
  const double log_lo = std::log(config.population_min);
  const double log_hi = std::log(config.population_max);
  for (int i = 0; i < regions; ++i) region_pop[i] = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());

  data.region.resize(n);
  data.date.resize(n);
  data.count.resize(n);
  data.population.resize(n);
  data.confounders.resize(n, 4);
  data.exposures.resize(n, q);
  for (long r = 0; r < n; ++r) {
    data.region[r] = static_cast<int>(r / config.days);
    data.date[r] = r % config.days + 1;
    data.population[r] = region_pop[data.region[r]];
  }
  for (long r = 0; r < n; ++r) {
    for (int k = 0; k < 4; ++k) data.confounders(r, k) = rng.uniform();
  }
  const Eigen::MatrixXd chol = config.resolved_correlation().llt().matrixL();
  Eigen::VectorXd e(q);
  for (long r = 0; r < n; ++r) {
    for (int k = 0; k < q; ++k) e[k] = draw_standard_normal(rng);
    data.exposures.row(r) = (chol * e).transpose();
  }
  for (int k = 0; k < q; ++k) {
    const double lo = data.exposures.col(k).minCoeff();
    const double hi = data.exposures.col(k).maxCoeff();
    data.exposures.col(k) = (data.exposures.col(k).array() - lo) / (hi - lo);
    // Pin the extremes exactly.
    for (long r = 0; r < n; ++r) data.exposures(r, k) = std::clamp(data.exposures(r, k), 0.0, 1.0);
  }

  SimTruth& truth = out.truth;
  truth.beta = config.beta;
  truth.rho = config.rho;
  truth.tau2 = config.tau2;
  truth.xi = config.xi;
  truth.nu = draw_mvn_precision(Eigen::VectorXd::Zero(regions),
                                out.car.precision(config.rho) / config.tau2, rng, "pCAR precision");
  truth.f.resize(n);
  truth.eta.resize(n);
  for (long r = 0; r < n; ++r) {
    const std::span<const double> z(data.exposures.row(r).data(), q);
    truth.f[r] = surface(z);
    truth.eta[r] = std::log(data.population[r]) + data.confounders.row(r).dot(config.beta) +
                   truth.f[r] + truth.nu[data.region[r]];
    data.count[r] = draw_negative_binomial(config.xi, truth.eta[r], rng);
  }
  data.validate();
  return out;
}

Eigen::MatrixXd f_draws(const PosteriorStore& store, const RowMatrix& z) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(store.draws()), z.rows());
  for (std::size_t m = 0; m < store.draws(); ++m) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      out(static_cast<Eigen::Index>(m), r) =
          store.predict_f(m, std::span<const double>(z.row(r).data(), z.cols()));
    }
  }
  return out;
}

namespace {

ParameterScore score_parameter(std::string name, double truth, std::vector<double> draws) {
  ParameterScore p;
  p.name = std::move(name);
  p.truth = truth;
  double sum = 0.0;
  for (double v : draws) sum += v;
  p.mean = sum / static_cast<double>(draws.size());
  std::sort(draws.begin(), draws.end());
  p.lo = quantile_sorted(draws, 0.025);
  p.hi = quantile_sorted(draws, 0.975);
  return p;
}

}  // namespace

ReplicateScore score_replicate(const PosteriorStore& store, const SimReplicate& replicate) {
  if (store.draws() == 0) throw DomainError("cannot score an empty posterior store");
  const auto& data = replicate.data;
  if (store.meta.rows != static_cast<long>(data.rows())) {
    throw DataError("store and replicate have different row counts");
  }
  const Eigen::MatrixXd fd = f_draws(store, data.exposures);
  const Eigen::Index n = fd.cols();
  ReplicateScore score;
  std::vector<double> column(fd.rows());
  double covered = 0.0;
  double bias = 0.0;
  double sq = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index m = 0; m < fd.rows(); ++m) column[m] = fd(m, r);
    const auto p = score_parameter("f", replicate.truth.f[r], column);
    bias += p.mean - p.truth;
    sq += (p.mean - p.truth) * (p.mean - p.truth);
    covered += p.covered() ? 1.0 : 0.0;
  }
  score.bias = bias / static_cast<double>(n);
  score.rmse = std::sqrt(sq / static_cast<double>(n));
  score.coverage = covered / static_cast<double>(n);

  auto column_of = [](const RowMatrix& m, Eigen::Index c) {
    std::vector<double> v(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m(i, c);
    return v;
  };
  for (Eigen::Index k = 0; k < store.beta.cols(); ++k) {
    score.parameters.push_back(score_parameter("beta_" + std::to_string(k + 1), replicate.truth.beta[k],
                                               column_of(store.beta, k)));
  }
  score.parameters.push_back(score_parameter("rho", replicate.truth.rho, store.rho));
  score.parameters.push_back(score_parameter("tau2", replicate.truth.tau2, store.tau2));
  score.parameters.push_back(score_parameter("xi", replicate.truth.xi, store.xi));
  for (Eigen::Index i = 0; i < store.nu.cols(); ++i) {
    score.parameters.push_back(score_parameter("nu", replicate.truth.nu[i], column_of(store.nu, i)));
  }
  return score;
}

Metric summarize_metric(std::span<const double> values) {
  Metric m;
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.mcse = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  }
  return m;
}

void StudyConfig::validate() const {
  sim.validate();
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (trees.empty() || soft.empty() || sparse.empty()) throw ConfigError("empty settings grid");
  for (int t : trees) {
    if (t < 1) throw ConfigError("infeasible grid: trees must be >= 1, got " + std::to_string(t));
  }
  if (prior.schedule.samples < 1) throw ConfigError("simulation fits need samples >= 1");
}

std::vector<SettingResult> run_study(const StudyConfig& config,
                                     const std::function<void(const std::string&)>& log) {
  config.validate();
  std::vector<SettingResult> results;
  for (int t : config.trees) {
    for (bool soft : config.soft) {
      for (bool sparse : config.sparse) {
        SettingResult s;
        s.trees = t;
        s.soft = soft;
        s.sparse = sparse;
        s.replicates.resize(config.replicates);
        results.push_back(std::move(s));
      }
    }
  }
  std::mutex log_mutex;
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    while (true) {
      const int rep = next.fetch_add(1);
      if (rep >= config.replicates) return;
      try {
        RngStream data_rng = RngStream(config.seed, 1).substream(static_cast<std::uint64_t>(rep));
        const SimReplicate replicate = generate_replicate(config.sim, data_rng);
        for (std::size_t s = 0; s < results.size(); ++s) {
          PriorConfig prior = config.prior;
          prior.bart.trees = results[s].trees;
          prior.bart.soft = results[s].soft;
          prior.bart.sparse = results[s].sparse;
          prior.seed = mix64(config.seed ^ mix64(static_cast<std::uint64_t>(rep) * 1000 + s));
          prior.threads = 1;
          prior.store_eta = false;
          const PosteriorStore store = run_chain(replicate.data, replicate.car, prior);
          results[s].replicates[rep] = score_replicate(store, replicate);
          if (log) {
            std::lock_guard lock(log_mutex);
            log("replicate " + std::to_string(rep + 1) + " T=" + std::to_string(results[s].trees) +
                (results[s].soft ? " soft" : " hard") + (results[s].sparse ? " sparse" : " dense") +
                ": rmse " + format_double(results[s].replicates[rep].rmse));
          }
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int threads = std::max(1, std::min(config.threads, config.replicates));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

void write_metric_table(const std::filesystem::path& path, const std::vector<SettingResult>& results) {
  CsvTable table;
  table.header = {"T", "soft", "sparse", "bias", "bias_mcse", "coverage", "coverage_mcse", "rmse", "rmse_mcse"};
  for (const auto& s : results) {
    std::vector<double> bias, coverage, rmse;
    for (const auto& r : s.replicates) {
      bias.push_back(r.bias);
      coverage.push_back(r.coverage);
      rmse.push_back(r.rmse);
    }
    const Metric b = summarize_metric(bias), c = summarize_metric(coverage), e = summarize_metric(rmse);
    table.rows.push_back({std::to_string(s.trees), s.soft ? "true" : "false", s.sparse ? "true" : "false",
                          format_double(b.mean), format_double(b.mcse), format_double(c.mean),
                          format_double(c.mcse), format_double(e.mean), format_double(e.mcse)});
  }
  write_csv(path, table);
}

void write_parameter_table(const std::filesystem::path& path,
                           const std::vector<SettingResult>& results) {
  CsvTable table;
  table.header = {"T", "soft", "sparse", "parameter", "truth", "bias", "bias_mcse", "coverage", "coverage_mcse"};
  for (const auto& s : results) {
    // parameter name -> per-replicate (bias, coverage) averaged within replicate
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
    std::map<std::string, double> truth;
    for (const auto& r : s.replicates) {
      std::map<std::string, std::pair<double, double>> acc;
      std::map<std::string, int> count;
      for (const auto& p : r.parameters) {
        if (!values.count(p.name) && !acc.count(p.name)) order.push_back(p.name);
        acc[p.name].first += p.mean - p.truth;
        acc[p.name].second += p.covered() ? 1.0 : 0.0;
        ++count[p.name];
        truth[p.name] = p.name == "nu" ? std::nan("") : p.truth;
      }
      for (const auto& [name, v] : acc) {
        values[name].first.push_back(v.first / count[name]);
        values[name].second.push_back(v.second / count[name]);
      }
    }
    for (const auto& name : order) {
      const Metric b = summarize_metric(values[name].first);
      const Metric c = summarize_metric(values[name].second);
      table.rows.push_back({std::to_string(s.trees), s.soft ? "true" : "false", s.sparse ? "true" : "false",
                            name, format_double(truth[name]), format_double(b.mean), format_double(b.mcse),
                            format_double(c.mean), format_double(c.mcse)});
    }
  }
  write_csv(path, table);
}

}  // namespace mixbart
