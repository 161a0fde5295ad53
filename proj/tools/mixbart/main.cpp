#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mixbart/config.hpp"
#include "mixbart/csv.hpp"
#include "mixbart/dataset.hpp"
#include "mixbart/error.hpp"
#include "mixbart/interpret.hpp"
#include "mixbart/model.hpp"
#include "mixbart/parallel.hpp"
#include "mixbart/simlab.hpp"
#include "mixbart/store.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mixbart;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::string quoted_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + quoted(items[i]);
  return out + "]";
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void write_json_atomic(const fs::path& path, const json& doc) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

json pairs_to_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
  json out = json::array();
  for (const auto& [k, v] : pairs) out.push_back({k, v});
  return out;
}

// Refuse to overwrite outputs produced from different inputs.
void check_resume(const fs::path& manifest_path, const json& inputs, bool force) {
  if (!fs::exists(manifest_path) || force) return;
  json old;
  try {
    std::ifstream in(manifest_path);
    old = json::parse(in);
  } catch (const std::exception&) {
    throw DataError("existing manifest " + manifest_path.string() +
                    " is unreadable; pass --force to overwrite");
  }
  if (!old.contains("inputs") || old["inputs"] != inputs) {
    throw DataError("input digests differ from " + manifest_path.string() +
                    " (different data, adjacency or config); pass --force to overwrite");
  }
}

struct Interval {
  double mean, lo, hi;
};

Interval interval(std::vector<double> v) {
  if (v.empty()) return {std::nan(""), std::nan(""), std::nan("")};
  double sum = 0.0;
  for (double x : v) sum += x;
  std::sort(v.begin(), v.end());
  return {sum / static_cast<double>(v.size()), quantile_sorted(v, 0.025), quantile_sorted(v, 0.975)};
}

std::vector<double> column_of(const RowMatrix& m, Eigen::Index j) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, j);
  return v;
}

// ---- fit ----

struct FitArgs {
  std::string data, adjacency, config, out;
  std::string confounders, exposures;
  std::optional<int> trees;
  bool soft = false, hard = false, sparse = false, dense = false;
  std::optional<long> seed, burn_in, samples, thin;
  std::optional<int> threads;
  bool force = false;
  bool quiet = false;
};

int cmd_fit(const FitArgs& a) {
  KeyValueConfig cfg;
  fs::path base_dir = fs::current_path();
  if (!a.config.empty()) {
    cfg = KeyValueConfig::load(a.config);
    base_dir = fs::absolute(a.config).parent_path();
  }
  if (!a.data.empty()) cfg.set("data", quoted(fs::absolute(a.data).string()));
  if (!a.adjacency.empty()) cfg.set("adjacency", quoted(fs::absolute(a.adjacency).string()));
  if (!a.confounders.empty()) cfg.set("confounders", quoted_list(split_commas(a.confounders)));
  if (!a.exposures.empty()) cfg.set("exposures", quoted_list(split_commas(a.exposures)));
  if (a.trees) cfg.set("trees", std::to_string(*a.trees));
  if (a.soft) cfg.set("soft", "true");
  if (a.hard) cfg.set("soft", "false");
  if (a.sparse) cfg.set("sparse", "true");
  if (a.dense) cfg.set("sparse", "false");
  if (a.seed) cfg.set("seed", std::to_string(*a.seed));
  if (a.burn_in) cfg.set("burn_in", std::to_string(*a.burn_in));
  if (a.samples) cfg.set("samples", std::to_string(*a.samples));
  if (a.thin) cfg.set("thin", std::to_string(*a.thin));

  RunConfig run = make_run_config(cfg, base_dir);
  if (run.data.empty() || run.adjacency.empty())
    throw ConfigError("fit needs a dataset and an adjacency file (--data/--adjacency or config keys)");
  if (run.exposures.empty()) throw ConfigError("no exposure columns declared (key 'exposures')");
  // Flag beats config beats MIXBART_THREADS.
  if (a.threads) run.prior.threads = resolve_threads(*a.threads);
  else if (!cfg.has("threads")) run.prior.threads = resolve_threads(0);

  const fs::path out(a.out);
  const auto echo = echo_run_config(run);
  std::string echo_text;
  for (const auto& [k, v] : echo) echo_text += k + " = " + v + "\n";
  json inputs = {{"data", sha256_file(run.data)},
                 {"adjacency", sha256_file(run.adjacency)},
                 {"config", sha256_hex(echo_text)}};
  check_resume(out / "manifest.json", inputs, a.force);

  PanelDataset data = read_dataset(run.data, run.confounders, run.exposures);
  const auto edges = read_adjacency(run.adjacency, data.region_ids);
  const CarStructure car = CarStructure::from_edges(data.region_count(), edges);

  const auto start = std::chrono::steady_clock::now();
  RunOptions options;
  options.config_echo = echo;
  long last_decile = -1;
  if (!a.quiet) {
    options.progress = [&](long it, long total) {
      const long decile = total > 0 ? (10 * it) / total : 10;
      if (decile != last_decile) {
        last_decile = decile;
        std::cerr << "fit: iteration " << it << "/" << total << "\n";
      }
    };
  }
  PosteriorStore store = run_chain(data, car, run.prior, options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  store.write(out);

  CsvTable summary;
  summary.header = {"parameter", "mean", "lo95", "hi95"};
  auto add = [&](const std::string& name, const std::vector<double>& v) {
    const Interval s = interval(v);
    summary.rows.push_back({name, format_double(s.mean), format_double(s.lo), format_double(s.hi)});
  };
  for (Eigen::Index j = 0; j < store.beta.cols(); ++j)
    add("beta[" + data.confounder_names[static_cast<std::size_t>(j)] + "]", column_of(store.beta, j));
  add("tau2", store.tau2);
  add("rho", store.rho);
  add("xi", store.xi);
  write_csv(out / "summary.csv", summary);

  if (!a.quiet) {
    std::cout << "draws: " << store.draws() << "  (" << std::fixed << std::setprecision(1) << seconds
              << " s)\n";
    std::cout << std::left << std::setw(20) << "parameter" << std::right << std::setw(12) << "mean"
              << std::setw(12) << "lo95" << std::setw(12) << "hi95" << "\n";
    std::cout << std::setprecision(4);
    for (const auto& row : summary.rows) {
      std::cout << std::left << std::setw(20) << row[0] << std::right;
      for (int c = 1; c <= 3; ++c) std::cout << std::setw(12) << parse_double(row[c]);
      std::cout << "\n";
    }
  }

  json diag = json::object();
  for (const auto& [k, v] : store.meta.diagnostics) diag[k] = v;
  json manifest = {{"subcommand", "fit"},
                   {"config", pairs_to_json(echo)},
                   {"inputs", inputs},
                   {"output", out.string()},
                   {"seconds", seconds},
                   {"diagnostics", diag}};
  write_json_atomic(out / "manifest.json", manifest);
  return 0;
}

// ---- shared store loading ----

struct Loaded {
  PosteriorStore store;
  PanelDataset data;
};

Loaded load_store_and_data(const std::string& store_dir, const std::string& data_path) {
  Loaded l;
  l.store = PosteriorStore::read(store_dir);
  l.data = read_dataset(data_path, l.store.meta.confounder_names, l.store.meta.exposure_names);
  check_store_matches(l.store, l.data);
  return l;
}

void write_sidecar(const fs::path& out, const std::string& subcommand, const json& config,
                   const json& inputs, double seconds) {
  json manifest = {{"subcommand", subcommand},
                   {"config", config},
                   {"inputs", inputs},
                   {"output", out.string()},
                   {"seconds", seconds}};
  write_json_atomic(out.string() + ".manifest.json", manifest);
}

// ---- ale ----

struct AleArgs {
  std::string store, data, mode = "ale1", exposure, exposure2, reference = "median", out;
  int bins = 40;
  double trim = 0.95;
  bool main_effects = false;
};

std::vector<double> read_reference(const std::string& path, const PanelDataset& data) {
  const CsvTable t = read_csv(path);
  if (t.rows.size() != 1) throw DataError(path + ": reference file needs exactly one data row");
  std::vector<double> ref(data.exposure_names.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    if (!t.has_column(data.exposure_names[k]))
      throw DataError(path + ": reference lacks exposure '" + data.exposure_names[k] + "'");
    ref[k] = parse_double(t.rows[0][t.column(data.exposure_names[k])], path);
  }
  return ref;
}

int cmd_ale(const AleArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  if (a.bins < 2) throw ConfigError("--bins must be at least 2");
  if (!(a.trim > 0.0 && a.trim <= 1.0)) throw ConfigError("--trim must lie in (0, 1]");
  Loaded l = load_store_and_data(a.store, a.data);
  if (l.store.draws() == 0) throw DataError("store has no draws");
  const RowMatrix& z = l.data.exposures;
  const Surface f = surface_from_store(l.store);

  std::vector<EffectRow> rows;
  if (a.mode == "decile") {
    rows = tidy_curve(decile_mixture_effect(f, z), "decile", "all", nullptr);
  } else {
    if (a.exposure.empty()) throw ConfigError("--exposure is required for --mode " + a.mode);
    const int k = l.data.exposure_index(a.exposure);
    const TrimWindow window = trim_window(z, k, a.trim);
    if (a.mode == "ale1") {
      rows = tidy_ale1(ale_first_order(f, z, k, a.bins), a.exposure, window);
    } else if (a.mode == "ale2") {
      if (a.exposure2.empty()) throw ConfigError("--exposure2 is required for --mode ale2");
      const int k2 = l.data.exposure_index(a.exposure2);
      if (k2 == k) throw ConfigError("--mode ale2 needs two distinct exposures");
      Ale2Result surface = ale_second_order(f, z, k, k2, a.bins);
      if (a.main_effects)
        surface = add_main_effects(surface, ale_first_order(f, z, k, a.bins),
                                   ale_first_order(f, z, k2, a.bins));
      rows = tidy_ale2(surface, a.exposure, a.exposure2, window, trim_window(z, k2, a.trim));
    } else if (a.mode == "pd" || a.mode == "fixed") {
      const std::vector<double> grid = make_ale_grid(z, k, a.bins).boundaries;
      if (a.mode == "pd") {
        rows = tidy_curve(partial_dependence(f, z, k, grid), "pd", a.exposure, &window);
      } else {
        const std::vector<double> ref =
            a.reference == "median" ? median_profile(z) : read_reference(a.reference, l.data);
        rows = tidy_curve(fixed_profile(f, k, grid, ref), "fixed", a.exposure, &window);
      }
    } else {
      throw ConfigError("unknown --mode '" + a.mode + "' (expected ale1, ale2, pd, fixed, decile)");
    }
  }
  write_effect_csv(a.out, rows);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json config = {{"mode", a.mode},       {"exposure", a.exposure}, {"exposure2", a.exposure2},
                 {"bins", a.bins},       {"trim", a.trim},         {"reference", a.reference},
                 {"main_effects", a.main_effects},
                 {"surface", "tree ensemble plus offset; confounders and spatial effects excluded"}};
  json inputs = {{"data", sha256_file(a.data)}, {"meta", sha256_file(fs::path(a.store) / "meta.json")}};
  write_sidecar(a.out, "ale", config, inputs, seconds);
  std::cout << rows.size() << " rows written to " << a.out << "\n";
  return 0;
}

// ---- waic ----

struct WaicArgs {
  std::string store, data, out;
};

int cmd_waic(const WaicArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  Loaded l = load_store_and_data(a.store, a.data);
  const WaicResult w = waic(log_likelihood_matrix(l.store, l.data));
  std::cout << std::setprecision(10) << "waic " << w.waic << "\nlppd " << w.lppd << "\np_waic "
            << w.p_waic << "\n";
  if (!a.out.empty()) {
    CsvTable t;
    t.header = {"row", "region_id", "date_index", "lppd", "p_waic", "waic"};
    for (std::size_t i = 0; i < w.lppd_row.size(); ++i) {
      t.rows.push_back({std::to_string(i), l.data.region_ids[static_cast<std::size_t>(l.data.region[i])],
                        std::to_string(l.data.date[i]), format_double(w.lppd_row[i]),
                        format_double(w.p_waic_row[i]),
                        format_double(-2.0 * (w.lppd_row[i] - w.p_waic_row[i]))});
    }
    write_csv(a.out, t);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json inputs = {{"data", sha256_file(a.data)}, {"meta", sha256_file(fs::path(a.store) / "meta.json")}};
    write_sidecar(a.out, "waic", {{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic}}, inputs,
                  seconds);
  }
  return 0;
}

// ---- simulate ----

struct SimulateArgs {
  std::string config, out;
  std::optional<int> replicates, threads;
  std::optional<long> seed, burn_in, samples, thin;
  bool force = false, quiet = false;
};

int cmd_simulate(const SimulateArgs& a) {
  KeyValueConfig cfg;
  if (!a.config.empty()) cfg = KeyValueConfig::load(a.config);
  if (a.replicates) cfg.set("replicates", std::to_string(*a.replicates));
  if (a.seed) cfg.set("seed", std::to_string(*a.seed));
  if (a.burn_in) cfg.set("burn_in", std::to_string(*a.burn_in));
  if (a.samples) cfg.set("samples", std::to_string(*a.samples));
  if (a.thin) cfg.set("thin", std::to_string(*a.thin));
  StudyConfig study = make_study_config(cfg);
  if (a.threads) study.threads = resolve_threads(*a.threads);
  else if (!cfg.has("threads")) study.threads = resolve_threads(0);
  study.validate();

  std::string cfg_text;
  for (const auto& [k, v] : cfg.entries()) cfg_text += k + " = " + v + "\n";
  json inputs = {{"config", sha256_hex(cfg_text)}};
  const fs::path out(a.out);
  check_resume(out / "manifest.json", inputs, a.force);
  fs::create_directories(out);

  const auto start = std::chrono::steady_clock::now();
  std::function<void(const std::string&)> log;
  if (!a.quiet) log = [](const std::string& line) { std::cerr << line << "\n"; };
  const auto results = run_study(study, log);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_metric_table(out / "metrics.csv", results);
  write_parameter_table(out / "parameters.csv", results);
  json manifest = {{"subcommand", "simulate"},
                   {"config", pairs_to_json(cfg.entries())},
                   {"inputs", inputs},
                   {"output", out.string()},
                   {"seconds", seconds},
                   {"replicates", study.replicates},
                   {"settings", results.size()}};
  write_json_atomic(out / "manifest.json", manifest);
  if (!a.quiet) std::cout << "wrote " << (out / "metrics.csv").string() << " and parameters.csv\n";
  return 0;
}

// ---- generate ----

struct GenerateArgs {
  std::string out;
  int rows = 2, cols = 2, days = 20, exposures = 5;
  long seed = 1;
};

int cmd_generate(const GenerateArgs& a) {
  SimConfig sim;
  sim.lattice_rows = a.rows;
  sim.lattice_cols = a.cols;
  sim.days = a.days;
  sim.exposures = a.exposures;
  sim.validate();
  RngStream rng(static_cast<std::uint64_t>(a.seed), 0);
  const SimReplicate rep = generate_replicate(sim, rng);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_dataset(out / "data.csv", rep.data);
  write_adjacency(out / "adjacency.txt", rep.car, rep.data.region_ids);

  CsvTable truth;
  truth.header = {"row", "f", "eta"};
  for (Eigen::Index i = 0; i < rep.truth.f.size(); ++i)
    truth.rows.push_back({std::to_string(i), format_double(rep.truth.f(i)), format_double(rep.truth.eta(i))});
  write_csv(out / "truth.csv", truth);

  std::ofstream cfg(out / "config.toml");
  cfg << "data = \"data.csv\"\n"
      << "adjacency = \"adjacency.txt\"\n"
      << "confounders = " << quoted_list(rep.data.confounder_names) << "\n"
      << "exposures = " << quoted_list(rep.data.exposure_names) << "\n"
      << "trees = 10\nsoft = true\nsparse = true\n"
      << "burn_in = 200\nsamples = 100\nthin = 2\nseed = 1\n";
  if (!cfg) throw DataError("cannot write config.toml");
  std::cout << "wrote " << rep.data.rows() << " rows to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Negative-binomial soft-BART mixture models with proper-CAR spatial effects"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run one MCMC chain and write a posterior store");
  fit_cmd->add_option("--data", fit.data, "Dataset CSV");
  fit_cmd->add_option("--adjacency", fit.adjacency, "Edge list, one region pair per line");
  fit_cmd->add_option("--config", fit.config, "Run config (key = value)");
  fit_cmd->add_option("--out", fit.out, "Store directory")->required();
  fit_cmd->add_option("--confounders", fit.confounders, "Comma-separated confounder columns");
  fit_cmd->add_option("--exposures", fit.exposures, "Comma-separated exposure columns");
  fit_cmd->add_option("--trees", fit.trees, "Number of trees");
  auto* soft = fit_cmd->add_flag("--soft", fit.soft, "Soft (logistic) gating");
  auto* hard = fit_cmd->add_flag("--hard", fit.hard, "Hard split rules");
  soft->excludes(hard);
  auto* sparse = fit_cmd->add_flag("--sparse", fit.sparse, "Sparse Dirichlet splitting prior");
  auto* dense = fit_cmd->add_flag("--dense", fit.dense, "Uniform split probabilities");
  sparse->excludes(dense);
  fit_cmd->add_option("--seed", fit.seed);
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (overrides MIXBART_THREADS)");
  fit_cmd->add_option("--burn-in", fit.burn_in);
  fit_cmd->add_option("--samples", fit.samples);
  fit_cmd->add_option("--thin", fit.thin);
  fit_cmd->add_flag("--force", fit.force, "Overwrite a store built from other inputs");
  fit_cmd->add_flag("--quiet", fit.quiet);

  AleArgs ale;
  auto* ale_cmd = app.add_subcommand("ale", "Exposure-response summaries from a store");
  ale_cmd->add_option("--store", ale.store)->required();
  ale_cmd->add_option("--data", ale.data)->required();
  ale_cmd->add_option("--mode", ale.mode, "ale1, ale2, pd, fixed or decile")->capture_default_str();
  ale_cmd->add_option("--exposure", ale.exposure);
  ale_cmd->add_option("--exposure2", ale.exposure2);
  ale_cmd->add_option("--bins", ale.bins)->capture_default_str();
  ale_cmd->add_option("--trim", ale.trim, "Central fraction displayed")->capture_default_str();
  ale_cmd->add_option("--reference", ale.reference, "median or a one-row CSV of exposure values")
      ->capture_default_str();
  ale_cmd->add_flag("--main-effects", ale.main_effects, "Add first-order curves to ale2 output");
  ale_cmd->add_option("--out", ale.out)->required();

  WaicArgs wa;
  auto* waic_cmd = app.add_subcommand("waic", "WAIC of a fitted store");
  waic_cmd->add_option("--store", wa.store)->required();
  waic_cmd->add_option("--data", wa.data)->required();
  waic_cmd->add_option("--out", wa.out, "Per-row contributions CSV");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the simulation study");
  sim_cmd->add_option("--config", sim.config);
  sim_cmd->add_option("--out", sim.out)->required();
  sim_cmd->add_option("--replicates", sim.replicates);
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--threads", sim.threads);
  sim_cmd->add_option("--burn-in", sim.burn_in);
  sim_cmd->add_option("--samples", sim.samples);
  sim_cmd->add_option("--thin", sim.thin);
  sim_cmd->add_flag("--force", sim.force);
  sim_cmd->add_flag("--quiet", sim.quiet);

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write one simulated dataset");
  gen_cmd->add_option("--out", gen.out)->required();
  gen_cmd->add_option("--rows", gen.rows)->capture_default_str();
  gen_cmd->add_option("--cols", gen.cols)->capture_default_str();
  gen_cmd->add_option("--days", gen.days)->capture_default_str();
  gen_cmd->add_option("--exposures", gen.exposures)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*ale_cmd) return cmd_ale(ale);
    if (*waic_cmd) return cmd_waic(wa);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*gen_cmd) return cmd_generate(gen);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
