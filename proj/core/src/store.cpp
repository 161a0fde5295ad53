#include "mixbart/store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"

namespace mixbart {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

void put_double(std::ostream& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char bytes[8];
  std::memcpy(bytes, &bits, 8);
  out.write(bytes, 8);
}

double get_double(const char* bytes) {
  std::uint64_t bits;
  std::memcpy(&bits, bytes, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

void write_binary(const std::filesystem::path& path, const double* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < count; ++i) put_double(out, data[i]);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::vector<double> read_binary(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != expected * 8) {
    throw DataError("'" + path.string() + "' holds " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected * 8));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) out[i] = get_double(bytes.data() + 8 * i);
  return out;
}

RowMatrix to_matrix(const std::vector<double>& values, long rows, long cols) {
  RowMatrix m(rows, cols);
  if (!values.empty()) std::memcpy(m.data(), values.data(), values.size() * sizeof(double));
  return m;
}

json tree_to_json(const SoftTree& tree) {
  json nodes = json::array();
  for (const FlatNode& f : tree.preorder()) {
    nodes.push_back(json::array({f.leaf ? 1 : 0, f.var, f.cut, f.value}));
  }
  return json{{"bandwidth", tree.bandwidth()}, {"nodes", std::move(nodes)}};
}

SoftTree tree_from_json(const json& j) {
  std::vector<FlatNode> flat;
  for (const auto& node : j.at("nodes")) {
    FlatNode f;
    f.leaf = node.at(0).get<int>() == 1;
    f.var = node.at(1).get<int>();
    f.cut = node.at(2).get<double>();
    f.value = node.at(3).get<double>();
    flat.push_back(f);
  }
  return SoftTree::from_preorder(flat, j.at("bandwidth").get<double>());
}

}  // namespace

double PosteriorStore::predict_f(std::size_t m, std::span<const double> z) const {
  return meta.f_offset + predict_ensemble(trees.at(m), z);
}

Eigen::VectorXd PosteriorStore::reconstruct_eta(std::size_t m, const PanelDataset& data) const {
  const auto n = static_cast<Eigen::Index>(data.rows());
  Eigen::VectorXd eta(n);
  const Eigen::VectorXd b = beta.row(static_cast<Eigen::Index>(m)).transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    const double xb = data.confounders.cols() > 0 ? data.confounders.row(r).dot(b) : 0.0;
    const std::span<const double> z(data.exposures.row(r).data(), data.exposures.cols());
    eta[r] = std::log(data.population[r]) + xb + predict_f(m, z) +
             nu(static_cast<Eigen::Index>(m), data.region[static_cast<std::size_t>(r)]);
  }
  return eta;
}

void PosteriorStore::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json j;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["burn_in"] = meta.burn_in;
  j["samples"] = meta.samples;
  j["thin"] = meta.thin;
  j["iterations"] = meta.iterations;
  j["draws"] = draws();
  j["rows"] = meta.rows;
  j["confounder_names"] = meta.confounder_names;
  j["exposure_names"] = meta.exposure_names;
  j["region_ids"] = meta.region_ids;
  json echo = json::array();
  for (const auto& [k, v] : meta.config_echo) echo.push_back(json::array({k, v}));
  j["config"] = std::move(echo);
  j["f_offset"] = meta.f_offset;
  j["soft"] = meta.soft;
  j["sparse"] = meta.sparse;
  j["trees"] = meta.trees;
  j["eta_stored"] = eta.cols() > 0;
  json diag = json::array();
  for (const auto& [k, v] : meta.diagnostics) diag.push_back(json::array({k, v}));
  j["diagnostics"] = std::move(diag);
  j["surface"] = "f(Z) = f_offset + sum of tree predictions; effect summaries use f only";
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) throw Error("cannot write meta.json in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
  }
  write_binary(dir / "beta.bin", beta.data(), static_cast<std::size_t>(beta.size()));
  write_binary(dir / "nu.bin", nu.data(), static_cast<std::size_t>(nu.size()));
  write_binary(dir / "split_probs.bin", split_probs.data(), static_cast<std::size_t>(split_probs.size()));
  write_binary(dir / "tau2.bin", tau2.data(), tau2.size());
  write_binary(dir / "rho.bin", rho.data(), rho.size());
  write_binary(dir / "xi.bin", xi.data(), xi.size());
  if (eta.cols() > 0) write_binary(dir / "eta.bin", eta.data(), static_cast<std::size_t>(eta.size()));
  std::ofstream out(dir / "trees.jsonl", std::ios::binary);
  if (!out) throw Error("cannot write trees.jsonl in '" + dir.string() + "'");
  for (const auto& ensemble : trees) {
    json line = json::array();
    for (const SoftTree& t : ensemble) line.push_back(tree_to_json(t));
    out << line.dump() << '\n';
  }
}

PosteriorStore PosteriorStore::read(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("'" + dir.string() + "' is not a posterior store (no meta.json)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("meta.json is not valid JSON: " + std::string(e.what()));
  }
  PosteriorStore store;
  StoreMeta& meta = store.meta;
  long draws = 0;
  bool eta_stored = false;
  try {
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.config_hash = j.at("config_hash").get<std::string>();
    meta.burn_in = j.at("burn_in").get<long>();
    meta.samples = j.at("samples").get<long>();
    meta.thin = j.at("thin").get<long>();
    meta.iterations = j.at("iterations").get<long>();
    meta.rows = j.at("rows").get<long>();
    draws = j.at("draws").get<long>();
    meta.confounder_names = j.at("confounder_names").get<std::vector<std::string>>();
    meta.exposure_names = j.at("exposure_names").get<std::vector<std::string>>();
    meta.region_ids = j.at("region_ids").get<std::vector<std::string>>();
    for (const auto& kv : j.at("config")) {
      meta.config_echo.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
    meta.f_offset = j.at("f_offset").get<double>();
    meta.soft = j.at("soft").get<bool>();
    meta.sparse = j.at("sparse").get<bool>();
    meta.trees = j.at("trees").get<int>();
    eta_stored = j.at("eta_stored").get<bool>();
    for (const auto& kv : j.at("diagnostics")) {
      meta.diagnostics.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<double>());
    }
  } catch (const json::exception& e) {
    throw DataError("meta.json is missing fields: " + std::string(e.what()));
  }
  const long p = static_cast<long>(meta.confounder_names.size());
  const long q = static_cast<long>(meta.exposure_names.size());
  const long regions = static_cast<long>(meta.region_ids.size());
  store.beta = to_matrix(read_binary(dir / "beta.bin", draws * p), draws, p);
  store.nu = to_matrix(read_binary(dir / "nu.bin", draws * regions), draws, regions);
  store.split_probs = to_matrix(read_binary(dir / "split_probs.bin", draws * q), draws, q);
  store.tau2 = read_binary(dir / "tau2.bin", draws);
  store.rho = read_binary(dir / "rho.bin", draws);
  store.xi = read_binary(dir / "xi.bin", draws);
  if (eta_stored) {
    store.eta = to_matrix(read_binary(dir / "eta.bin", draws * meta.rows), draws, meta.rows);
  } else {
    store.eta.resize(draws, 0);
  }
  std::ifstream trees_in(dir / "trees.jsonl");
  if (!trees_in) throw DataError("missing trees.jsonl in '" + dir.string() + "'");
  std::string line;
  while (std::getline(trees_in, line)) {
    if (line.empty()) continue;
    std::vector<SoftTree> ensemble;
    try {
      for (const auto& t : json::parse(line)) ensemble.push_back(tree_from_json(t));
    } catch (const json::exception& e) {
      throw DataError("malformed trees.jsonl: " + std::string(e.what()));
    }
    store.trees.push_back(std::move(ensemble));
  }
  if (static_cast<long>(store.trees.size()) != draws) {
    throw DataError("trees.jsonl has " + std::to_string(store.trees.size()) + " draws, expected " +
                    std::to_string(draws));
  }
  return store;
}

Eigen::MatrixXd log_likelihood_matrix(const PosteriorStore& store, const PanelDataset& data) {
  if (store.draws() == 0) throw DomainError("posterior store has no draws");
  check_store_matches(store, data);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(store.draws()), static_cast<Eigen::Index>(data.rows()));
  for (std::size_t m = 0; m < store.draws(); ++m) {
    const Eigen::VectorXd eta = store.reconstruct_eta(m, data);
    for (std::size_t r = 0; r < data.rows(); ++r) {
      out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(r)) =
          nb_log_density(data.count[r], store.xi[m], eta[static_cast<Eigen::Index>(r)]);
    }
  }
  return out;
}

void check_store_matches(const PosteriorStore& store, const PanelDataset& data) {
  if (store.meta.exposure_names != data.exposure_names) {
    throw DataError("dataset exposure columns do not match the store's meta.json");
  }
  if (store.meta.confounder_names != data.confounder_names) {
    throw DataError("dataset confounder columns do not match the store's meta.json");
  }
  if (store.meta.region_ids != data.region_ids) {
    throw DataError("dataset regions do not match the store's meta.json");
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace mixbart
