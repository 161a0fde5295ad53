#include "mixbart/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string_view>
#include <unordered_map>

#include "mixbart/csv.hpp"
#include "mixbart/error.hpp"

namespace mixbart {

namespace {

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += ", ";
    out += names[i];
  }
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

int PanelDataset::exposure_index(const std::string& name) const {
  for (std::size_t k = 0; k < exposure_names.size(); ++k) {
    if (exposure_names[k] == name) return static_cast<int>(k);
  }
  throw ConfigError("unknown exposure '" + name + "'; valid names: " + join(exposure_names));
}

int PanelDataset::region_index(const std::string& id) const {
  for (std::size_t i = 0; i < region_ids.size(); ++i) {
    if (region_ids[i] == id) return static_cast<int>(i);
  }
  throw DataError("unknown region id '" + id + "'");
}

void PanelDataset::validate() const {
  const std::size_t n = rows();
  if (region.size() != n || date.size() != n || static_cast<std::size_t>(population.size()) != n ||
      static_cast<std::size_t>(confounders.rows()) != n ||
      static_cast<std::size_t>(exposures.rows()) != n) {
    throw DataError("dataset columns have inconsistent lengths");
  }
  if (static_cast<std::size_t>(confounders.cols()) != confounder_names.size() ||
      static_cast<std::size_t>(exposures.cols()) != exposure_names.size()) {
    throw DataError("dataset column names do not match the matrices");
  }
  if (exposure_names.empty()) throw DataError("dataset has no exposure columns");
  for (std::size_t r = 0; r < n; ++r) {
    if (region[r] < 0 || region[r] >= region_count()) {
      throw DataError("row " + std::to_string(r) + ": region index out of range");
    }
    if (count[r] < 0) throw DataError("row " + std::to_string(r) + ": negative count");
    if (!(population[r] > 0.0) || !std::isfinite(population[r])) {
      throw DataError("row " + std::to_string(r) + ": population must be positive");
    }
  }
  if (!confounders.allFinite()) throw DataError("confounders contain non-finite values");
  if (!exposures.allFinite()) throw DataError("exposures contain non-finite values");
}

PanelDataset read_dataset(const std::filesystem::path& path,
                          const std::vector<std::string>& confounders,
                          const std::vector<std::string>& exposures) {
  const CsvTable table = read_csv(path);
  static const char* required[] = {"region_id", "date_index", "count", "population"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (table.header.size() <= i || table.header[i] != required[i]) {
      throw DataError(path.string() + ": header must start with region_id,date_index,count,population");
    }
  }
  if (exposures.empty()) throw ConfigError("no exposure columns declared");
  std::vector<std::size_t> x_cols;
  std::vector<std::size_t> z_cols;
  for (const auto& name : confounders) {
    if (!table.has_column(name)) {
      throw DataError(path.string() + ": declared confounder column '" + name + "' not found");
    }
    x_cols.push_back(table.column(name));
  }
  for (const auto& name : exposures) {
    if (!table.has_column(name)) {
      throw DataError(path.string() + ": declared exposure column '" + name + "' not found");
    }
    z_cols.push_back(table.column(name));
  }

  PanelDataset data;
  data.confounder_names = confounders;
  data.exposure_names = exposures;
  const std::size_t n = table.rows.size();
  data.region.resize(n);
  data.date.resize(n);
  data.count.resize(n);
  data.population.resize(static_cast<Eigen::Index>(n));
  data.confounders.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(x_cols.size()));
  data.exposures.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(z_cols.size()));
  std::unordered_map<std::string, int> index;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + " row " + std::to_string(r + 2);
    auto [it, inserted] = index.emplace(row[0], static_cast<int>(data.region_ids.size()));
    if (inserted) data.region_ids.push_back(row[0]);
    data.region[r] = it->second;
    data.date[r] = parse_int(row[1], where);
    data.count[r] = parse_int(row[2], where);
    data.population[static_cast<Eigen::Index>(r)] = parse_double(row[3], where);
    for (std::size_t c = 0; c < x_cols.size(); ++c) {
      data.confounders(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(row[x_cols[c]], where);
    }
    for (std::size_t c = 0; c < z_cols.size(); ++c) {
      data.exposures(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(row[z_cols[c]], where);
    }
  }
  data.validate();
  return data;
}

void write_dataset(const std::filesystem::path& path, const PanelDataset& data) {
  CsvTable table;
  table.header = {"region_id", "date_index", "count", "population"};
  table.header.insert(table.header.end(), data.confounder_names.begin(), data.confounder_names.end());
  table.header.insert(table.header.end(), data.exposure_names.begin(), data.exposure_names.end());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    std::vector<std::string> row = {data.region_ids[data.region[r]], std::to_string(data.date[r]),
                                    std::to_string(data.count[r]), format_double(data.population[i])};
    for (Eigen::Index c = 0; c < data.confounders.cols(); ++c) {
      row.push_back(format_double(data.confounders(i, c)));
    }
    for (Eigen::Index c = 0; c < data.exposures.cols(); ++c) {
      row.push_back(format_double(data.exposures(i, c)));
    }
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

std::vector<std::pair<int, int>> read_adjacency(const std::filesystem::path& path,
                                                const std::vector<std::string>& region_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open adjacency file '" + path.string() + "'");
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < region_ids.size(); ++i) index.emplace(region_ids[i], static_cast<int>(i));

  std::vector<std::pair<int, int>> edges;
  std::set<int> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = strip(line);
    if (view.empty() || view.front() == '#') continue;
    const auto comma = view.find(',');
    if (comma == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'region_a,region_b'");
    }
    const std::string a(strip(view.substr(0, comma)));
    const std::string b(strip(view.substr(comma + 1)));
    const auto ia = index.find(a);
    const auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown region id '" +
                      (ia == index.end() ? a : b) + "'");
    }
    edges.emplace_back(ia->second, ib->second);
    seen.insert(ia->second);
    seen.insert(ib->second);
  }
  for (std::size_t i = 0; i < region_ids.size(); ++i) {
    if (!seen.count(static_cast<int>(i))) {
      throw DataError("region '" + region_ids[i] + "' does not appear in the adjacency file");
    }
  }
  return edges;
}

void write_adjacency(const std::filesystem::path& path, const CarStructure& car,
                     const std::vector<std::string>& region_ids) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& [a, b] : car.edges()) out << region_ids[a] << ',' << region_ids[b] << '\n';
}

}  // namespace mixbart
