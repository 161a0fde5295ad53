#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/softtree.hpp"
#include "mixbart/spatial.hpp"

namespace mixbart {

// Region-by-day panel. Region indices follow the order of first appearance
// of each region id in the file.
struct PanelDataset {
  std::vector<std::string> region_ids;
  std::vector<int> region;
  std::vector<std::int64_t> date;
  std::vector<std::int64_t> count;
  Eigen::VectorXd population;
  Eigen::MatrixXd confounders;  // n x p
  RowMatrix exposures;          // n x q
  std::vector<std::string> confounder_names;
  std::vector<std::string> exposure_names;

  std::size_t rows() const { return count.size(); }
  int region_count() const { return static_cast<int>(region_ids.size()); }
  Eigen::VectorXd log_population() const { return population.array().log(); }
  ExposureRanges ranges() const { return ExposureRanges::from_matrix(exposures); }
  int exposure_index(const std::string& name) const;
  int region_index(const std::string& id) const;

  // Throws DataError on inconsistent shapes, Pop <= 0, negative counts or
  // non-finite cells.
  void validate() const;
};

PanelDataset read_dataset(const std::filesystem::path& path,
                          const std::vector<std::string>& confounders,
                          const std::vector<std::string>& exposures);
void write_dataset(const std::filesystem::path& path, const PanelDataset& data);

// Edge list "region_a,region_b" per line, ids as in the dataset. Unknown ids
// and regions missing from the list are DataErrors.
std::vector<std::pair<int, int>> read_adjacency(const std::filesystem::path& path,
                                                const std::vector<std::string>& region_ids);
void write_adjacency(const std::filesystem::path& path, const CarStructure& car,
                     const std::vector<std::string>& region_ids);

}  // namespace mixbart
