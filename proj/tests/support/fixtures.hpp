#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mixbart/dataset.hpp"
#include "mixbart/spatial.hpp"

namespace fixture {

// Panel with `regions` regions on a path graph and `days` rows each. Counts,
// populations, confounders and exposures are filled by the caller.
inline mixbart::PanelDataset empty_panel(int regions, int days, int p, int q) {
  mixbart::PanelDataset d;
  for (int i = 0; i < regions; ++i) d.region_ids.push_back("r" + std::to_string(i + 1));
  const int n = regions * days;
  for (int i = 0; i < regions; ++i) {
    for (int j = 0; j < days; ++j) {
      d.region.push_back(i);
      d.date.push_back(j + 1);
      d.count.push_back(0);
    }
  }
  d.population = Eigen::VectorXd::Ones(n);
  d.confounders = Eigen::MatrixXd::Zero(n, p);
  d.exposures = mixbart::RowMatrix::Zero(n, q);
  for (int k = 0; k < p; ++k) d.confounder_names.push_back("x_" + std::to_string(k + 1));
  for (int k = 0; k < q; ++k) d.exposure_names.push_back("z" + std::to_string(k + 1));
  return d;
}

inline mixbart::CarStructure path_graph(int regions) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < regions; ++i) e.push_back({i, i + 1});
  return mixbart::CarStructure::from_edges(regions, e);
}

}  // namespace fixture
