#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixbart/softtree.hpp"
#include "mixbart/store.hpp"

namespace mixbart {

// A posterior family of surfaces f^(m)(z), m = 0..draws-1.
struct Surface {
  std::size_t draws = 0;
  std::function<double(std::size_t draw, std::span<const double> z)> eval;
};

// Tree surface of every stored draw (offset included, beta and nu excluded).
Surface surface_from_store(const PosteriorStore& store);
// A single deterministic surface.
Surface surface_from_function(std::function<double(std::span<const double>)> f);

// Type-7 empirical quantile of already sorted values.
double quantile_sorted(std::span<const double> sorted, double p);

// Quantile bins of one exposure: boundaries b_0 < ... < b_K; bin j (1-based)
// holds rows with b_{j-1} < z <= b_j, and bin 1 also holds z == b_0.
struct AleGrid {
  int exposure = -1;
  std::vector<double> boundaries;
  std::vector<int> bin_of_row;  // 1-based bin per row
  std::vector<int> counts;      // counts[j - 1] = rows in bin j
  bool merged = false;          // duplicate quantiles or empty bins were merged
  int bins() const { return static_cast<int>(counts.size()); }
};

AleGrid make_ale_grid(const RowMatrix& z, int exposure, int bins);

// Every surface evaluation issued by an ALE accumulator, and those whose
// varied coordinate was further than one bin width from the row's value.
struct EvaluationAudit {
  long evaluations = 0;
  long out_of_bin = 0;
};

// Pointwise posterior mean and central 95% interval.
struct Band {
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
};
Band summarize_draws(const RowMatrix& draws);

struct AleResult {
  AleGrid grid;
  RowMatrix draws;                // one centered curve per draw, at the boundaries
  std::vector<double> centering;  // constant subtracted from each draw
  Band band;
  EvaluationAudit audit;
};

AleResult ale_first_order(const Surface& f, const RowMatrix& z, int exposure, int bins);

struct Ale2Result {
  AleGrid grid1;
  AleGrid grid2;
  // One surface per draw, flattened as i * (K2 + 1) + j over boundary pairs.
  RowMatrix draws;
  std::vector<int> cell_counts;  // K1 x K2, row-major
  std::vector<bool> imputed;     // empty cells filled from the nearest nonempty one
  Band band;
  EvaluationAudit audit;
  bool main_effects_added = false;

  int rows() const { return static_cast<int>(grid1.boundaries.size()); }
  int cols() const { return static_cast<int>(grid2.boundaries.size()); }
};

Ale2Result ale_second_order(const Surface& f, const RowMatrix& z, int exposure1, int exposure2,
                            int bins);
// Adds first-order curves computed on the same bins to each draw.
Ale2Result add_main_effects(const Ale2Result& surface, const AleResult& first1,
                            const AleResult& first2);
// Row of the second-order surface at the boundary of exposure2 nearest to
// value; returned uncentered as stored in the surface.
Band ale2_slice(const Ale2Result& surface, double value2);

struct CurveResult {
  std::vector<double> grid;
  RowMatrix draws;
  Band band;
  long evaluations = 0;
};

// Mean over rows of f(grid value, Z_row,-k) per draw.
CurveResult partial_dependence(const Surface& f, const RowMatrix& z, int exposure,
                               const std::vector<double>& grid);
// f(grid value, reference_-k) per draw.
CurveResult fixed_profile(const Surface& f, int exposure, const std::vector<double>& grid,
                          std::span<const double> reference);
// Column medians.
std::vector<double> median_profile(const RowMatrix& z);
// exp(f(all exposures at decile d) - f(all at their medians)) for d = 0.1..0.9.
CurveResult decile_mixture_effect(const Surface& f, const RowMatrix& z);

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
  std::vector<double> lppd_row;
  std::vector<double> p_waic_row;
};

// ll is draws x rows.
WaicResult waic(const Eigen::MatrixXd& log_lik);

// One line of the tidy effect CSV. Missing coordinates are NaN and written
// as empty fields.
struct EffectRow {
  std::string mode;
  std::string exposure_1;
  std::string exposure_2;
  double grid_1 = 0.0;
  double grid_2 = 0.0;
  double mean = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  int n_bin = 0;
  std::string flag;
};

// Display window: the central `trim` fraction of an exposure.
struct TrimWindow {
  double lower;
  double upper;
};
TrimWindow trim_window(const RowMatrix& z, int exposure, double trim);

std::vector<EffectRow> tidy_ale1(const AleResult& result, const std::string& name,
                                 const TrimWindow& window);
std::vector<EffectRow> tidy_ale2(const Ale2Result& result, const std::string& name1,
                                 const std::string& name2, const TrimWindow& window1,
                                 const TrimWindow& window2);
std::vector<EffectRow> tidy_curve(const CurveResult& result, const std::string& mode,
                                  const std::string& name, const TrimWindow* window);

void write_effect_csv(const std::filesystem::path& path, const std::vector<EffectRow>& rows);
std::vector<EffectRow> read_effect_csv(const std::filesystem::path& path);

}  // namespace mixbart
