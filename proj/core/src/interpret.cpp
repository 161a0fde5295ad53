#include "mixbart/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixbart/csv.hpp"
#include "mixbart/distributions.hpp"
#include "mixbart/error.hpp"

namespace mixbart {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> sorted_column(const RowMatrix& z, int k) {
  std::vector<double> v(z.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) v[r] = z(r, k);
  std::sort(v.begin(), v.end());
  return v;
}

int locate_bin(const std::vector<double>& b, double x) {
  const auto it = std::lower_bound(b.begin(), b.end(), x);
  int j = static_cast<int>(it - b.begin());
  if (j == 0) j = 1;
  if (j >= static_cast<int>(b.size())) j = static_cast<int>(b.size()) - 1;
  return j;
}

bool within(double varied, double observed, double width) {
  return std::fabs(varied - observed) <= width * (1.0 + 1e-12) + 1e-15;
}

std::string format_or_empty(double v) { return std::isnan(v) ? std::string() : format_double(v); }

void check_exposure(const RowMatrix& z, int k) {
  if (k < 0 || k >= z.cols()) throw ConfigError("exposure index " + std::to_string(k) + " out of range");
}

}  // namespace

Surface surface_from_store(const PosteriorStore& store) {
  Surface s;
  s.draws = store.draws();
  s.eval = [&store](std::size_t m, std::span<const double> z) { return store.predict_f(m, z); };
  return s;
}

Surface surface_from_function(std::function<double(std::span<const double>)> f) {
  Surface s;
  s.draws = 1;
  s.eval = [f = std::move(f)](std::size_t, std::span<const double> z) { return f(z); };
  return s;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

AleGrid make_ale_grid(const RowMatrix& z, int exposure, int bins) {
  check_exposure(z, exposure);
  if (bins < 1) throw ConfigError("bin count must be >= 1");
  if (z.rows() == 0) throw DataError("ALE needs at least one row");
  const auto sorted = sorted_column(z, exposure);
  AleGrid grid;
  grid.exposure = exposure;
  for (int j = 0; j <= bins; ++j) {
    const double b = quantile_sorted(sorted, static_cast<double>(j) / bins);
    if (grid.boundaries.empty() || b > grid.boundaries.back()) {
      grid.boundaries.push_back(b);
    } else {
      grid.merged = true;
    }
  }
  if (grid.boundaries.size() < 2) {
    throw DataError("exposure has a single distinct value; ALE is undefined");
  }
  // Merge empty bins into a neighbour until every bin has members.
  while (true) {
    const int k = static_cast<int>(grid.boundaries.size()) - 1;
    std::vector<int> counts(k, 0);
    for (Eigen::Index r = 0; r < z.rows(); ++r) ++counts[locate_bin(grid.boundaries, z(r, exposure)) - 1];
    int empty = -1;
    for (int j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        empty = j;
        break;
      }
    }
    if (empty < 0) {
      grid.counts = std::move(counts);
      break;
    }
    grid.merged = true;
    // Bin empty+1 spans (b_empty, b_empty+1]; drop its upper boundary unless it is the last.
    const int drop = empty + 1 < k ? empty + 1 : empty;
    grid.boundaries.erase(grid.boundaries.begin() + drop);
  }
  grid.bin_of_row.resize(z.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) grid.bin_of_row[r] = locate_bin(grid.boundaries, z(r, exposure));
  return grid;
}

Band summarize_draws(const RowMatrix& draws) {
  Band band;
  const Eigen::Index cols = draws.cols();
  band.mean.resize(cols);
  band.lo.resize(cols);
  band.hi.resize(cols);
  std::vector<double> column(draws.rows());
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index m = 0; m < draws.rows(); ++m) column[m] = draws(m, c);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    band.mean[c] = sum / static_cast<double>(column.size());
    band.lo[c] = quantile_sorted(column, 0.025);
    band.hi[c] = quantile_sorted(column, 0.975);
  }
  return band;
}

AleResult ale_first_order(const Surface& f, const RowMatrix& z, int exposure, int bins) {
  if (f.draws == 0) throw DomainError("ALE needs at least one posterior draw");
  AleResult result;
  result.grid = make_ale_grid(z, exposure, bins);
  const auto& b = result.grid.boundaries;
  const int k = result.grid.bins();
  const double n = static_cast<double>(z.rows());
  result.draws.resize(static_cast<Eigen::Index>(f.draws), k + 1);
  result.centering.resize(f.draws);
  std::vector<double> row(z.cols());
  std::vector<double> sums(k);
  for (std::size_t m = 0; m < f.draws; ++m) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      std::copy(z.row(r).data(), z.row(r).data() + z.cols(), row.begin());
      const int j = result.grid.bin_of_row[r];
      const double observed = row[exposure];
      const double width = b[j] - b[j - 1];
      row[exposure] = b[j];
      const double upper = f.eval(m, row);
      if (!within(b[j], observed, width)) ++result.audit.out_of_bin;
      row[exposure] = b[j - 1];
      const double lower = f.eval(m, row);
      if (!within(b[j - 1], observed, width)) ++result.audit.out_of_bin;
      result.audit.evaluations += 2;
      sums[j - 1] += upper - lower;
    }
    std::vector<double> curve(k + 1, 0.0);
    for (int j = 1; j <= k; ++j) curve[j] = curve[j - 1] + sums[j - 1] / result.grid.counts[j - 1];
    double centre = 0.0;
    for (int j = 1; j <= k; ++j) centre += result.grid.counts[j - 1] * 0.5 * (curve[j - 1] + curve[j]);
    centre /= n;
    result.centering[m] = centre;
    for (int j = 0; j <= k; ++j) result.draws(static_cast<Eigen::Index>(m), j) = curve[j] - centre;
  }
  result.band = summarize_draws(result.draws);
  return result;
}

Ale2Result ale_second_order(const Surface& f, const RowMatrix& z, int exposure1, int exposure2,
                            int bins) {
  if (exposure1 == exposure2) throw ConfigError("second-order ALE needs two distinct exposures");
  if (f.draws == 0) throw DomainError("ALE needs at least one posterior draw");
  Ale2Result result;
  result.grid1 = make_ale_grid(z, exposure1, bins);
  result.grid2 = make_ale_grid(z, exposure2, bins);
  const auto& b1 = result.grid1.boundaries;
  const auto& b2 = result.grid2.boundaries;
  const int k1 = result.grid1.bins();
  const int k2 = result.grid2.bins();
  const double n = static_cast<double>(z.rows());
  auto cell = [k2](int i, int j) { return (i - 1) * k2 + (j - 1); };

  result.cell_counts.assign(static_cast<std::size_t>(k1) * k2, 0);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    ++result.cell_counts[cell(result.grid1.bin_of_row[r], result.grid2.bin_of_row[r])];
  }
  result.imputed.assign(result.cell_counts.size(), false);
  // Nearest nonempty cell in normalized index space for each empty cell.
  std::vector<int> source(result.cell_counts.size());
  for (int i = 1; i <= k1; ++i) {
    for (int j = 1; j <= k2; ++j) {
      const int c = cell(i, j);
      source[c] = c;
      if (result.cell_counts[c] > 0) continue;
      result.imputed[c] = true;
      double best = std::numeric_limits<double>::infinity();
      for (int a = 1; a <= k1; ++a) {
        for (int bb = 1; bb <= k2; ++bb) {
          if (result.cell_counts[cell(a, bb)] == 0) continue;
          const double di = static_cast<double>(a - i) / k1;
          const double dj = static_cast<double>(bb - j) / k2;
          const double d = di * di + dj * dj;
          if (d < best) {
            best = d;
            source[c] = cell(a, bb);
          }
        }
      }
    }
  }

  const int cols = k2 + 1;
  result.draws.resize(static_cast<Eigen::Index>(f.draws), (k1 + 1) * cols);
  std::vector<double> row(z.cols());
  std::vector<double> delta(result.cell_counts.size());
  std::vector<double> fj((k1 + 1) * cols);
  auto at = [&fj, cols](int i, int j) -> double& { return fj[i * cols + j]; };
  for (std::size_t m = 0; m < f.draws; ++m) {
    std::fill(delta.begin(), delta.end(), 0.0);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      std::copy(z.row(r).data(), z.row(r).data() + z.cols(), row.begin());
      const int i = result.grid1.bin_of_row[r];
      const int j = result.grid2.bin_of_row[r];
      const double o1 = row[exposure1];
      const double o2 = row[exposure2];
      const double w1 = b1[i] - b1[i - 1];
      const double w2 = b2[j] - b2[j - 1];
      double value = 0.0;
      for (int corner = 0; corner < 4; ++corner) {
        const double v1 = (corner & 1) ? b1[i] : b1[i - 1];
        const double v2 = (corner & 2) ? b2[j] : b2[j - 1];
        row[exposure1] = v1;
        row[exposure2] = v2;
        const double sign = ((corner & 1) != 0) == ((corner & 2) != 0) ? 1.0 : -1.0;
        value += sign * f.eval(m, row);
        if (!within(v1, o1, w1) || !within(v2, o2, w2)) ++result.audit.out_of_bin;
        ++result.audit.evaluations;
      }
      delta[cell(i, j)] += value;
    }
    for (std::size_t c = 0; c < delta.size(); ++c) {
      if (result.cell_counts[c] > 0) delta[c] /= result.cell_counts[c];
    }
    for (std::size_t c = 0; c < delta.size(); ++c) {
      if (result.imputed[c]) delta[c] = delta[source[c]];
    }
    std::fill(fj.begin(), fj.end(), 0.0);
    for (int i = 1; i <= k1; ++i) {
      for (int j = 1; j <= k2; ++j) {
        at(i, j) = delta[cell(i, j)] + at(i - 1, j) + at(i, j - 1) - at(i - 1, j - 1);
      }
    }
    // Remove the accumulated main effects of each exposure.
    std::vector<double> main1(k1 + 1, 0.0);
    for (int i = 1; i <= k1; ++i) {
      double num = 0.0;
      double den = 0.0;
      for (int j = 1; j <= k2; ++j) {
        const double nn = result.cell_counts[cell(i, j)];
        num += nn * 0.5 * ((at(i, j - 1) - at(i - 1, j - 1)) + (at(i, j) - at(i - 1, j)));
        den += nn;
      }
      main1[i] = main1[i - 1] + num / den;
    }
    std::vector<double> main2(k2 + 1, 0.0);
    for (int j = 1; j <= k2; ++j) {
      double num = 0.0;
      double den = 0.0;
      for (int i = 1; i <= k1; ++i) {
        const double nn = result.cell_counts[cell(i, j)];
        num += nn * 0.5 * ((at(i - 1, j) - at(i - 1, j - 1)) + (at(i, j) - at(i, j - 1)));
        den += nn;
      }
      main2[j] = main2[j - 1] + num / den;
    }
    for (int i = 0; i <= k1; ++i) {
      for (int j = 0; j <= k2; ++j) at(i, j) -= main1[i] + main2[j];
    }
    double centre = 0.0;
    for (int i = 1; i <= k1; ++i) {
      for (int j = 1; j <= k2; ++j) {
        centre += result.cell_counts[cell(i, j)] * 0.25 *
                  (at(i - 1, j - 1) + at(i - 1, j) + at(i, j - 1) + at(i, j));
      }
    }
    centre /= n;
    for (std::size_t c = 0; c < fj.size(); ++c) {
      result.draws(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c)) = fj[c] - centre;
    }
  }
  result.band = summarize_draws(result.draws);
  return result;
}

Ale2Result add_main_effects(const Ale2Result& surface, const AleResult& first1,
                            const AleResult& first2) {
  if (first1.grid.boundaries != surface.grid1.boundaries ||
      first2.grid.boundaries != surface.grid2.boundaries) {
    throw DomainError("main-effect curves must use the same bins as the surface");
  }
  if (first1.draws.rows() != surface.draws.rows() || first2.draws.rows() != surface.draws.rows()) {
    throw DomainError("main-effect curves must have the same number of draws");
  }
  Ale2Result out = surface;
  const int rows = surface.rows();
  const int cols = surface.cols();
  for (Eigen::Index m = 0; m < out.draws.rows(); ++m) {
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) out.draws(m, i * cols + j) += first1.draws(m, i) + first2.draws(m, j);
    }
  }
  out.main_effects_added = true;
  out.band = summarize_draws(out.draws);
  return out;
}

Band ale2_slice(const Ale2Result& surface, double value2) {
  const auto& b2 = surface.grid2.boundaries;
  int best = 0;
  for (int j = 1; j < static_cast<int>(b2.size()); ++j) {
    if (std::fabs(b2[j] - value2) < std::fabs(b2[best] - value2)) best = j;
  }
  const int rows = surface.rows();
  const int cols = surface.cols();
  RowMatrix slice(surface.draws.rows(), rows);
  for (Eigen::Index m = 0; m < surface.draws.rows(); ++m) {
    for (int i = 0; i < rows; ++i) slice(m, i) = surface.draws(m, i * cols + best);
  }
  return summarize_draws(slice);
}

CurveResult partial_dependence(const Surface& f, const RowMatrix& z, int exposure,
                               const std::vector<double>& grid) {
  check_exposure(z, exposure);
  CurveResult out;
  out.grid = grid;
  out.draws.resize(static_cast<Eigen::Index>(f.draws), static_cast<Eigen::Index>(grid.size()));
  std::vector<double> row(z.cols());
  for (std::size_t m = 0; m < f.draws; ++m) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double sum = 0.0;
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        std::copy(z.row(r).data(), z.row(r).data() + z.cols(), row.begin());
        row[exposure] = grid[g];
        sum += f.eval(m, row);
        ++out.evaluations;
      }
      out.draws(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g)) = sum / static_cast<double>(z.rows());
    }
  }
  out.band = summarize_draws(out.draws);
  return out;
}

CurveResult fixed_profile(const Surface& f, int exposure, const std::vector<double>& grid,
                          std::span<const double> reference) {
  if (exposure < 0 || exposure >= static_cast<int>(reference.size())) {
    throw ConfigError("reference profile does not cover the exposure");
  }
  CurveResult out;
  out.grid = grid;
  out.draws.resize(static_cast<Eigen::Index>(f.draws), static_cast<Eigen::Index>(grid.size()));
  std::vector<double> row(reference.begin(), reference.end());
  for (std::size_t m = 0; m < f.draws; ++m) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      row[exposure] = grid[g];
      out.draws(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g)) = f.eval(m, row);
      ++out.evaluations;
    }
  }
  out.band = summarize_draws(out.draws);
  return out;
}

std::vector<double> median_profile(const RowMatrix& z) {
  std::vector<double> out(z.cols());
  for (Eigen::Index k = 0; k < z.cols(); ++k) out[k] = quantile_sorted(sorted_column(z, static_cast<int>(k)), 0.5);
  return out;
}

CurveResult decile_mixture_effect(const Surface& f, const RowMatrix& z) {
  const int q = static_cast<int>(z.cols());
  std::vector<std::vector<double>> sorted(q);
  for (int k = 0; k < q; ++k) sorted[k] = sorted_column(z, k);
  auto profile = [&](double p) {
    std::vector<double> v(q);
    for (int k = 0; k < q; ++k) v[k] = quantile_sorted(sorted[k], p);
    return v;
  };
  const auto median = profile(0.5);
  CurveResult out;
  for (int d = 1; d <= 9; ++d) out.grid.push_back(d / 10.0);
  out.draws.resize(static_cast<Eigen::Index>(f.draws), 9);
  std::vector<std::vector<double>> profiles;
  for (double p : out.grid) profiles.push_back(p == 0.5 ? median : profile(p));
  for (std::size_t m = 0; m < f.draws; ++m) {
    const double base = f.eval(m, median);
    ++out.evaluations;
    for (int d = 0; d < 9; ++d) {
      const double value = d == 4 ? base : f.eval(m, profiles[d]);
      if (d != 4) ++out.evaluations;
      out.draws(static_cast<Eigen::Index>(m), d) = std::exp(value - base);
    }
  }
  out.band = summarize_draws(out.draws);
  return out;
}

WaicResult waic(const Eigen::MatrixXd& log_lik) {
  const Eigen::Index draws = log_lik.rows();
  if (draws < 2) throw DomainError("WAIC needs at least two posterior draws");
  WaicResult out;
  out.lppd_row.resize(log_lik.cols());
  out.p_waic_row.resize(log_lik.cols());
  std::vector<double> column(draws);
  for (Eigen::Index r = 0; r < log_lik.cols(); ++r) {
    double mean = 0.0;
    for (Eigen::Index m = 0; m < draws; ++m) {
      column[m] = log_lik(m, r);
      mean += column[m];
    }
    mean /= static_cast<double>(draws);
    double ss = 0.0;
    for (double v : column) ss += (v - mean) * (v - mean);
    out.lppd_row[r] = log_sum_exp(column) - std::log(static_cast<double>(draws));
    out.p_waic_row[r] = ss / static_cast<double>(draws - 1);
    out.lppd += out.lppd_row[r];
    out.p_waic += out.p_waic_row[r];
  }
  out.waic = -2.0 * (out.lppd - out.p_waic);
  return out;
}

TrimWindow trim_window(const RowMatrix& z, int exposure, double trim) {
  check_exposure(z, exposure);
  if (!(trim > 0.0 && trim <= 1.0)) throw ConfigError("trim must lie in (0, 1]");
  const auto sorted = sorted_column(z, exposure);
  return {quantile_sorted(sorted, 0.5 * (1.0 - trim)), quantile_sorted(sorted, 0.5 * (1.0 + trim))};
}

std::vector<EffectRow> tidy_ale1(const AleResult& result, const std::string& name,
                                 const TrimWindow& window) {
  std::vector<EffectRow> rows;
  const auto& b = result.grid.boundaries;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (b[j] < window.lower || b[j] > window.upper) continue;
    EffectRow row;
    row.mode = "ale1";
    row.exposure_1 = name;
    row.grid_1 = b[j];
    row.grid_2 = kNaN;
    row.mean = result.band.mean[j];
    row.lo95 = result.band.lo[j];
    row.hi95 = result.band.hi[j];
    row.n_bin = j == 0 ? 0 : result.grid.counts[j - 1];
    row.flag = result.grid.merged ? "merged" : "";
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<EffectRow> tidy_ale2(const Ale2Result& result, const std::string& name1,
                                 const std::string& name2, const TrimWindow& window1,
                                 const TrimWindow& window2) {
  std::vector<EffectRow> rows;
  const auto& b1 = result.grid1.boundaries;
  const auto& b2 = result.grid2.boundaries;
  const int k2 = result.grid2.bins();
  for (std::size_t i = 0; i < b1.size(); ++i) {
    if (b1[i] < window1.lower || b1[i] > window1.upper) continue;
    for (std::size_t j = 0; j < b2.size(); ++j) {
      if (b2[j] < window2.lower || b2[j] > window2.upper) continue;
      const std::size_t flat = i * b2.size() + j;
      EffectRow row;
      row.mode = result.main_effects_added ? "ale2_total" : "ale2";
      row.exposure_1 = name1;
      row.exposure_2 = name2;
      row.grid_1 = b1[i];
      row.grid_2 = b2[j];
      row.mean = result.band.mean[flat];
      row.lo95 = result.band.lo[flat];
      row.hi95 = result.band.hi[flat];
      if (i > 0 && j > 0) {
        const std::size_t c = (i - 1) * k2 + (j - 1);
        row.n_bin = result.cell_counts[c];
        row.flag = result.imputed[c] ? "imputed" : "";
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<EffectRow> tidy_curve(const CurveResult& result, const std::string& mode,
                                  const std::string& name, const TrimWindow* window) {
  std::vector<EffectRow> rows;
  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    if (window && (result.grid[g] < window->lower || result.grid[g] > window->upper)) continue;
    EffectRow row;
    row.mode = mode;
    row.exposure_1 = name;
    row.grid_1 = result.grid[g];
    row.grid_2 = kNaN;
    row.mean = result.band.mean[g];
    row.lo95 = result.band.lo[g];
    row.hi95 = result.band.hi[g];
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_effect_csv(const std::filesystem::path& path, const std::vector<EffectRow>& rows) {
  CsvTable table;
  table.header = {"mode", "exposure_1", "exposure_2", "grid_1", "grid_2", "mean", "lo95", "hi95", "n_bin", "flag"};
  for (const auto& r : rows) {
    table.rows.push_back({r.mode, r.exposure_1, r.exposure_2, format_or_empty(r.grid_1),
                          format_or_empty(r.grid_2), format_double(r.mean), format_double(r.lo95),
                          format_double(r.hi95), std::to_string(r.n_bin), r.flag});
  }
  write_csv(path, table);
}

std::vector<EffectRow> read_effect_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  std::vector<EffectRow> rows;
  auto num = [](const std::string& s) { return s.empty() ? kNaN : parse_double(s); };
  const std::size_t c_mode = table.column("mode"), c_e1 = table.column("exposure_1"),
                    c_e2 = table.column("exposure_2"), c_g1 = table.column("grid_1"),
                    c_g2 = table.column("grid_2"), c_mean = table.column("mean"),
                    c_lo = table.column("lo95"), c_hi = table.column("hi95"),
                    c_n = table.column("n_bin"), c_flag = table.column("flag");
  for (const auto& f : table.rows) {
    EffectRow r;
    r.mode = f[c_mode];
    r.exposure_1 = f[c_e1];
    r.exposure_2 = f[c_e2];
    r.grid_1 = num(f[c_g1]);
    r.grid_2 = num(f[c_g2]);
    r.mean = num(f[c_mean]);
    r.lo95 = num(f[c_lo]);
    r.hi95 = num(f[c_hi]);
    r.n_bin = static_cast<int>(parse_int(f[c_n]));
    r.flag = f[c_flag];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mixbart
