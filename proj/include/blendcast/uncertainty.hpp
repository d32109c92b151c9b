#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/grid.hpp"
#include "blendcast/hierarchy.hpp"
#include "blendcast/metrics.hpp"

namespace blendcast {

inline constexpr std::array<double, 3> kLastMultipliers = {1.0, 1.02, 1.03};

// Multiplicative quantile factors per level, columns ordered as kQuantileLevels.
struct QuantileFactorTable {
  std::array<std::array<double, kQuantileCount>, kLevelCount> factors{};
  std::array<double, kLevelCount> last_multiplier{};

  const std::array<double, kQuantileCount>& level(int l) const { return factors.at(l - 1); }
  // Factor actually applied at (level, quantile index), extra multiplier included.
  double effective(int l, std::size_t q) const;

  // Median factor exactly 1, factors non-decreasing, multiplier in kLastMultipliers.
  void validate() const;

  static QuantileFactorTable identity();
  // The published 12-level table, verbatim, with multipliers 1.0 (its last
  // column already carries them).
  static QuantileFactorTable reference();

  std::string to_csv() const;
  static QuantileFactorTable parse_csv(const std::string& text, const std::string& source);
  static QuantileFactorTable read_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;
};

QuantileGrid apply_factors(const ForecastGrid& median, const QuantileFactorTable& table);
// One median grid per level (index 0 = level 1).
std::vector<QuantileGrid> apply_factors(const std::vector<ForecastGrid>& medians,
                                        const QuantileFactorTable& table);

// Everything the factor fit needs for one level: median and actual paths per
// series and the coefficient weight / scale (0 drops the series).
struct FactorFitLevel {
  std::vector<std::vector<double>> medians;
  std::vector<std::vector<double>> actuals;
  std::vector<double> coefficient;
};

struct FactorFitInput {
  std::array<FactorFitLevel, kLevelCount> levels;
};

struct FactorFitOptions {
  int symmetric_through_level = 9;  // mirrored pairs on levels 1..this
  double tolerance = 1e-4;
  double max_factor = 1000.0;
};

struct FactorFitResult {
  QuantileFactorTable table;
  double identity_wspl = 0.0;
  double fitted_wspl = 0.0;
  std::vector<int> identity_levels;  // levels left at identity (degenerate or no gain)
};

// Builds the fit input for a validation window from a level-12 median grid.
FactorFitInput prepare_factor_fit(const PanelDataset& panel, const HierarchyIndex& index,
                                  const WeightTable& weights, const ForecastGrid& median12,
                                  const MetricOptions& options = {});

// WSPL of `table` applied to the medians of `input`.
double factor_fit_wspl(const FactorFitInput& input, const QuantileFactorTable& table);

FactorFitResult optimize_factors(const FactorFitInput& input, const FactorFitOptions& options = {});

// Golden-section minimization of a unimodal function on [lo, hi].
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tolerance);

// Pool-adjacent-violators projection onto non-decreasing sequences.
std::vector<double> isotonic_increasing(std::span<const double> values);

// Linear interpolation between order statistics (h = (n-1)u).
double empirical_quantile(std::span<const double> sorted, double u);

// Per-series quantiles, day-constant; the median slot is filled but unused.
struct StatQuantiles {
  std::vector<std::string> series_ids;
  std::vector<std::array<double, kQuantileCount>> values;
};

// Daily sales of the last `window` days up to `last_day` (active days only),
// or, when `weekly`, 7-day sums divided by 7 over the whole weeks inside that window.
StatQuantiles statistical_quantiles(const PanelDataset& panel, int last_day, int window, bool weekly);

enum class Level11Stats { sum_members, direct_empirical };

// Level-11 statistics: member sums of level-12 quantiles, or empirical
// quantiles of the aggregated level-11 series.
StatQuantiles level11_statistics(const PanelDataset& panel, const HierarchyIndex& index,
                                 const StatQuantiles& level12, Level11Stats strategy, int last_day,
                                 int window);

struct StatisticalSet {
  StatQuantiles daily_long;   // 13 x 28 days
  StatQuantiles daily_short;  // 28 days
  StatQuantiles weekly_long;  // 13 x 28 days
  StatQuantiles weekly_short; // 3 x 28 days
};

StatisticalSet compute_statistical_set(const PanelDataset& panel, int last_day);

// Non-median quantiles only; monotonicity is left to restore_monotone.
// 0.2 est + 0.7 (long + 1.75 short) / 2.75 + 0.1 (weekly_long + weekly_short) / 2.
QuantileGrid correct_level12(const QuantileGrid& estimated, const StatisticalSet& stats);
// 0.91 est + 0.09 (long + 1.75 short) / 2.75.
QuantileGrid correct_level11(const QuantileGrid& estimated, const StatQuantiles& daily_long,
                             const StatQuantiles& daily_short);

// Sorts the lower and upper quantiles of a cell and keeps them on their side
// of the median, which is left as is. Negative values become 0.
void restore_monotone(std::array<double, kQuantileCount>& cell);

struct QuantilePipelineOptions {
  bool corrections = true;
  Level11Stats level11 = Level11Stats::sum_members;
};

// Median aggregation, factor application and the level-11/12 corrections.
std::vector<QuantileGrid> quantile_pipeline(const PanelDataset& panel, const HierarchyIndex& index,
                                            const ForecastGrid& median12,
                                            const QuantileFactorTable& table,
                                            const QuantilePipelineOptions& options = {});

// Writes `series_id,quantile,F1..F28`, nine rows per series, levels 1..12.
void write_quantile_submission(const std::filesystem::path& path, const std::vector<QuantileGrid>& grids);
std::string quantile_submission_csv(const std::vector<QuantileGrid>& grids);
// Reads a quantile submission back into one grid per level in index order.
std::vector<QuantileGrid> read_quantile_submission(const std::filesystem::path& path,
                                                   const HierarchyIndex& index, DayRange days);

}  // namespace blendcast
