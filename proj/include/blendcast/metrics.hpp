#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "blendcast/grid.hpp"
#include "blendcast/hierarchy.hpp"

namespace blendcast {

struct MetricOptions {
  // Drop leading zeros (not-yet-launched product) before computing the scale.
  bool trim_leading_zeros = true;
};

enum class ScaleKind { squared, absolute };

// (1/(n-1)) * sum_{t=2..n} d(y_t - y_{t-1}), d = square or absolute value.
// Throws DegenerateSeriesError when the result is zero or n < 2.
double scale_denominator(std::span<const double> history, ScaleKind kind,
                         const MetricOptions& options = {});

double rmsse(std::span<const double> history, std::span<const double> actual,
             std::span<const double> forecast, const MetricOptions& options = {});

inline double pinball(double actual, double quantile_forecast, double u) {
  return quantile_forecast <= actual ? u * (actual - quantile_forecast)
                                     : (1.0 - u) * (quantile_forecast - actual);
}

double spl(std::span<const double> history, std::span<const double> actual,
           std::span<const double> quantile_forecast, double u, const MetricOptions& options = {});

// Per-level, per-series metric values aligned with the WeightTable. NaN marks
// an excluded series, which must carry weight 0.
using LevelValues = std::array<std::vector<double>, kLevelCount>;
using LevelQuantileValues = std::array<std::vector<std::array<double, kQuantileCount>>, kLevelCount>;

double wrmsse(const LevelValues& rmsse_values, const WeightTable& weights);
double wspl(const LevelQuantileValues& spl_values, const WeightTable& weights);

struct ScoreEntry {
  int level = 0;
  std::string series_id;
  double value = 0.0;
};

// Per-series scores plus per-level weighted sums and their total.
struct ScoreReport {
  std::string metric;  // "WRMSSE" or "WSPL"
  std::vector<ScoreEntry> series;
  std::array<double, kLevelCount> per_level{};
  double total = 0.0;
  std::size_t excluded = 0;  // degenerate series dropped with weight 0

  void write_csv(const std::filesystem::path& path) const;
};

// Scores a level-12 point forecast at all 12 levels. Histories run from day 1
// to the day before the forecast range; actuals come from the panel.
ScoreReport score_point(const PanelDataset& panel, const HierarchyIndex& index,
                        const WeightTable& weights, const ForecastGrid& forecast,
                        const MetricOptions& options = {});

// Scores one quantile grid per level (index 0 = level 1).
ScoreReport score_quantiles(const PanelDataset& panel, const HierarchyIndex& index,
                            const WeightTable& weights, const std::vector<QuantileGrid>& grids,
                            const MetricOptions& options = {});

// Scale denominators for every series of every level, from history days
// 1..last_history_day. NaN marks a degenerate series.
LevelValues level_scales(const PanelDataset& panel, const HierarchyIndex& index,
                         int last_history_day, ScaleKind kind, const MetricOptions& options = {});

}  // namespace blendcast
