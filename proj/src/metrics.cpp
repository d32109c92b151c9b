#include "blendcast/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "blendcast/csv.hpp"
#include "blendcast/error.hpp"

namespace blendcast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::span<const double> actual, std::span<const double> forecast) {
  if (actual.empty() || actual.size() != forecast.size()) {
    throw ValidationError(fmt::format("horizon mismatch: {} actuals vs {} forecasts", actual.size(),
                                      forecast.size()));
  }
}

}  // namespace

double scale_denominator(std::span<const double> history, ScaleKind kind,
                         const MetricOptions& options) {
  std::size_t start = 0;
  if (options.trim_leading_zeros) {
    while (start < history.size() && history[start] == 0.0) ++start;
  }
  const std::size_t n = history.size() - start;
  if (n < 2) throw DegenerateSeriesError("history shorter than two observations");
  double sum = 0.0;
  for (std::size_t t = start + 1; t < history.size(); ++t) {
    const double diff = history[t] - history[t - 1];
    sum += kind == ScaleKind::squared ? diff * diff : std::abs(diff);
  }
  const double scale = sum / static_cast<double>(n - 1);
  if (!(scale > 0.0)) throw DegenerateSeriesError("constant history has zero scale");
  return scale;
}

double rmsse(std::span<const double> history, std::span<const double> actual,
             std::span<const double> forecast, const MetricOptions& options) {
  check_lengths(actual, forecast);
  const double scale = scale_denominator(history, ScaleKind::squared, options);
  double sum = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    const double e = actual[t] - forecast[t];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(actual.size()) / scale);
}

double spl(std::span<const double> history, std::span<const double> actual,
           std::span<const double> quantile_forecast, double u, const MetricOptions& options) {
  check_lengths(actual, quantile_forecast);
  if (!(u > 0.0 && u < 1.0)) throw DomainError(fmt::format("quantile level {} not in (0,1)", u));
  const double scale = scale_denominator(history, ScaleKind::absolute, options);
  double sum = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) sum += pinball(actual[t], quantile_forecast[t], u);
  return sum / static_cast<double>(actual.size()) / scale;
}

double wrmsse(const LevelValues& rmsse_values, const WeightTable& weights) {
  double total = 0.0;
  for (int l = 0; l < kLevelCount; ++l) {
    const auto& w = weights.weights[l];
    const auto& v = rmsse_values[l];
    if (v.size() != w.size()) {
      throw ValidationError(fmt::format("level {}: {} RMSSE values for {} weighted series", l + 1,
                                        v.size(), w.size()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (std::isnan(v[i])) {
        if (w[i] != 0.0) {
          throw ValidationError(
              fmt::format("level {}: series '{}' has no RMSSE", l + 1, weights.ids[l][i]));
        }
        continue;
      }
      total += w[i] * v[i];
    }
  }
  return total;
}

double wspl(const LevelQuantileValues& spl_values, const WeightTable& weights) {
  double total = 0.0;
  for (int l = 0; l < kLevelCount; ++l) {
    const auto& w = weights.weights[l];
    const auto& v = spl_values[l];
    if (v.size() != w.size()) {
      throw ValidationError(fmt::format("level {}: {} SPL rows for {} weighted series", l + 1,
                                        v.size(), w.size()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      double mean = 0.0;
      bool excluded = false;
      for (double s : v[i]) {
        if (std::isnan(s)) excluded = true;
        mean += s;
      }
      if (excluded) {
        if (w[i] != 0.0) {
          throw ValidationError(
              fmt::format("level {}: series '{}' is missing a quantile", l + 1, weights.ids[l][i]));
        }
        continue;
      }
      total += w[i] * (mean / static_cast<double>(kQuantileCount));
    }
  }
  return total;
}

LevelValues level_scales(const PanelDataset& panel, const HierarchyIndex& index,
                         int last_history_day, ScaleKind kind, const MetricOptions& options) {
  const ForecastGrid history = actuals_grid(panel, {1, last_history_day});
  LevelValues scales;
  for (int level = 1; level <= kLevelCount; ++level) {
    const ForecastGrid agg = aggregate(history, index, level);
    auto& out = scales[level - 1];
    out.resize(agg.n_series());
    for (std::size_t s = 0; s < agg.n_series(); ++s) {
      try {
        out[s] = scale_denominator(agg.row(s), kind, options);
      } catch (const DegenerateSeriesError&) {
        out[s] = kNaN;
      }
    }
  }
  return scales;
}

namespace {

// Copies `weights` with degenerate series zeroed, logging each exclusion.
WeightTable exclude_degenerate(const WeightTable& weights, const LevelValues& scales,
                               std::size_t& excluded) {
  WeightTable adjusted = weights;
  excluded = 0;
  for (int l = 0; l < kLevelCount; ++l) {
    for (std::size_t i = 0; i < scales[l].size(); ++i) {
      if (!std::isnan(scales[l][i])) continue;
      if (adjusted.weights[l][i] != 0.0) {
        spdlog::warn("degenerate series '{}' (level {}) excluded from scoring",
                     weights.ids[l][i], l + 1);
      }
      adjusted.weights[l][i] = 0.0;
      ++excluded;
    }
  }
  return adjusted;
}

void check_weight_alignment(const HierarchyIndex& index, const WeightTable& weights) {
  for (int level = 1; level <= kLevelCount; ++level) {
    if (weights.weights[level - 1].size() != index.level_size(level)) {
      throw ValidationError(fmt::format("weight table does not match hierarchy at level {}", level));
    }
  }
}

}  // namespace

ScoreReport score_point(const PanelDataset& panel, const HierarchyIndex& index,
                        const WeightTable& weights, const ForecastGrid& forecast,
                        const MetricOptions& options) {
  check_weight_alignment(index, weights);
  const DayRange days = forecast.days;
  if (days.first < 3) throw ValidationError("forecast range leaves no history for scaling");
  const LevelValues scales = level_scales(panel, index, days.first - 1, ScaleKind::squared, options);
  const ForecastGrid actual = actuals_grid(panel, days);

  ScoreReport report;
  report.metric = "WRMSSE";
  const WeightTable adjusted = exclude_degenerate(weights, scales, report.excluded);
  LevelValues values;
  const double h = static_cast<double>(days.size());
  for (int level = 1; level <= kLevelCount; ++level) {
    const ForecastGrid a = aggregate(actual, index, level);
    const ForecastGrid f = aggregate(forecast, index, level);
    auto& out = values[level - 1];
    out.resize(a.n_series());
    for (std::size_t s = 0; s < a.n_series(); ++s) {
      const double scale = scales[level - 1][s];
      if (std::isnan(scale)) {
        out[s] = kNaN;
        continue;
      }
      double sum = 0.0;
      for (std::size_t t = 0; t < a.horizon(); ++t) {
        const double e = a.at(s, t) - f.at(s, t);
        sum += e * e;
      }
      out[s] = std::sqrt(sum / h / scale);
      report.series.push_back({level, a.series_ids[s], out[s]});
      report.per_level[level - 1] += adjusted.weights[level - 1][s] * out[s];
    }
  }
  report.total = wrmsse(values, adjusted);
  return report;
}

ScoreReport score_quantiles(const PanelDataset& panel, const HierarchyIndex& index,
                            const WeightTable& weights, const std::vector<QuantileGrid>& grids,
                            const MetricOptions& options) {
  check_weight_alignment(index, weights);
  if (grids.size() != static_cast<std::size_t>(kLevelCount)) {
    throw ValidationError(fmt::format("expected 12 quantile grids, got {}", grids.size()));
  }
  const DayRange days = grids.front().days;
  if (days.first < 3) throw ValidationError("forecast range leaves no history for scaling");
  const LevelValues scales =
      level_scales(panel, index, days.first - 1, ScaleKind::absolute, options);
  const ForecastGrid actual = actuals_grid(panel, days);

  ScoreReport report;
  report.metric = "WSPL";
  const WeightTable adjusted = exclude_degenerate(weights, scales, report.excluded);
  LevelQuantileValues values;
  const double h = static_cast<double>(days.size());
  for (int level = 1; level <= kLevelCount; ++level) {
    const QuantileGrid& q = grids[level - 1];
    const ForecastGrid a = aggregate(actual, index, level);
    if (q.level != level || q.n_series() != a.n_series() || !(q.days == days)) {
      throw ValidationError(fmt::format("quantile grid for level {} has the wrong shape", level));
    }
    auto& out = values[level - 1];
    out.resize(a.n_series());
    for (std::size_t s = 0; s < a.n_series(); ++s) {
      const double scale = scales[level - 1][s];
      double mean = 0.0;
      for (std::size_t j = 0; j < kQuantileCount; ++j) {
        if (std::isnan(scale)) {
          out[s][j] = kNaN;
          continue;
        }
        double sum = 0.0;
        for (std::size_t t = 0; t < a.horizon(); ++t) {
          sum += pinball(a.at(s, t), q.at(s, t)[j], kQuantileLevels[j]);
        }
        out[s][j] = sum / h / scale;
        mean += out[s][j];
      }
      if (std::isnan(scale)) continue;
      mean /= static_cast<double>(kQuantileCount);
      report.series.push_back({level, a.series_ids[s], mean});
      report.per_level[level - 1] += adjusted.weights[level - 1][s] * mean;
    }
  }
  report.total = wspl(values, adjusted);
  return report;
}

void ScoreReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  const std::string per_series = metric == "WRMSSE" ? "RMSSE" : "SPL";
  out << "level,series_id,metric,value\n";
  for (const auto& e : series) {
    out << e.level << ',' << e.series_id << ',' << per_series << ',' << format_double(e.value) << '\n';
  }
  for (int l = 0; l < kLevelCount; ++l) {
    out << (l + 1) << ",LEVEL_TOTAL," << metric << ',' << format_double(per_level[l]) << '\n';
  }
  out << "0,TOTAL," << metric << ',' << format_double(total) << '\n';
}

}  // namespace blendcast
