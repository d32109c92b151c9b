#include "blendcast/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "blendcast/csv.hpp"
#include "blendcast/error.hpp"
#include "blendcast/parallel.hpp"

namespace blendcast {

namespace {

constexpr std::size_t kLast = kQuantileCount - 1;

}  // namespace

double QuantileFactorTable::effective(int l, std::size_t q) const {
  const double f = factors.at(l - 1).at(q);
  return q == kLast ? f * last_multiplier.at(l - 1) : f;
}

void QuantileFactorTable::validate() const {
  for (int l = 1; l <= kLevelCount; ++l) {
    const auto& f = factors[l - 1];
    if (f[kMedianIndex] != 1.0) {
      throw ValidationError(fmt::format("factor table: level {} median factor must be 1", l));
    }
    for (std::size_t q = 0; q < kQuantileCount; ++q) {
      if (!std::isfinite(f[q]) || f[q] < 0.0) {
        throw ValidationError(fmt::format("factor table: level {} has invalid factor {}", l, f[q]));
      }
      if (q > 0 && f[q] < f[q - 1]) {
        throw ValidationError(fmt::format(
            "factor table: level {} factors decrease between u={} and u={}", l,
            kQuantileLevels[q - 1], kQuantileLevels[q]));
      }
    }
    const double m = last_multiplier[l - 1];
    if (std::find(kLastMultipliers.begin(), kLastMultipliers.end(), m) == kLastMultipliers.end()) {
      throw ValidationError(
          fmt::format("factor table: level {} last multiplier {} not in {{1.0, 1.02, 1.03}}", l, m));
    }
  }
}

QuantileFactorTable QuantileFactorTable::identity() {
  QuantileFactorTable t;
  for (auto& row : t.factors) row.fill(1.0);
  t.last_multiplier.fill(1.0);
  return t;
}

QuantileFactorTable QuantileFactorTable::reference() {
  QuantileFactorTable t;
  t.factors = {{
      {0.890, 0.922, 0.963, 0.973, 1.000, 1.027, 1.037, 1.078, 1.143},
      {0.869, 0.907, 0.956, 0.969, 1.000, 1.031, 1.043, 1.093, 1.166},
      {0.848, 0.893, 0.950, 0.964, 1.000, 1.036, 1.049, 1.107, 1.186},
      {0.869, 0.907, 0.951, 0.969, 1.000, 1.031, 1.043, 1.093, 1.166},
      {0.827, 0.878, 0.943, 0.960, 1.000, 1.040, 1.057, 1.123, 1.209},
      {0.827, 0.878, 0.943, 0.960, 1.000, 1.040, 1.057, 1.123, 1.209},
      {0.787, 0.850, 0.930, 0.951, 1.000, 1.048, 1.070, 1.150, 1.251},
      {0.767, 0.835, 0.924, 0.947, 1.000, 1.053, 1.076, 1.166, 1.272},
      {0.707, 0.793, 0.905, 0.934, 1.000, 1.066, 1.095, 1.208, 1.335},
      {0.249, 0.416, 0.707, 0.795, 1.000, 1.218, 1.323, 1.720, 2.041},
      {0.111, 0.254, 0.590, 0.708, 1.000, 1.336, 1.504, 2.158, 2.662},
      {0.005, 0.055, 0.295, 0.446, 1.000, 1.884, 2.328, 3.548, 4.066},
  }};
  t.last_multiplier.fill(1.0);
  return t;
}

std::string QuantileFactorTable::to_csv() const {
  std::string out = "level";
  for (double u : kQuantileLevels) out += "," + format_double(u);
  out += ",last_multiplier\n";
  for (int l = 1; l <= kLevelCount; ++l) {
    out += std::to_string(l);
    for (double f : factors[l - 1]) out += "," + format_double(f);
    out += "," + format_double(last_multiplier[l - 1]) + "\n";
  }
  return out;
}

QuantileFactorTable QuantileFactorTable::parse_csv(const std::string& text, const std::string& source) {
  const CsvTable csv = blendcast::parse_csv(text, source);
  if (csv.header.size() != kQuantileCount + 2 || csv.header.front() != "level") {
    throw ParseError(source, 1, "expected columns level, 9 quantile levels, last_multiplier");
  }
  QuantileFactorTable t;
  std::array<bool, kLevelCount> seen{};
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::size_t line = csv.line_numbers[r];
    const auto level = parse_integer(csv, r, row[0]);
    if (level < 1 || level > kLevelCount) throw ParseError(source, line, "level must be 1..12");
    if (seen[level - 1]) throw ParseError(source, line, fmt::format("duplicate level {}", level));
    seen[level - 1] = true;
    for (std::size_t q = 0; q < kQuantileCount; ++q) {
      t.factors[level - 1][q] = parse_double(csv, r, row[q + 1]);
    }
    t.last_multiplier[level - 1] = parse_double(csv, r, row[kQuantileCount + 1]);
  }
  for (int l = 1; l <= kLevelCount; ++l) {
    if (!seen[l - 1]) throw ValidationError(fmt::format("{}: level {} missing", source, l));
  }
  t.validate();
  return t;
}

QuantileFactorTable QuantileFactorTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path.string());
}

void QuantileFactorTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << to_csv();
}

QuantileGrid apply_factors(const ForecastGrid& median, const QuantileFactorTable& table) {
  table.validate();
  if (median.level < 1 || median.level > kLevelCount) {
    throw ValidationError(fmt::format("apply_factors: bad level {}", median.level));
  }
  QuantileGrid out(median.level, median.series_ids, median.days);
  for (std::size_t i = 0; i < median.values.size(); ++i) {
    const double m = median.values[i];
    auto& cell = out.cells[i];
    for (std::size_t q = 0; q < kQuantileCount; ++q) {
      cell[q] = q == kMedianIndex ? m : m * table.effective(median.level, q);
    }
  }
  return out;
}

std::vector<QuantileGrid> apply_factors(const std::vector<ForecastGrid>& medians,
                                        const QuantileFactorTable& table) {
  if (medians.size() != static_cast<std::size_t>(kLevelCount)) {
    throw ValidationError("apply_factors: one median grid per level required");
  }
  std::vector<QuantileGrid> out;
  for (const auto& m : medians) out.push_back(apply_factors(m, table));
  return out;
}

FactorFitInput prepare_factor_fit(const PanelDataset& panel, const HierarchyIndex& index,
                                  const WeightTable& weights, const ForecastGrid& median12,
                                  const MetricOptions& options) {
  if (median12.days.last > panel.n_days()) {
    throw ValidationError("factor fit: median days extend beyond observed history");
  }
  const ForecastGrid actual12 = actuals_grid(panel, median12.days);
  const LevelValues scales =
      level_scales(panel, index, median12.days.first - 1, ScaleKind::absolute, options);
  FactorFitInput input;
  for (int l = 1; l <= kLevelCount; ++l) {
    const ForecastGrid m = aggregate(median12, index, l);
    const ForecastGrid a = aggregate(actual12, index, l);
    FactorFitLevel& level = input.levels[l - 1];
    for (std::size_t s = 0; s < m.n_series(); ++s) {
      level.medians.emplace_back(m.row(s).begin(), m.row(s).end());
      level.actuals.emplace_back(a.row(s).begin(), a.row(s).end());
      const double scale = scales[l - 1][s];
      const double w = weights.level(l)[s];
      level.coefficient.push_back(std::isnan(scale) || w == 0.0 ? 0.0 : w / scale);
    }
  }
  return input;
}

namespace {

// Weighted pinball sum of one level at quantile u for factor f, in WSPL units.
double slice_loss(const FactorFitLevel& level, double u, double f) {
  double total = 0.0;
  for (std::size_t s = 0; s < level.medians.size(); ++s) {
    const double c = level.coefficient[s];
    if (c == 0.0) continue;
    const auto& m = level.medians[s];
    const auto& a = level.actuals[s];
    double sum = 0.0;
    for (std::size_t t = 0; t < m.size(); ++t) sum += pinball(a[t], f * m[t], u);
    total += c * sum / static_cast<double>(m.size());
  }
  return total / static_cast<double>(kQuantileCount);
}

double level_loss(const FactorFitLevel& level, const QuantileFactorTable& table, int l) {
  double total = 0.0;
  for (std::size_t q = 0; q < kQuantileCount; ++q) {
    total += slice_loss(level, kQuantileLevels[q], table.effective(l, q));
  }
  return total;
}

bool degenerate(const FactorFitLevel& level) {
  bool any_weight = false;
  bool any_actual = false;
  for (std::size_t s = 0; s < level.medians.size(); ++s) {
    if (level.coefficient[s] == 0.0) continue;
    any_weight = true;
    for (double a : level.actuals[s]) any_actual = any_actual || a != 0.0;
  }
  return !any_weight || !any_actual;
}

double search_upper(const FactorFitLevel& level, const FactorFitOptions& options) {
  double ratio = 0.0;
  for (std::size_t s = 0; s < level.medians.size(); ++s) {
    if (level.coefficient[s] == 0.0) continue;
    for (std::size_t t = 0; t < level.medians[s].size(); ++t) {
      const double m = level.medians[s][t];
      if (m > 0.0) ratio = std::max(ratio, level.actuals[s][t] / m);
    }
  }
  return std::min(options.max_factor, std::max(2.0, 1.05 * ratio));
}

// Best of the golden-section result and `fallback`.
double fit_scalar(const std::function<double(double)>& loss, double lo, double hi, double fallback,
                  double tolerance) {
  const double x = golden_section_minimize(loss, lo, hi, tolerance);
  return loss(x) < loss(fallback) ? x : fallback;
}

void fit_symmetric(const FactorFitLevel& level, int l, const FactorFitOptions& options,
                   QuantileFactorTable& table) {
  std::array<double, kMedianIndex> delta{};
  double best_multiplier = 1.0;
  for (std::size_t k = 0; k < kMedianIndex; ++k) {
    const double u_low = kQuantileLevels[k];
    const double u_high = kQuantileLevels[kLast - k];
    double best_loss = std::numeric_limits<double>::infinity();
    for (double mult : kLastMultipliers) {
      if (k != 0 && mult != 1.0) continue;
      auto loss = [&](double d) {
        return slice_loss(level, u_low, 1.0 - d) + slice_loss(level, u_high, (1.0 + d) * mult);
      };
      const double d = fit_scalar(loss, 0.0, 1.0, 0.0, options.tolerance);
      const double value = loss(d);
      if (value < best_loss) {
        best_loss = value;
        delta[k] = d;
        if (k == 0) best_multiplier = mult;
      }
    }
  }
  // Widths must shrink toward the median: project delta onto non-increasing.
  std::vector<double> reversed(delta.rbegin(), delta.rend());
  const std::vector<double> projected = isotonic_increasing(reversed);
  auto& f = table.factors[l - 1];
  for (std::size_t k = 0; k < kMedianIndex; ++k) {
    const double d = projected[kMedianIndex - 1 - k];
    f[k] = 1.0 - d;
    f[kLast - k] = 1.0 + d;
  }
  f[kMedianIndex] = 1.0;
  table.last_multiplier[l - 1] = best_multiplier;
}

void fit_free(const FactorFitLevel& level, int l, const FactorFitOptions& options,
              QuantileFactorTable& table) {
  const double hi = search_upper(level, options);
  auto& f = table.factors[l - 1];
  for (std::size_t q = 0; q < kQuantileCount; ++q) {
    if (q == kMedianIndex) continue;
    const double u = kQuantileLevels[q];
    if (q != kLast) {
      f[q] = fit_scalar([&](double x) { return slice_loss(level, u, x); }, 0.0, hi, 1.0,
                        options.tolerance);
      continue;
    }
    double best_loss = std::numeric_limits<double>::infinity();
    for (double mult : kLastMultipliers) {
      auto loss = [&](double x) { return slice_loss(level, u, x * mult); };
      const double x = fit_scalar(loss, 0.0, hi / mult, 1.0, options.tolerance);
      if (loss(x) < best_loss) {
        best_loss = loss(x);
        f[q] = x;
        table.last_multiplier[l - 1] = mult;
      }
    }
  }
  const std::vector<double> lower = isotonic_increasing(std::span<const double>(f.data(), kMedianIndex));
  const std::vector<double> upper =
      isotonic_increasing(std::span<const double>(f.data() + kMedianIndex + 1, kMedianIndex));
  for (std::size_t k = 0; k < kMedianIndex; ++k) {
    f[k] = std::min(lower[k], 1.0);
    f[kMedianIndex + 1 + k] = std::max(upper[k], 1.0);
  }
  f[kMedianIndex] = 1.0;
}

}  // namespace

double factor_fit_wspl(const FactorFitInput& input, const QuantileFactorTable& table) {
  double total = 0.0;
  for (int l = 1; l <= kLevelCount; ++l) total += level_loss(input.levels[l - 1], table, l);
  return total;
}

FactorFitResult optimize_factors(const FactorFitInput& input, const FactorFitOptions& options) {
  if (!(options.tolerance > 0.0)) throw ValidationError("factor fit: tolerance must be positive");
  const QuantileFactorTable identity = QuantileFactorTable::identity();
  FactorFitResult result;
  result.table = identity;
  std::array<bool, kLevelCount> kept_identity{};
  parallel_for(kLevelCount, [&](std::size_t i) {
    const int l = static_cast<int>(i) + 1;
    const FactorFitLevel& level = input.levels[i];
    if (degenerate(level)) {
      spdlog::warn("factor fit: level {} has no weighted non-zero actuals, keeping identity factors", l);
      kept_identity[i] = true;
      return;
    }
    QuantileFactorTable trial = identity;
    if (l <= options.symmetric_through_level) {
      fit_symmetric(level, l, options, trial);
    } else {
      fit_free(level, l, options, trial);
    }
    if (level_loss(level, trial, l) > level_loss(level, identity, l)) {
      kept_identity[i] = true;
      return;
    }
    result.table.factors[i] = trial.factors[i];
    result.table.last_multiplier[i] = trial.last_multiplier[i];
  });
  for (int l = 1; l <= kLevelCount; ++l) {
    if (kept_identity[l - 1]) result.identity_levels.push_back(l);
  }
  result.table.validate();
  result.identity_wspl = factor_fit_wspl(input, identity);
  result.fitted_wspl = factor_fit_wspl(input, result.table);
  return result;
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tolerance) {
  if (!(hi >= lo)) throw ValidationError("golden section: empty interval");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2.0;
}

std::vector<double> isotonic_increasing(std::span<const double> values) {
  std::vector<double> level;
  std::vector<std::size_t> width;
  for (double v : values) {
    level.push_back(v);
    width.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t n = level.size();
      const double w1 = static_cast<double>(width[n - 2]);
      const double w2 = static_cast<double>(width[n - 1]);
      level[n - 2] = (level[n - 2] * w1 + level[n - 1] * w2) / (w1 + w2);
      width[n - 2] += width[n - 1];
      level.pop_back();
      width.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), width[b], level[b]);
  return out;
}

double empirical_quantile(std::span<const double> sorted, double u) {
  if (sorted.empty()) throw ValidationError("empirical quantile of an empty sample");
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError(fmt::format("quantile level {} not in [0,1]", u));
  const double h = static_cast<double>(sorted.size() - 1) * u;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

std::array<double, kQuantileCount> quantiles_of(std::vector<double>& sample) {
  std::array<double, kQuantileCount> out{};
  if (sample.empty()) return out;
  std::sort(sample.begin(), sample.end());
  for (std::size_t q = 0; q < kQuantileCount; ++q) out[q] = empirical_quantile(sample, kQuantileLevels[q]);
  return out;
}

// Values of one daily path over [first, last]: raw days or whole-week means.
std::vector<double> window_sample(const std::function<double(int)>& sales, int first, int last,
                                  bool weekly) {
  std::vector<double> sample;
  if (last < first) return sample;
  if (!weekly) {
    for (int day = first; day <= last; ++day) sample.push_back(sales(day));
    return sample;
  }
  for (int end = last; end - 6 >= first; end -= 7) {
    double sum = 0.0;
    for (int day = end - 6; day <= end; ++day) sum += sales(day);
    sample.push_back(sum / 7.0);
  }
  return sample;
}

int window_start(int last_day, int window) {
  const int first = last_day - window + 1;
  if (first < 1) {
    spdlog::warn("statistics window of {} days exceeds the {} days of history, shrinking", window,
                 last_day);
    return 1;
  }
  return first;
}

}  // namespace

StatQuantiles statistical_quantiles(const PanelDataset& panel, int last_day, int window, bool weekly) {
  if (window < 1) throw ValidationError("statistics window must be >= 1 day");
  if (last_day < 1 || last_day > panel.n_days()) {
    throw ValidationError(fmt::format("statistics end day {} outside history", last_day));
  }
  const int first = window_start(last_day, window);
  StatQuantiles out;
  out.values.resize(panel.n_series());
  for (std::size_t s = 0; s < panel.n_series(); ++s) {
    out.series_ids.push_back(panel.series(s).id);
    const int from = std::max(first, panel.series(s).first_active_day);
    std::vector<double> sample =
        window_sample([&](int day) { return panel.y(s, day); }, from, last_day, weekly);
    out.values[s] = quantiles_of(sample);
  }
  return out;
}

StatQuantiles level11_statistics(const PanelDataset& panel, const HierarchyIndex& index,
                                 const StatQuantiles& level12, Level11Stats strategy, int last_day,
                                 int window) {
  StatQuantiles out;
  const auto& aggregates = index.level(11);
  out.values.resize(aggregates.size());
  if (strategy == Level11Stats::sum_members) {
    if (level12.values.size() != index.bottom_count()) {
      throw ValidationError("level-11 statistics need level-12 statistics for every series");
    }
    for (std::size_t a = 0; a < aggregates.size(); ++a) {
      out.series_ids.push_back(aggregates[a].id);
      out.values[a].fill(0.0);
      for (std::size_t m : aggregates[a].members) {
        for (std::size_t q = 0; q < kQuantileCount; ++q) out.values[a][q] += level12.values[m][q];
      }
    }
    return out;
  }
  const int first = window_start(last_day, window);
  for (std::size_t a = 0; a < aggregates.size(); ++a) {
    out.series_ids.push_back(aggregates[a].id);
    int from = last_day + 1;
    for (std::size_t m : aggregates[a].members) from = std::min(from, panel.series(m).first_active_day);
    from = std::max(from, first);
    std::vector<double> sample = window_sample(
        [&](int day) {
          double sum = 0.0;
          for (std::size_t m : aggregates[a].members) sum += panel.y(m, day);
          return sum;
        },
        from, last_day, false);
    out.values[a] = quantiles_of(sample);
  }
  return out;
}

StatisticalSet compute_statistical_set(const PanelDataset& panel, int last_day) {
  StatisticalSet set;
  set.daily_long = statistical_quantiles(panel, last_day, 13 * kHorizon, false);
  set.daily_short = statistical_quantiles(panel, last_day, kHorizon, false);
  set.weekly_long = statistical_quantiles(panel, last_day, 13 * kHorizon, true);
  set.weekly_short = statistical_quantiles(panel, last_day, 3 * kHorizon, true);
  return set;
}

void restore_monotone(std::array<double, kQuantileCount>& cell) {
  const double median = cell[kMedianIndex];
  std::sort(cell.begin(), cell.begin() + kMedianIndex);
  std::sort(cell.begin() + kMedianIndex + 1, cell.end());
  for (std::size_t q = 0; q < kMedianIndex; ++q) cell[q] = std::min(cell[q], median);
  for (std::size_t q = kMedianIndex + 1; q < kQuantileCount; ++q) cell[q] = std::max(cell[q], median);
  for (double& v : cell) v = std::max(v, 0.0);
}

namespace {

void check_stats(const QuantileGrid& grid, const StatQuantiles& stats, const char* name) {
  if (stats.series_ids != grid.series_ids) {
    throw ValidationError(fmt::format("correction: {} statistics do not match the grid's series", name));
  }
}

}  // namespace

QuantileGrid correct_level12(const QuantileGrid& estimated, const StatisticalSet& stats) {
  check_stats(estimated, stats.daily_long, "13x28-day");
  check_stats(estimated, stats.daily_short, "28-day");
  check_stats(estimated, stats.weekly_long, "weekly 13x28-day");
  check_stats(estimated, stats.weekly_short, "weekly 3x28-day");
  QuantileGrid out = estimated;
  for (std::size_t s = 0; s < out.n_series(); ++s) {
    for (std::size_t t = 0; t < out.horizon(); ++t) {
      auto& cell = out.at(s, t);
      for (std::size_t q = 0; q < kQuantileCount; ++q) {
        if (q == kMedianIndex) continue;
        const double daily = (stats.daily_long.values[s][q] + 1.75 * stats.daily_short.values[s][q]) / 2.75;
        const double weekly = (stats.weekly_long.values[s][q] + stats.weekly_short.values[s][q]) / 2.0;
        cell[q] = 0.2 * cell[q] + 0.7 * daily + 0.1 * weekly;
      }
    }
  }
  return out;
}

QuantileGrid correct_level11(const QuantileGrid& estimated, const StatQuantiles& daily_long,
                             const StatQuantiles& daily_short) {
  check_stats(estimated, daily_long, "13x28-day");
  check_stats(estimated, daily_short, "28-day");
  QuantileGrid out = estimated;
  for (std::size_t s = 0; s < out.n_series(); ++s) {
    for (std::size_t t = 0; t < out.horizon(); ++t) {
      auto& cell = out.at(s, t);
      for (std::size_t q = 0; q < kQuantileCount; ++q) {
        if (q == kMedianIndex) continue;
        const double daily = (daily_long.values[s][q] + 1.75 * daily_short.values[s][q]) / 2.75;
        cell[q] = 0.91 * cell[q] + 0.09 * daily;
      }
    }
  }
  return out;
}

std::vector<QuantileGrid> quantile_pipeline(const PanelDataset& panel, const HierarchyIndex& index,
                                            const ForecastGrid& median12,
                                            const QuantileFactorTable& table,
                                            const QuantilePipelineOptions& options) {
  std::vector<ForecastGrid> medians;
  for (int l = 1; l <= kLevelCount; ++l) medians.push_back(aggregate(median12, index, l));
  std::vector<QuantileGrid> grids = apply_factors(medians, table);
  if (options.corrections) {
    const int last_day = std::min(panel.n_days(), median12.days.first - 1);
    const StatisticalSet stats = compute_statistical_set(panel, last_day);
    grids[11] = correct_level12(grids[11], stats);
    const StatQuantiles long11 = level11_statistics(panel, index, stats.daily_long, options.level11,
                                                    last_day, 13 * kHorizon);
    const StatQuantiles short11 = level11_statistics(panel, index, stats.daily_short,
                                                     options.level11, last_day, kHorizon);
    grids[10] = correct_level11(grids[10], long11, short11);
  }
  for (auto& grid : grids) {
    for (auto& cell : grid.cells) restore_monotone(cell);
  }
  return grids;
}

std::string quantile_submission_csv(const std::vector<QuantileGrid>& grids) {
  if (grids.size() != static_cast<std::size_t>(kLevelCount)) {
    throw ValidationError("quantile submission needs one grid per level");
  }
  const std::size_t h = grids.front().horizon();
  std::string out = "series_id,quantile";
  for (std::size_t t = 1; t <= h; ++t) out += ",F" + std::to_string(t);
  out += '\n';
  for (const auto& grid : grids) {
    if (grid.horizon() != h) throw ValidationError("quantile submission: horizons differ");
    for (std::size_t s = 0; s < grid.n_series(); ++s) {
      for (std::size_t q = 0; q < kQuantileCount; ++q) {
        out += grid.series_ids[s];
        out += ',';
        out += format_double(kQuantileLevels[q]);
        for (std::size_t t = 0; t < h; ++t) {
          out += ',';
          out += format_double(grid.at(s, t)[q]);
        }
        out += '\n';
      }
    }
  }
  return out;
}

void write_quantile_submission(const std::filesystem::path& path, const std::vector<QuantileGrid>& grids) {
  const std::string text = quantile_submission_csv(grids);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::vector<QuantileGrid> read_quantile_submission(const std::filesystem::path& path,
                                                   const HierarchyIndex& index, DayRange days) {
  const CsvTable csv = read_csv(path);
  if (csv.rows.empty()) throw ValidationError(fmt::format("{}: no forecast rows", path.string()));
  const std::size_t h = static_cast<std::size_t>(days.size());
  if (csv.header.size() != h + 2) {
    throw ValidationError(fmt::format("{}: expected series_id, quantile and {} forecast columns",
                                      path.string(), h));
  }
  std::map<std::pair<std::string, std::size_t>, std::size_t> rows;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const double u = parse_double(csv, r, csv.rows[r][1]);
    auto it = std::find(kQuantileLevels.begin(), kQuantileLevels.end(), u);
    if (it == kQuantileLevels.end()) {
      throw ParseError(path.string(), csv.line_numbers[r], fmt::format("unknown quantile {}", u));
    }
    const auto q = static_cast<std::size_t>(it - kQuantileLevels.begin());
    if (!rows.emplace(std::make_pair(csv.rows[r][0], q), r).second) {
      throw ParseError(path.string(), csv.line_numbers[r], "duplicate series/quantile row");
    }
  }
  std::vector<QuantileGrid> grids;
  for (int l = 1; l <= kLevelCount; ++l) {
    QuantileGrid grid(l, index.ids(l), days);
    for (std::size_t s = 0; s < grid.n_series(); ++s) {
      for (std::size_t q = 0; q < kQuantileCount; ++q) {
        auto it = rows.find({grid.series_ids[s], q});
        if (it == rows.end()) {
          throw ValidationError(fmt::format("{}: missing row for '{}' at quantile {}", path.string(),
                                            grid.series_ids[s], kQuantileLevels[q]));
        }
        const std::size_t r = it->second;
        for (std::size_t t = 0; t < h; ++t) {
          grid.at(s, t)[q] = parse_double(csv, r, csv.rows[r][t + 2]);
        }
      }
    }
    grids.push_back(std::move(grid));
  }
  return grids;
}

}  // namespace blendcast
