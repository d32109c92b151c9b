#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace blendcast {

// Inclusive range of 1-based day indices.
struct DayRange {
  int first = 1;
  int last = 0;

  int size() const { return last >= first ? last - first + 1 : 0; }
  bool empty() const { return size() == 0; }
  bool contains(int day) const { return day >= first && day <= last; }
  friend bool operator==(const DayRange&, const DayRange&) = default;
};

inline constexpr int kHorizon = 28;
inline constexpr int kLevelCount = 12;
inline constexpr std::size_t kQuantileCount = 9;
inline constexpr std::size_t kMedianIndex = 4;
inline constexpr std::array<double, kQuantileCount> kQuantileLevels = {
    0.005, 0.025, 0.165, 0.25, 0.5, 0.75, 0.835, 0.975, 0.995};

// Point values for a set of series at one hierarchy level over a day range.
// Row-major: values[series * days.size() + (day - days.first)].
struct ForecastGrid {
  int level = 12;
  std::vector<std::string> series_ids;
  DayRange days;
  std::vector<double> values;

  ForecastGrid() = default;
  ForecastGrid(int level_, std::vector<std::string> ids, DayRange range)
      : level(level_),
        series_ids(std::move(ids)),
        days(range),
        values(series_ids.size() * static_cast<std::size_t>(range.size()), 0.0) {}

  std::size_t n_series() const { return series_ids.size(); }
  std::size_t horizon() const { return static_cast<std::size_t>(days.size()); }

  double& at(std::size_t series, std::size_t step) { return values[series * horizon() + step]; }
  double at(std::size_t series, std::size_t step) const {
    return values[series * horizon() + step];
  }
  std::span<double> row(std::size_t series) {
    return {values.data() + series * horizon(), horizon()};
  }
  std::span<const double> row(std::size_t series) const {
    return {values.data() + series * horizon(), horizon()};
  }
};

// Nine quantile values per (series, day) cell, ordered as kQuantileLevels.
struct QuantileGrid {
  int level = 12;
  std::vector<std::string> series_ids;
  DayRange days;
  std::vector<std::array<double, kQuantileCount>> cells;

  QuantileGrid() = default;
  QuantileGrid(int level_, std::vector<std::string> ids, DayRange range)
      : level(level_),
        series_ids(std::move(ids)),
        days(range),
        cells(series_ids.size() * static_cast<std::size_t>(range.size())) {}

  std::size_t n_series() const { return series_ids.size(); }
  std::size_t horizon() const { return static_cast<std::size_t>(days.size()); }

  std::array<double, kQuantileCount>& at(std::size_t series, std::size_t step) {
    return cells[series * horizon() + step];
  }
  const std::array<double, kQuantileCount>& at(std::size_t series, std::size_t step) const {
    return cells[series * horizon() + step];
  }
};

}  // namespace blendcast
