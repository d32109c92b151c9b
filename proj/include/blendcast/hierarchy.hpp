#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/grid.hpp"

namespace blendcast {

enum class GroupKey : std::uint8_t { state, store, category, department, item };

const std::string& key_of(const SeriesInfo& series, GroupKey key);

struct LevelSpec {
  int level;
  std::string_view description;
  std::vector<GroupKey> keys;
  int full_scale_count;  // series count on the complete M5 key set
};

// The twelve aggregation levels, level 1 (total) through 12 (item x store).
const std::array<LevelSpec, kLevelCount>& level_specs();

struct AggregateSeries {
  std::string id;
  std::vector<std::size_t> members;  // level-12 series indices
};

// Member lists for every aggregate series at every level. Aggregate series are
// ordered by id; level 12 keeps panel order.
class HierarchyIndex {
 public:
  const std::vector<AggregateSeries>& level(int level) const { return levels_.at(level - 1); }
  std::size_t level_size(int level) const { return levels_.at(level - 1).size(); }
  std::size_t bottom_count() const { return levels_.back().size(); }
  std::size_t total_series() const;
  std::vector<std::string> ids(int level) const;

  friend HierarchyIndex build_hierarchy(const PanelDataset&);

 private:
  std::array<std::vector<AggregateSeries>, kLevelCount> levels_;
};

HierarchyIndex build_hierarchy(const PanelDataset& panel);

// Sums a level-12 grid up to `level`. The input must hold every level-12
// series of the index, in index order.
ForecastGrid aggregate(const ForecastGrid& bottom, const HierarchyIndex& index, int level);

// Observed level-12 sales as a grid over `days` (days must lie within history).
ForecastGrid actuals_grid(const PanelDataset& panel, DayRange days);

// Per-level series weights aligned with HierarchyIndex order.
struct WeightTable {
  std::array<std::vector<std::string>, kLevelCount> ids;
  std::array<std::vector<double>, kLevelCount> weights;

  const std::vector<double>& level(int level) const { return weights.at(level - 1); }
  double total() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Dollar-sales weights over the 28 days ending at `last_day`, each level
// normalized to 1/12.
WeightTable compute_weights(const PanelDataset& panel, const HierarchyIndex& index, int last_day);

}  // namespace blendcast
