#include "blendcast/hierarchy.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "blendcast/csv.hpp"
#include "blendcast/error.hpp"

namespace blendcast {

const std::string& key_of(const SeriesInfo& s, GroupKey key) {
  switch (key) {
    case GroupKey::state: return s.state_id;
    case GroupKey::store: return s.store_id;
    case GroupKey::category: return s.cat_id;
    case GroupKey::department: return s.dept_id;
    case GroupKey::item: return s.item_id;
  }
  return s.item_id;
}

namespace {

// M5 naming: single-key levels carry an "_X" suffix, the total is "Total_X".
std::string aggregate_id(const SeriesInfo& s, const std::vector<GroupKey>& keys) {
  if (keys.empty()) return "Total_X";
  std::string id;
  for (GroupKey k : keys) {
    if (!id.empty()) id += '_';
    id += key_of(s, k);
  }
  if (keys.size() == 1) id += "_X";
  return id;
}

}  // namespace

const std::array<LevelSpec, kLevelCount>& level_specs() {
  using K = GroupKey;
  static const std::array<LevelSpec, kLevelCount> specs = {{
      {1, "Total", {}, 1},
      {2, "State", {K::state}, 3},
      {3, "Store", {K::store}, 10},
      {4, "Category", {K::category}, 3},
      {5, "Department", {K::department}, 7},
      {6, "State/Category", {K::state, K::category}, 9},
      {7, "State/Department", {K::state, K::department}, 21},
      {8, "Store/Category", {K::store, K::category}, 30},
      {9, "Store/Department", {K::store, K::department}, 70},
      {10, "Product", {K::item}, 3049},
      {11, "Product/State", {K::item, K::state}, 9147},
      {12, "Product/Store", {K::item, K::store}, 30490},
  }};
  return specs;
}

std::size_t HierarchyIndex::total_series() const {
  std::size_t total = 0;
  for (const auto& l : levels_) total += l.size();
  return total;
}

std::vector<std::string> HierarchyIndex::ids(int level) const {
  std::vector<std::string> out;
  for (const auto& s : this->level(level)) out.push_back(s.id);
  return out;
}

HierarchyIndex build_hierarchy(const PanelDataset& panel) {
  if (panel.n_series() == 0) throw ValidationError("cannot build a hierarchy from an empty panel");
  HierarchyIndex index;
  for (const auto& spec : level_specs()) {
    auto& out = index.levels_[spec.level - 1];
    if (spec.level == kLevelCount) {
      for (std::size_t i = 0; i < panel.n_series(); ++i) out.push_back({panel.series(i).id, {i}});
      continue;
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < panel.n_series(); ++i) {
      groups[aggregate_id(panel.series(i), spec.keys)].push_back(i);
    }
    for (auto& [id, members] : groups) out.push_back({id, std::move(members)});
  }
  return index;
}

ForecastGrid aggregate(const ForecastGrid& bottom, const HierarchyIndex& index, int level) {
  if (level < 1 || level > kLevelCount) throw ValidationError(fmt::format("no level {}", level));
  const auto& leaves = index.level(kLevelCount);
  if (bottom.n_series() != leaves.size()) {
    throw ValidationError(fmt::format("aggregate: grid has {} level-12 series, hierarchy has {}",
                                      bottom.n_series(), leaves.size()));
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (bottom.series_ids[i] != leaves[i].id) {
      throw ValidationError(fmt::format("aggregate: missing member series '{}'", leaves[i].id));
    }
  }
  if (level == kLevelCount) return bottom;

  const auto& series = index.level(level);
  ForecastGrid out(level, index.ids(level), bottom.days);
  const std::size_t h = bottom.horizon();
  for (std::size_t a = 0; a < series.size(); ++a) {
    auto dst = out.row(a);
    for (std::size_t m : series[a].members) {
      auto src = bottom.row(m);
      for (std::size_t t = 0; t < h; ++t) dst[t] += src[t];
    }
  }
  return out;
}

ForecastGrid actuals_grid(const PanelDataset& panel, DayRange days) {
  if (days.first < 1 || days.last > panel.n_days()) {
    throw ValidationError(fmt::format("days [{}, {}] outside observed history 1..{}", days.first,
                                      days.last, panel.n_days()));
  }
  std::vector<std::string> ids;
  for (const auto& s : panel.all_series()) ids.push_back(s.id);
  ForecastGrid grid(kLevelCount, std::move(ids), days);
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    for (int d = days.first; d <= days.last; ++d) grid.at(i, d - days.first) = panel.y(i, d);
  }
  return grid;
}

double WeightTable::total() const {
  double sum = 0.0;
  for (const auto& level : weights) {
    for (double w : level) sum += w;
  }
  return sum;
}

void WeightTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << "level,series_id,weight\n";
  for (int l = 0; l < kLevelCount; ++l) {
    for (std::size_t i = 0; i < ids[l].size(); ++i) {
      out << (l + 1) << ',' << ids[l][i] << ',' << format_double(weights[l][i]) << '\n';
    }
  }
}

WeightTable compute_weights(const PanelDataset& panel, const HierarchyIndex& index, int last_day) {
  if (last_day < 28 || last_day > panel.n_days()) {
    throw ValidationError(fmt::format("weight window end {} outside 28..{}", last_day,
                                      panel.n_days()));
  }
  const int first_day = last_day - 27;
  std::vector<double> dollars(panel.n_series(), 0.0);
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    double sum = 0.0;
    for (int d = first_day; d <= last_day; ++d) {
      const double units = panel.y(i, d);
      if (units == 0.0) continue;
      const double price = panel.price(i, d);
      if (std::isnan(price)) {
        throw ValidationError(fmt::format("series {} sold {} units on day {} without a price",
                                          panel.series(i).id, units, d));
      }
      sum += units * price;
    }
    dollars[i] = sum;
  }

  WeightTable table;
  for (int level = 1; level <= kLevelCount; ++level) {
    const auto& series = index.level(level);
    auto& w = table.weights[level - 1];
    table.ids[level - 1] = index.ids(level);
    w.resize(series.size(), 0.0);
    double level_total = 0.0;
    for (std::size_t a = 0; a < series.size(); ++a) {
      for (std::size_t m : series[a].members) w[a] += dollars[m];
      level_total += w[a];
    }
    if (!(level_total > 0.0)) {
      throw ValidationError(fmt::format("no dollar sales in weighting window [{}, {}]", first_day,
                                        last_day));
    }
    for (double& x : w) x = x / level_total / kLevelCount;
  }
  return table;
}

}  // namespace blendcast
