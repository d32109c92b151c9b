#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/grid.hpp"

namespace blendcast {

inline constexpr double kBlendFloor = 1e-6;

// Geometric-mean exponents per model group. `last` applies on the horizon
// step `last_day_position` (1-based), `early` everywhere else.
struct BlendSpec {
  std::vector<std::string> groups;
  std::vector<double> early;
  std::vector<double> last;
  int last_day_position = kHorizon;

  double early_normalizer() const;
  double last_normalizer() const;
  void validate() const;

  // lgb_nas 3.5, lgb_cos 1, keras_nas 1, fastai_cos 0.5 over 6; day 28: 3, 0.5, 0, 1.5 over 5.
  static BlendSpec reference();
};

// Values below kBlendFloor are raised to it before exponentiation. Groups
// with exponent 0 in a branch are never read for that branch.
ForecastGrid geometric_blend(const std::map<std::string, ForecastGrid>& grids, const BlendSpec& spec);

enum class SmoothingMode { horizon, with_history };

// s_1 = f_1, s_t = alpha f_t + (1 - alpha) s_{t-1} along each series' horizon.
ForecastGrid exponential_smooth(const ForecastGrid& grid, double alpha);

// Same recurrence started `history_days` before the horizon on observed
// sales (active days only); only the horizon part is returned. Grid rows
// must follow the panel's series order.
ForecastGrid exponential_smooth(const ForecastGrid& grid, double alpha, const PanelDataset& panel,
                                int history_days);

// Exhaustive search of early-branch exponents over `candidates` (one list per
// group) minimizing the mean of `score` across splits. Day-28 exponents are
// kept from `base`.
BlendSpec grid_search_blend(
    const std::vector<std::map<std::string, ForecastGrid>>& split_grids, const BlendSpec& base,
    const std::vector<std::vector<double>>& candidates,
    const std::function<double(std::size_t split, const ForecastGrid& blended)>& score);

}  // namespace blendcast
