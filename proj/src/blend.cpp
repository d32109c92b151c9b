#include "blendcast/blend.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "blendcast/error.hpp"
#include "blendcast/parallel.hpp"

namespace blendcast {

double BlendSpec::early_normalizer() const {
  double sum = 0.0;
  for (double e : early) sum += e;
  return sum;
}

double BlendSpec::last_normalizer() const {
  double sum = 0.0;
  for (double e : last) sum += e;
  return sum;
}

void BlendSpec::validate() const {
  if (groups.empty()) throw ValidationError("blend: no groups");
  if (early.size() != groups.size() || last.size() != groups.size()) {
    throw ValidationError("blend: one early and one last exponent needed per group");
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!(early[g] >= 0.0) || !(last[g] >= 0.0)) {
      throw ValidationError(fmt::format("blend: negative exponent for group '{}'", groups[g]));
    }
  }
  if (!(early_normalizer() > 0.0) || !(last_normalizer() > 0.0)) {
    throw ValidationError("blend: each branch needs a positive exponent");
  }
  if (last_day_position < 1) throw ValidationError("blend: last_day_position must be >= 1");
}

BlendSpec BlendSpec::reference() {
  BlendSpec spec;
  spec.groups = {"lgb_nas", "lgb_cos", "keras_nas", "fastai_cos"};
  spec.early = {3.5, 1.0, 1.0, 0.5};
  spec.last = {3.0, 0.5, 0.0, 1.5};
  spec.last_day_position = kHorizon;
  return spec;
}

ForecastGrid geometric_blend(const std::map<std::string, ForecastGrid>& grids, const BlendSpec& spec) {
  spec.validate();
  std::vector<const ForecastGrid*> inputs(spec.groups.size(), nullptr);
  const ForecastGrid* shape = nullptr;
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    if (spec.early[g] == 0.0 && spec.last[g] == 0.0) continue;
    auto it = grids.find(spec.groups[g]);
    if (it == grids.end()) {
      throw ValidationError(fmt::format("blend: missing forecasts for group '{}'", spec.groups[g]));
    }
    inputs[g] = &it->second;
    if (!shape) {
      shape = inputs[g];
    } else if (inputs[g]->series_ids != shape->series_ids || inputs[g]->days != shape->days) {
      throw ValidationError(fmt::format("blend: group '{}' has a different series/day index",
                                        spec.groups[g]));
    }
  }

  ForecastGrid out(shape->level, shape->series_ids, shape->days);
  const double early_norm = spec.early_normalizer();
  const double last_norm = spec.last_normalizer();
  parallel_for(out.n_series(), [&](std::size_t s) {
    for (std::size_t t = 0; t < out.horizon(); ++t) {
      const bool last_branch = static_cast<int>(t) + 1 == spec.last_day_position;
      const std::vector<double>& exps = last_branch ? spec.last : spec.early;
      const double norm = last_branch ? last_norm : early_norm;
      double product = 1.0;
      double common = std::numeric_limits<double>::quiet_NaN();
      bool all_equal = true;
      for (std::size_t g = 0; g < exps.size(); ++g) {
        if (exps[g] == 0.0) continue;
        const double v = inputs[g]->at(s, t);
        if (!(v >= 0.0)) {
          throw ValidationError(fmt::format("blend: invalid value {} for group '{}' series '{}'", v,
                                            spec.groups[g], out.series_ids[s]));
        }
        if (std::isnan(common)) {
          common = v;
        } else if (v != common) {
          all_equal = false;
        }
        product *= std::pow(std::max(v, kBlendFloor), exps[g] / norm);
      }
      out.at(s, t) = all_equal ? common : product;
    }
  });
  return out;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ValidationError(fmt::format("smoothing alpha {} outside (0, 1]", alpha));
  }
}

}  // namespace

ForecastGrid exponential_smooth(const ForecastGrid& grid, double alpha) {
  check_alpha(alpha);
  ForecastGrid out = grid;
  if (alpha == 1.0) return out;
  for (std::size_t s = 0; s < out.n_series(); ++s) {
    auto row = out.row(s);
    for (std::size_t t = 1; t < row.size(); ++t) row[t] = alpha * row[t] + (1.0 - alpha) * row[t - 1];
  }
  return out;
}

ForecastGrid exponential_smooth(const ForecastGrid& grid, double alpha, const PanelDataset& panel,
                                int history_days) {
  check_alpha(alpha);
  if (grid.n_series() != panel.n_series()) {
    throw ValidationError("smoothing with history needs a level-12 grid in panel order");
  }
  if (history_days < 0) throw ValidationError("history_days must be >= 0");
  ForecastGrid out = grid;
  if (alpha == 1.0) return out;
  const int first = std::max(1, grid.days.first - history_days);
  const int last = std::min(panel.n_days(), grid.days.first - 1);
  for (std::size_t s = 0; s < out.n_series(); ++s) {
    bool started = false;
    double level = 0.0;
    for (int day = first; day <= last; ++day) {
      if (!panel.active(s, day)) continue;
      const double y = panel.y(s, day);
      level = started ? alpha * y + (1.0 - alpha) * level : y;
      started = true;
    }
    auto row = out.row(s);
    for (std::size_t t = 0; t < row.size(); ++t) {
      level = started ? alpha * row[t] + (1.0 - alpha) * level : row[t];
      started = true;
      row[t] = level;
    }
  }
  return out;
}

BlendSpec grid_search_blend(
    const std::vector<std::map<std::string, ForecastGrid>>& split_grids, const BlendSpec& base,
    const std::vector<std::vector<double>>& candidates,
    const std::function<double(std::size_t split, const ForecastGrid& blended)>& score) {
  if (candidates.size() != base.groups.size()) {
    throw ValidationError("grid search: one candidate list per group");
  }
  for (const auto& c : candidates) {
    if (c.empty()) throw ValidationError("grid search: empty candidate list");
  }
  BlendSpec best = base;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pos(candidates.size(), 0);
  BlendSpec trial = base;
  while (true) {
    for (std::size_t g = 0; g < pos.size(); ++g) trial.early[g] = candidates[g][pos[g]];
    if (trial.early_normalizer() > 0.0) {
      double total = 0.0;
      for (std::size_t k = 0; k < split_grids.size(); ++k) {
        total += score(k, geometric_blend(split_grids[k], trial));
      }
      const double mean = total / static_cast<double>(std::max<std::size_t>(1, split_grids.size()));
      if (mean < best_score) {
        best_score = mean;
        best = trial;
      }
    }
    std::size_t g = 0;
    while (g < pos.size() && ++pos[g] == candidates[g].size()) pos[g++] = 0;
    if (g == pos.size()) break;
  }
  return best;
}

}  // namespace blendcast
