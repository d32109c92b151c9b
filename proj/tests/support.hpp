#pragma once

// Panel builders and brute-force reference implementations shared by tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/grid.hpp"
#include "blendcast/synthetic.hpp"

namespace testing {

using namespace blendcast;

// Calendar of `days` consecutive days with no events and no SNAP.
inline std::vector<CalendarRow> plain_calendar(int days) {
  std::vector<CalendarRow> cal;
  for (int d = 1; d <= days; ++d) {
    CalendarRow r;
    r.date = "2011-01-01";
    r.d_index = d;
    r.wm_yr_wk = 11101 + (d - 1) / 7;
    r.wday = (d - 1) % 7 + 1;
    r.weekday = "Saturday";
    r.month = 1;
    r.year = 2011;
    cal.push_back(r);
  }
  return cal;
}

struct ToySeries {
  std::string item, dept, cat, store, state;
  std::vector<double> sales;
  double price = 1.0;
  int first_priced_week = 0;  // offset from the first calendar week
};

// Panel with one row per ToySeries, constant prices from first_priced_week.
inline PanelDataset toy_panel(const std::vector<ToySeries>& series) {
  SalesWide wide;
  wide.n_days = static_cast<int>(series.front().sales.size());
  std::vector<PriceRow> prices;
  const int weeks = (wide.n_days + kHorizon) / 7 + 1;
  for (const auto& s : series) {
    wide.rows.push_back({s.item, s.dept, s.cat, s.store, s.state, s.sales});
    for (int w = s.first_priced_week; w < weeks; ++w) prices.push_back({s.store, s.item, 11101 + w, s.price});
  }
  return build_panel(wide, plain_calendar(wide.n_days + kHorizon), prices);
}

// One state, one store, one category, one department and two items:
// 15 aggregate series in total.
inline PanelDataset fifteen_series_panel(std::uint64_t seed, int n_days = 120) {
  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> draw(3.0);
  std::vector<ToySeries> s(2);
  for (int i = 0; i < 2; ++i) {
    s[i] = {"FOODS_1_00" + std::to_string(i + 1), "FOODS_1", "FOODS", "CA_1", "CA", {}, 1.5 + i, 0};
    for (int d = 0; d < n_days; ++d) s[i].sales.push_back(draw(rng));
  }
  return toy_panel(s);
}

// Bundled generator at a small size.
inline PanelDataset small_synthetic(std::uint64_t seed = 42, int n_days = 400) {
  SyntheticConfig c;
  c.n_days = n_days;
  c.seed = seed;
  return to_panel(generate_synthetic(c));
}

// M5 ids, built independently of the library's hierarchy code.
inline std::string oracle_id(const SeriesInfo& s, int level) {
  switch (level) {
    case 1: return "Total_X";
    case 2: return s.state_id + "_X";
    case 3: return s.store_id + "_X";
    case 4: return s.cat_id + "_X";
    case 5: return s.dept_id + "_X";
    case 6: return s.state_id + "_" + s.cat_id;
    case 7: return s.state_id + "_" + s.dept_id;
    case 8: return s.store_id + "_" + s.cat_id;
    case 9: return s.store_id + "_" + s.dept_id;
    case 10: return s.item_id + "_X";
    case 11: return s.item_id + "_" + s.state_id;
    default: return s.item_id + "_" + s.store_id;
  }
}

// id -> summed daily path over [first, last] of `value(series, day)`.
template <class F>
std::map<std::string, std::vector<double>> oracle_sums(const PanelDataset& panel, int level, int first,
                                                       int last, F value) {
  std::map<std::string, std::vector<double>> out;
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    auto& path = out[oracle_id(panel.series(i), level)];
    path.resize(static_cast<std::size_t>(last - first + 1), 0.0);
    for (int d = first; d <= last; ++d) path[d - first] += value(i, d);
  }
  return out;
}

inline std::vector<double> trim_zeros(const std::vector<double>& v) {
  auto it = std::find_if(v.begin(), v.end(), [](double x) { return x != 0.0; });
  return {it, v.end()};
}

inline double oracle_scale(const std::vector<double>& history, bool squared) {
  const auto h = trim_zeros(history);
  double s = 0.0;
  for (std::size_t t = 1; t < h.size(); ++t) {
    const double d = h[t] - h[t - 1];
    s += squared ? d * d : std::fabs(d);
  }
  return s / static_cast<double>(h.size() - 1);
}

inline double oracle_pinball(double y, double q, double u) {
  return y >= q ? u * (y - q) : (1.0 - u) * (q - y);
}

// id -> weight at `level`: dollar sales of the 28 days ending at last_day,
// normalized so each level sums to 1/12.
inline std::map<std::string, double> oracle_weights(const PanelDataset& panel, int level, int last_day) {
  auto dollars = oracle_sums(panel, level, last_day - 27, last_day, [&](std::size_t i, int d) {
    return panel.active(i, d) ? panel.y(i, d) * panel.price(i, d) : 0.0;
  });
  double total = 0.0;
  std::map<std::string, double> w;
  for (const auto& [id, path] : dollars) {
    double s = 0.0;
    for (double x : path) s += x;
    w[id] = s;
    total += s;
  }
  for (auto& [id, v] : w) v = v / total / 12.0;
  return w;
}

inline bool close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b));
}

}  // namespace testing
