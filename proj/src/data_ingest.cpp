#include "blendcast/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "blendcast/error.hpp"
#include "blendcast/hash.hpp"

namespace blendcast {

namespace {

constexpr std::array<std::string_view, 5> kEventNames = {"", "Sporting", "Cultural", "National",
                                                         "Religious"};

int parse_day_column(std::string_view name) {
  if (name.size() < 3 || name.substr(0, 2) != "d_") return -1;
  int value = 0;
  for (char c : name.substr(2)) {
    if (c < '0' || c > '9') return -1;
    value = value * 10 + (c - '0');
  }
  return value;
}

[[noreturn]] void row_error(const CsvTable& table, std::size_t row, const std::string& what) {
  throw ParseError(table.source, table.line_numbers.at(row), what);
}

}  // namespace

EventType parse_event_type(std::string_view text) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i) {
    if (text == kEventNames[i]) return static_cast<EventType>(i);
  }
  throw ValidationError(fmt::format("unknown event type '{}'", text));
}

std::string_view to_string(EventType type) { return kEventNames[static_cast<std::size_t>(type)]; }

SalesWide parse_sales(const CsvTable& table) {
  const std::size_t item = table.require_column("item_id");
  const std::size_t dept = table.require_column("dept_id");
  const std::size_t cat = table.require_column("cat_id");
  const std::size_t store = table.require_column("store_id");
  const std::size_t state = table.require_column("state_id");

  std::vector<std::size_t> day_columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const int d = parse_day_column(table.header[c]);
    if (d < 0) continue;
    if (d != static_cast<int>(day_columns.size()) + 1) {
      throw ParseError(table.source, 1,
                       fmt::format("day column '{}' out of sequence", table.header[c]));
    }
    day_columns.push_back(c);
  }
  if (day_columns.empty()) throw ParseError(table.source, 1, "no d_<k> day columns");

  SalesWide out;
  out.n_days = static_cast<int>(day_columns.size());
  out.rows.reserve(table.rows.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& fields = table.rows[r];
    SalesRow row{fields[item], fields[dept], fields[cat], fields[store], fields[state], {}};
    if (!seen.emplace(row.item_id, row.store_id).second) {
      row_error(table, r, fmt::format("duplicate series ({}, {})", row.item_id, row.store_id));
    }
    row.sales.reserve(day_columns.size());
    for (std::size_t c : day_columns) {
      const double v = parse_double(table, r, fields[c]);
      if (v < 0.0) row_error(table, r, fmt::format("negative sales value {}", fields[c]));
      if (!std::isfinite(v) || std::floor(v) != v) {
        row_error(table, r, fmt::format("non-integral sales value {}", fields[c]));
      }
      row.sales.push_back(v);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<CalendarRow> parse_calendar(const CsvTable& table) {
  const std::size_t date = table.require_column("date");
  const std::size_t week = table.require_column("wm_yr_wk");
  const std::size_t weekday = table.require_column("weekday");
  const std::size_t wday = table.require_column("wday");
  const std::size_t month = table.require_column("month");
  const std::size_t year = table.require_column("year");
  const std::size_t d = table.require_column("d");
  const std::size_t name1 = table.require_column("event_name_1");
  const std::size_t type1 = table.require_column("event_type_1");
  const std::size_t name2 = table.require_column("event_name_2");
  const std::size_t type2 = table.require_column("event_type_2");
  const std::array<std::size_t, 3> snap = {table.require_column("snap_CA"),
                                           table.require_column("snap_TX"),
                                           table.require_column("snap_WI")};

  std::vector<CalendarRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    CalendarRow row;
    row.date = f[date];
    row.d_index = parse_day_column(f[d]);
    if (row.d_index <= 0) row_error(table, r, fmt::format("bad day key '{}'", f[d]));
    row.wm_yr_wk = static_cast<int>(parse_integer(table, r, f[week]));
    row.weekday = f[weekday];
    row.wday = static_cast<int>(parse_integer(table, r, f[wday]));
    row.month = static_cast<int>(parse_integer(table, r, f[month]));
    row.year = static_cast<int>(parse_integer(table, r, f[year]));
    row.event_name_1 = f[name1];
    row.event_name_2 = f[name2];
    try {
      row.event_type_1 = parse_event_type(f[type1]);
      row.event_type_2 = parse_event_type(f[type2]);
    } catch (const ValidationError& e) {
      row_error(table, r, e.what());
    }
    for (std::size_t s = 0; s < 3; ++s) {
      const long long v = parse_integer(table, r, f[snap[s]]);
      if (v != 0 && v != 1) row_error(table, r, "snap flag must be 0 or 1");
      row.snap[s] = static_cast<std::uint8_t>(v);
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const CalendarRow& a, const CalendarRow& b) { return a.d_index < b.d_index; });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].d_index != static_cast<int>(i) + 1) {
      throw ValidationError(fmt::format("{}: calendar day d_{} missing (found d_{})",
                                        table.source, i + 1, rows[i].d_index));
    }
  }
  return rows;
}

std::vector<PriceRow> parse_prices(const CsvTable& table) {
  const std::size_t store = table.require_column("store_id");
  const std::size_t item = table.require_column("item_id");
  const std::size_t week = table.require_column("wm_yr_wk");
  const std::size_t price = table.require_column("sell_price");

  std::vector<PriceRow> rows;
  rows.reserve(table.rows.size());
  std::set<std::tuple<std::string, std::string, int>> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    PriceRow row{f[store], f[item], static_cast<int>(parse_integer(table, r, f[week])),
                 parse_double(table, r, f[price])};
    if (!(row.sell_price > 0.0)) row_error(table, r, "sell_price must be positive");
    if (!seen.emplace(row.store_id, row.item_id, row.wm_yr_wk).second) {
      row_error(table, r,
                fmt::format("duplicate price key ({}, {}, {})", row.store_id, row.item_id,
                            row.wm_yr_wk));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

SalesWide load_sales(const std::filesystem::path& path) { return parse_sales(read_csv(path)); }

std::vector<CalendarRow> load_calendar(const std::filesystem::path& path) {
  return parse_calendar(read_csv(path));
}

std::vector<PriceRow> load_prices(const std::filesystem::path& path) {
  return parse_prices(read_csv(path));
}

PanelDataset build_panel(const SalesWide& sales, std::vector<CalendarRow> calendar,
                         const std::vector<PriceRow>& prices) {
  if (sales.rows.empty()) throw ValidationError("sales table has no series");
  const int n_days = sales.n_days;
  const int n_cal = static_cast<int>(calendar.size());
  if (n_cal < n_days + 28) {
    throw ValidationError(fmt::format(
        "calendar covers {} days but {} are required ({} history + 28 horizon)", n_cal,
        n_days + 28, n_days));
  }
  for (int i = 0; i < n_cal; ++i) {
    if (calendar[i].d_index != i + 1) throw ValidationError("calendar days are not contiguous");
  }

  std::map<std::pair<std::string, std::string>, std::vector<std::pair<int, double>>> by_series;
  for (const auto& p : prices) by_series[{p.store_id, p.item_id}].emplace_back(p.wm_yr_wk, p.sell_price);
  for (auto& [key, weeks] : by_series) std::sort(weeks.begin(), weeks.end());

  PanelDataset panel;
  panel.n_days_ = n_days;
  panel.calendar_ = std::move(calendar);
  const std::size_t n = sales.rows.size();
  panel.series_.reserve(n);
  panel.sales_.resize(n * static_cast<std::size_t>(n_days));
  panel.prices_.assign(n * static_cast<std::size_t>(n_cal), std::numeric_limits<double>::quiet_NaN());
  panel.weekly_prices_.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const SalesRow& row = sales.rows[i];
    if (static_cast<int>(row.sales.size()) != n_days) {
      throw ValidationError(fmt::format("series {}_{} has {} days, expected {}", row.item_id,
                                        row.store_id, row.sales.size(), n_days));
    }
    SeriesInfo info;
    info.id = row.item_id + "_" + row.store_id;
    info.item_id = row.item_id;
    info.dept_id = row.dept_id;
    info.cat_id = row.cat_id;
    info.store_id = row.store_id;
    info.state_id = row.state_id;
    for (std::size_t s = 0; s < kSnapStates.size(); ++s) {
      if (row.state_id == kSnapStates[s]) info.snap_slot = static_cast<int>(s);
    }
    std::copy(row.sales.begin(), row.sales.end(), panel.sales_.begin() + i * n_days);

    info.first_active_day = n_days + 1;
    auto it = by_series.find({row.store_id, row.item_id});
    if (it != by_series.end()) {
      const auto& weeks = it->second;
      panel.weekly_prices_[i] = weeks;
      double last = std::numeric_limits<double>::quiet_NaN();
      std::size_t w = 0;
      for (int d = 1; d <= n_cal; ++d) {
        const int week = panel.calendar_[d - 1].wm_yr_wk;
        while (w < weeks.size() && weeks[w].first < week) ++w;
        if (w < weeks.size() && weeks[w].first == week) last = weeks[w].second;
        panel.prices_[i * n_cal + (d - 1)] = last;
        if (!std::isnan(last) && info.first_active_day > n_days && d <= n_days) {
          info.first_active_day = d;
        }
      }
    }
    panel.series_.push_back(std::move(info));
  }
  return panel;
}

std::size_t PanelDataset::active_row_count() const {
  std::size_t total = 0;
  for (const auto& s : series_) total += static_cast<std::size_t>(n_days_ - s.first_active_day + 1);
  return total;
}

std::vector<LongRow> PanelDataset::to_long() const {
  std::vector<LongRow> rows;
  rows.reserve(active_row_count());
  for (std::size_t i = 0; i < series_.size(); ++i) {
    for (int d = series_[i].first_active_day; d <= n_days_; ++d) rows.push_back({i, d, y(i, d)});
  }
  return rows;
}

SalesWide PanelDataset::to_wide() const {
  SalesWide wide;
  wide.n_days = n_days_;
  for (std::size_t i = 0; i < series_.size(); ++i) {
    const auto& s = series_[i];
    auto values = sales(i);
    wide.rows.push_back({s.item_id, s.dept_id, s.cat_id, s.store_id, s.state_id,
                         std::vector<double>(values.begin(), values.end())});
  }
  return wide;
}

PanelDataset PanelDataset::truncated(int n_days) const {
  if (n_days < 1 || n_days > n_days_) {
    throw ValidationError(fmt::format("cannot truncate {}-day panel to {} days", n_days_, n_days));
  }
  PanelDataset out = *this;
  out.n_days_ = n_days;
  out.sales_.resize(series_.size() * static_cast<std::size_t>(n_days));
  for (std::size_t i = 0; i < series_.size(); ++i) {
    auto src = sales(i);
    std::copy(src.begin(), src.begin() + n_days, out.sales_.begin() + i * n_days);
    if (out.series_[i].first_active_day > n_days) out.series_[i].first_active_day = n_days + 1;
  }
  return out;
}

std::uint64_t PanelDataset::fingerprint() const {
  Fnv1a h;
  h.pod(n_days_);
  for (const auto& s : series_) {
    h.str(s.id).str(s.dept_id).str(s.cat_id).str(s.state_id).pod(s.first_active_day);
  }
  h.bytes(sales_.data(), sales_.size() * sizeof(double));
  for (double p : prices_) h.pod(std::isnan(p) ? -1.0 : p);
  for (const auto& c : calendar_) {
    h.pod(c.wm_yr_wk).pod(c.wday).pod(c.month).pod(c.year);
    h.pod(c.event_type_1).pod(c.event_type_2).pod(c.snap);
    h.str(c.date);
  }
  return h.digest();
}

PanelDataset load_dataset(const DataPaths& paths) {
  auto sales = std::async(std::launch::async, [&] { return load_sales(paths.sales); });
  auto calendar = std::async(std::launch::async, [&] { return load_calendar(paths.calendar); });
  auto prices = std::async(std::launch::async, [&] { return load_prices(paths.prices); });
  return build_panel(sales.get(), calendar.get(), prices.get());
}

}  // namespace blendcast
