#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blendcast/csv.hpp"

namespace blendcast {

enum class EventType : std::uint8_t { none = 0, sporting, cultural, national, religious };

inline constexpr std::size_t kEventClassCount = 5;

// "" maps to none; anything outside the four M5 classes throws ValidationError.
EventType parse_event_type(std::string_view text);
std::string_view to_string(EventType type);

inline constexpr std::array<std::string_view, 3> kSnapStates = {"CA", "TX", "WI"};

struct SalesRow {
  std::string item_id;
  std::string dept_id;
  std::string cat_id;
  std::string store_id;
  std::string state_id;
  std::vector<double> sales;  // sales[d - 1] for day d
};

struct SalesWide {
  std::vector<SalesRow> rows;
  int n_days = 0;
};

struct CalendarRow {
  std::string date;
  int d_index = 0;
  int wm_yr_wk = 0;
  std::string weekday;
  int wday = 0;
  int month = 0;
  int year = 0;
  std::string event_name_1;
  EventType event_type_1 = EventType::none;
  std::string event_name_2;
  EventType event_type_2 = EventType::none;
  std::array<std::uint8_t, 3> snap{};  // CA, TX, WI
};

struct PriceRow {
  std::string store_id;
  std::string item_id;
  int wm_yr_wk = 0;
  double sell_price = 0.0;
};

SalesWide parse_sales(const CsvTable& table);
std::vector<CalendarRow> parse_calendar(const CsvTable& table);
std::vector<PriceRow> parse_prices(const CsvTable& table);

SalesWide load_sales(const std::filesystem::path& path);
std::vector<CalendarRow> load_calendar(const std::filesystem::path& path);
std::vector<PriceRow> load_prices(const std::filesystem::path& path);

// Identity of one level-12 (item, store) series.
struct SeriesInfo {
  std::string id;  // "<item_id>_<store_id>"
  std::string item_id;
  std::string dept_id;
  std::string cat_id;
  std::string store_id;
  std::string state_id;
  int first_active_day = 1;  // n_days + 1 when never priced in history
  int snap_slot = -1;        // index into CalendarRow::snap, -1 if no SNAP column
};

struct LongRow {
  std::size_t series = 0;
  int day = 0;
  double y = 0.0;
};

// Validated, immutable sales panel with calendar and daily-resolved prices.
//
// A series is inactive before the first day whose week carries a price.
// After that day, missing weeks take the last known price so every active
// day joins to a price.
class PanelDataset {
 public:
  PanelDataset() = default;

  int n_days() const { return n_days_; }
  int calendar_days() const { return static_cast<int>(calendar_.size()); }
  std::size_t n_series() const { return series_.size(); }

  const SeriesInfo& series(std::size_t i) const { return series_[i]; }
  const std::vector<SeriesInfo>& all_series() const { return series_; }
  const std::vector<CalendarRow>& calendar() const { return calendar_; }
  const CalendarRow& calendar_row(int day) const { return calendar_.at(day - 1); }

  // Observed sales for days 1..n_days.
  std::span<const double> sales(std::size_t i) const {
    return {sales_.data() + i * n_days_, static_cast<std::size_t>(n_days_)};
  }
  double y(std::size_t i, int day) const { return sales_[i * n_days_ + (day - 1)]; }

  // Resolved price on any calendar day; NaN before the first priced week.
  double price(std::size_t i, int day) const {
    return prices_[i * calendar_.size() + static_cast<std::size_t>(day - 1)];
  }
  // Distinct weekly prices in week order up to and including `day`'s week.
  const std::vector<std::pair<int, double>>& weekly_prices(std::size_t i) const {
    return weekly_prices_[i];
  }

  bool active(std::size_t i, int day) const { return day >= series_[i].first_active_day; }

  std::size_t active_row_count() const;
  std::vector<LongRow> to_long() const;
  SalesWide to_wide() const;

  // Same series, calendar and prices, history cut to `n_days`.
  PanelDataset truncated(int n_days) const;

  // Content hash over series keys, sales, prices and calendar.
  std::uint64_t fingerprint() const;

  friend PanelDataset build_panel(const SalesWide&, std::vector<CalendarRow>,
                                  const std::vector<PriceRow>&);

 private:
  int n_days_ = 0;
  std::vector<SeriesInfo> series_;
  std::vector<double> sales_;
  std::vector<CalendarRow> calendar_;
  std::vector<double> prices_;
  std::vector<std::vector<std::pair<int, double>>> weekly_prices_;
};

// Requires calendar coverage of at least n_days + 28 days.
PanelDataset build_panel(const SalesWide& sales, std::vector<CalendarRow> calendar,
                         const std::vector<PriceRow>& prices);

struct DataPaths {
  std::filesystem::path sales;
  std::filesystem::path calendar;
  std::filesystem::path prices;
};

// Parses the three files concurrently and joins them.
PanelDataset load_dataset(const DataPaths& paths);

}  // namespace blendcast
