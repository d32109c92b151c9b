#include "blendcast/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <fmt/format.h>

#include "blendcast/csv.hpp"
#include "blendcast/error.hpp"

namespace blendcast {

namespace {

struct EventDay {
  unsigned month;
  unsigned day;
  const char* name;
  EventType type;
  double lift;
};

constexpr EventDay kEvents[] = {
    {2, 7, "SuperBowl", EventType::sporting, 1.15},
    {2, 14, "ValentinesDay", EventType::cultural, 1.05},
    {4, 10, "Easter", EventType::religious, 1.1},
    {6, 19, "Father's day", EventType::cultural, 1.05},
    {7, 4, "IndependenceDay", EventType::national, 1.2},
    {10, 31, "Halloween", EventType::cultural, 1.1},
    {11, 24, "Thanksgiving", EventType::national, 0.7},
    {12, 25, "Christmas", EventType::national, 0.02},
};

constexpr unsigned kSnapDays[3][10] = {
    {1, 2, 3, 4, 5, 6, 7, 8, 9, 10},
    {1, 3, 5, 6, 7, 9, 11, 12, 13, 15},
    {2, 3, 5, 6, 8, 9, 11, 12, 14, 15},
};

// Shared store-traffic profile, Saturday first.
constexpr double kWeeklyProfile[7] = {1.4, 1.45, 1.0, 0.88, 0.85, 0.88, 1.05};

constexpr const char* kWeekdays[7] = {"Saturday", "Sunday",   "Monday", "Tuesday",
                                      "Wednesday", "Thursday", "Friday"};

std::vector<CalendarRow> make_calendar(int days) {
  using namespace std::chrono;
  const sys_days start = year{2011} / January / 29;  // a Saturday
  std::vector<CalendarRow> rows;
  for (int d = 1; d <= days; ++d) {
    const sys_days day = start + std::chrono::days{d - 1};
    const year_month_day ymd{day};
    CalendarRow row;
    row.d_index = d;
    row.date = fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()),
                           static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    const int week = (d - 1) / 7;
    row.wm_yr_wk = 11101 + (week / 52) * 100 + week % 52;
    row.wday = (d - 1) % 7 + 1;
    row.weekday = kWeekdays[row.wday - 1];
    row.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    row.year = static_cast<int>(ymd.year());
    for (const auto& e : kEvents) {
      if (static_cast<unsigned>(ymd.month()) == e.month && static_cast<unsigned>(ymd.day()) == e.day) {
        row.event_name_1 = e.name;
        row.event_type_1 = e.type;
      }
    }
    if (row.event_name_1 == "Father's day") {
      row.event_name_2 = "NBAFinalsEnd";
      row.event_type_2 = EventType::sporting;
    }
    for (std::size_t s = 0; s < 3; ++s) {
      for (unsigned k : kSnapDays[s]) {
        if (static_cast<unsigned>(ymd.day()) == k) row.snap[s] = 1;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double event_lift(const CalendarRow& row) {
  for (const auto& e : kEvents) {
    if (row.event_name_1 == e.name) return e.lift;
  }
  return 1.0;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  if (config.stores.empty() || config.categories.empty() || config.items_per_department < 1) {
    throw ValidationError("synthetic panel needs stores, categories and items");
  }
  if (config.n_days < 2 * 7) throw ValidationError("synthetic panel needs at least two weeks");
  if (!(config.mean_rate > 0.0) || !(config.dispersion > 0.0)) {
    throw ValidationError("synthetic rates must be positive");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SyntheticData data;
  data.calendar = make_calendar(config.n_days + 28);
  data.sales.n_days = config.n_days;
  const int total_days = config.n_days + 28;
  const int n_weeks = (total_days + 6) / 7;

  struct Item {
    std::string item, dept, cat;
    double rate;
    double base_price;
    int release_week;
    double weekly_shape[7];
    double yearly_amp;
    double trend;
  };
  std::vector<Item> items;
  for (const auto& [cat, n_dept] : config.categories) {
    for (int d = 1; d <= n_dept; ++d) {
      const std::string dept = fmt::format("{}_{}", cat, d);
      for (int i = 1; i <= config.items_per_department; ++i) {
        Item it;
        it.cat = cat;
        it.dept = dept;
        it.item = fmt::format("{}_{:03}", dept, i);
        it.rate = config.mean_rate * std::exp(0.9 * normal(rng) - 0.405);
        it.base_price = std::round((1.0 + 9.0 * uniform(rng)) * 100.0) / 100.0;
        it.release_week = uniform(rng) < config.late_release_share
                              ? static_cast<int>(uniform(rng) * n_weeks * 0.5)
                              : 0;
        for (int k = 0; k < 7; ++k) it.weekly_shape[k] = kWeeklyProfile[k] * std::exp(0.1 * normal(rng));
        it.yearly_amp = 0.15 * uniform(rng);
        it.trend = 0.3 * normal(rng);
        items.push_back(std::move(it));
      }
    }
  }

  std::map<std::string, double> store_factor;
  for (const auto& s : config.stores) store_factor[s] = std::exp(0.3 * normal(rng));

  std::gamma_distribution<double> noise(config.dispersion, 1.0 / config.dispersion);
  for (const auto& store : config.stores) {
    const std::string state = store.substr(0, store.find('_'));
    const std::size_t snap_slot = state == "CA" ? 0 : state == "TX" ? 1 : 2;
    for (const auto& it : items) {
      // Weekly prices from release on, with occasional two-week discounts.
      std::vector<double> week_price(static_cast<std::size_t>(n_weeks), 0.0);
      double price = it.base_price;
      for (int w = it.release_week; w < n_weeks; ++w) {
        if (uniform(rng) < 0.02) price = std::round(price * (1.0 + 0.1 * normal(rng)) * 100.0) / 100.0;
        price = std::max(price, 0.25);
        const bool discount = uniform(rng) < 0.05;
        week_price[w] = discount ? std::round(price * 0.8 * 100.0) / 100.0 : price;
        data.prices.push_back({store, it.item, data.calendar[static_cast<std::size_t>(w) * 7].wm_yr_wk,
                               week_price[w]});
      }
      SalesRow row{it.item, it.dept, it.cat, store, state, std::vector<double>(config.n_days, 0.0)};
      const double series_rate = it.rate * store_factor[store] * std::exp(0.25 * normal(rng));
      for (int d = 1; d <= config.n_days; ++d) {
        const int w = (d - 1) / 7;
        if (w < it.release_week) continue;
        const CalendarRow& cal = data.calendar[d - 1];
        double lambda = series_rate * it.weekly_shape[cal.wday - 1];
        lambda *= 1.0 + it.yearly_amp * std::sin(2.0 * M_PI * d / 365.25);
        lambda *= std::exp(it.trend * d / total_days);
        lambda *= event_lift(cal);
        if (it.cat == "FOODS" && cal.snap[snap_slot]) lambda *= 1.3;
        lambda *= std::pow(week_price[w] / it.base_price, -1.5);
        std::poisson_distribution<int> draw(lambda * noise(rng));
        row.sales[d - 1] = static_cast<double>(draw(rng));
      }
      data.sales.rows.push_back(std::move(row));
    }
  }
  return data;
}

PanelDataset to_panel(const SyntheticData& data) {
  return build_panel(data.sales, data.calendar, data.prices);
}

std::string sales_csv(const SalesWide& sales) {
  std::string out = "id,item_id,dept_id,cat_id,store_id,state_id";
  for (int d = 1; d <= sales.n_days; ++d) out += fmt::format(",d_{}", d);
  out += '\n';
  for (const auto& r : sales.rows) {
    out += fmt::format("{}_{}_evaluation,{},{},{},{},{}", r.item_id, r.store_id, r.item_id, r.dept_id,
                       r.cat_id, r.store_id, r.state_id);
    for (double v : r.sales) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string calendar_csv(const std::vector<CalendarRow>& calendar) {
  std::string out =
      "date,wm_yr_wk,weekday,wday,month,year,d,event_name_1,event_type_1,event_name_2,event_type_2,"
      "snap_CA,snap_TX,snap_WI\n";
  for (const auto& r : calendar) {
    out += fmt::format("{},{},{},{},{},{},d_{},{},{},{},{},{},{},{}\n", r.date, r.wm_yr_wk, r.weekday,
                       r.wday, r.month, r.year, r.d_index, r.event_name_1, to_string(r.event_type_1),
                       r.event_name_2, to_string(r.event_type_2), r.snap[0], r.snap[1], r.snap[2]);
  }
  return out;
}

std::string prices_csv(const std::vector<PriceRow>& prices) {
  std::string out = "store_id,item_id,wm_yr_wk,sell_price\n";
  for (const auto& p : prices) {
    out += fmt::format("{},{},{},{}\n", p.store_id, p.item_id, p.wm_yr_wk, format_double(p.sell_price));
  }
  return out;
}

void write_synthetic(const SyntheticData& data, const DataPaths& paths) {
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << text;
  };
  write(paths.sales, sales_csv(data.sales));
  write(paths.calendar, calendar_csv(data.calendar));
  write(paths.prices, prices_csv(data.prices));
}

}  // namespace blendcast
