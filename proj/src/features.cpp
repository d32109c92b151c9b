#include "blendcast/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "blendcast/error.hpp"
#include "blendcast/hash.hpp"
#include "blendcast/parallel.hpp"

namespace blendcast {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
constexpr std::array<GroupKey, 5> kAllKeys = {GroupKey::state, GroupKey::store, GroupKey::category,
                                              GroupKey::department, GroupKey::item};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const auto& item : split_list(value)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v <= 0) {
      throw ValidationError(fmt::format("feature spec: '{}' needs positive integers, got '{}'", key, item));
    }
    out.push_back(v);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ValidationError(fmt::format("feature spec: '{}' expects true/false, got '{}'", key, value));
}

std::string join_keys(const std::vector<GroupKey>& keys) {
  std::vector<std::string_view> names;
  for (auto k : keys) names.push_back(to_string(k));
  return fmt::format("{}", fmt::join(names, ","));
}

// Mean and population standard deviation; NaN if any value is unknown.
std::array<double, 2> mean_std(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

int day_of_month(const std::string& date) {
  // YYYY-MM-DD
  if (date.size() != 10 || date[4] != '-' || date[7] != '-') return -1;
  const char a = date[8];
  const char b = date[9];
  if (a < '0' || a > '9' || b < '0' || b > '9') return -1;
  return (a - '0') * 10 + (b - '0');
}

}  // namespace

std::string_view to_string(GroupKey key) {
  switch (key) {
    case GroupKey::state: return "state";
    case GroupKey::store: return "store";
    case GroupKey::category: return "cat";
    case GroupKey::department: return "dept";
    case GroupKey::item: return "item";
  }
  return "item";
}

GroupKey parse_group_key(std::string_view text) {
  for (auto k : kAllKeys) {
    if (text == to_string(k)) return k;
  }
  throw ValidationError(fmt::format("unknown categorical key '{}'", text));
}

int FeatureConfig::max_lookback() const {
  int m = 0;
  if (lag_count > 0) m = std::max(m, lag_offset + lag_count);
  for (int w : rolling_windows) m = std::max(m, 28 + w - 1);
  for (int l : lag_rolling_lags) {
    for (int w : lag_rolling_windows) m = std::max(m, l + w - 1);
  }
  return m;
}

int FeatureConfig::min_lookback() const {
  int m = std::numeric_limits<int>::max();
  if (lag_count > 0) m = std::min(m, lag_offset + 1);
  if (!rolling_windows.empty()) m = std::min(m, 28);
  if (!lag_rolling_windows.empty()) {
    for (int l : lag_rolling_lags) m = std::min(m, l);
  }
  return m == std::numeric_limits<int>::max() ? 0 : m;
}

FeatureConfig parse_feature_config(const std::string& text) {
  FeatureConfig c;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("feature spec", static_cast<std::size_t>(line_no), "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "categorical" || key == "target_encoding") {
      std::vector<GroupKey> keys;
      for (const auto& k : split_list(value)) keys.push_back(parse_group_key(k));
      (key == "categorical" ? c.categorical : c.target_encoding) = keys;
    } else if (key == "price") {
      c.price = parse_bool(key, value);
    } else if (key == "calendar") {
      c.calendar = parse_bool(key, value);
    } else if (key == "snap") {
      c.snap_own = false;
      c.snap_states = false;
      for (const auto& mode : split_list(value)) {
        if (mode == "own") c.snap_own = true;
        else if (mode == "all") c.snap_states = true;
        else if (mode != "none") throw ValidationError(fmt::format("feature spec: unknown snap mode '{}'", mode));
      }
    } else if (key == "lag_offset") {
      c.lag_offset = parse_int_list(key, value).at(0);
    } else if (key == "lag_count") {
      c.lag_count = value == "0" ? 0 : parse_int_list(key, value).at(0);
    } else if (key == "rolling_windows") {
      c.rolling_windows = parse_int_list(key, value);
    } else if (key == "lag_rolling_lags") {
      c.lag_rolling_lags = parse_int_list(key, value);
    } else if (key == "lag_rolling_windows") {
      c.lag_rolling_windows = parse_int_list(key, value);
    } else {
      throw ParseError("feature spec", static_cast<std::size_t>(line_no),
                       fmt::format("unknown key '{}'", key));
    }
  }
  return c;
}

FeatureConfig load_feature_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open feature spec '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_feature_config(buffer.str());
}

std::string to_text(const FeatureConfig& c) {
  std::string snap;
  if (c.snap_own) snap = "own";
  if (c.snap_states) snap += snap.empty() ? "all" : ",all";
  if (snap.empty()) snap = "none";
  return fmt::format(
      "categorical = {}\ntarget_encoding = {}\nprice = {}\ncalendar = {}\nsnap = {}\n"
      "lag_offset = {}\nlag_count = {}\nrolling_windows = {}\nlag_rolling_lags = {}\n"
      "lag_rolling_windows = {}\n",
      join_keys(c.categorical), join_keys(c.target_encoding), c.price, c.calendar, snap,
      c.lag_offset, c.lag_count, fmt::join(c.rolling_windows, ","),
      fmt::join(c.lag_rolling_lags, ","), fmt::join(c.lag_rolling_windows, ","));
}

double PanelSalesReader::sales(std::size_t series, int day) const {
  if (day < 1 || day > panel_->n_days()) return kMissing;
  return panel_->y(series, day);
}

double RecursiveSalesReader::sales(std::size_t series, int day) const {
  if (day < start_day_) {
    if (day < 1 || day > panel_->n_days()) return kMissing;
    return panel_->y(series, day);
  }
  const int step = day - start_day_;
  if (step >= filled_) return kMissing;
  buffer_reads_.fetch_add(1, std::memory_order_relaxed);
  return buffer_->at(series, static_cast<std::size_t>(step));
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.specs = specs;
  out.schema_hash = schema_hash;
  out.keys.reserve(rows.size());
  out.values.reserve(rows.size() * n_cols());
  out.target.reserve(rows.size());
  for (std::size_t r : rows) {
    out.keys.push_back(keys.at(r));
    auto src = row(r);
    out.values.insert(out.values.end(), src.begin(), src.end());
    out.target.push_back(target[r]);
  }
  return out;
}

std::uint64_t schema_hash(std::span<const FeatureSpec> specs) {
  Fnv1a h;
  h.str("blendcast-features-v1");
  for (const auto& s : specs) {
    h.str(s.name).pod(s.group).pod(s.kind).pod(s.key).pod(s.cardinality).pod(s.snap_slot);
    h.pod(s.offset).pod(s.window);
  }
  return h.digest();
}

double TargetEncoding::lookup(const std::string& category) const {
  auto it = means.find(category);
  return it == means.end() ? global_mean : it->second;
}

TargetEncoding mean_target_encode(const PanelDataset& panel, GroupKey key, DayRange train_days) {
  if (train_days.empty()) throw ValidationError("target encoding needs a nonempty day range");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  std::size_t count = 0;
  const int last = std::min(train_days.last, panel.n_days());
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    const int first = std::max(train_days.first, panel.series(i).first_active_day);
    auto& slot = acc[key_of(panel.series(i), key)];
    for (int d = first; d <= last; ++d) {
      const double y = panel.y(i, d);
      slot.first += y;
      slot.second += 1;
      total += y;
      ++count;
    }
  }
  TargetEncoding enc;
  enc.global_mean = count > 0 ? total / static_cast<double>(count) : 0.0;
  for (const auto& [category, sum_count] : acc) {
    if (sum_count.second > 0) {
      enc.means[category] = sum_count.first / static_cast<double>(sum_count.second);
    }
  }
  return enc;
}

std::array<double, 6> price_features(const PanelDataset& panel, std::size_t series, int day) {
  std::array<double, 6> out;
  out.fill(kMissing);
  const int week = panel.calendar_row(day).wm_yr_wk;
  std::vector<double> seen;
  for (const auto& [w, p] : panel.weekly_prices(series)) {
    if (w > week) break;
    seen.push_back(p);
  }
  if (seen.empty()) return out;
  const auto [mean, sd] = mean_std(seen);
  out[0] = panel.price(series, day);
  out[1] = *std::max_element(seen.begin(), seen.end());
  out[2] = *std::min_element(seen.begin(), seen.end());
  out[3] = mean;
  out[4] = sd;
  out[5] = static_cast<double>(std::set<double>(seen.begin(), seen.end()).size());
  return out;
}

std::vector<double> lag_features(const PanelDataset& panel, const SalesReader& sales,
                                 std::size_t series, int day, int offset, int count) {
  std::vector<double> out(static_cast<std::size_t>(count), kMissing);
  const int first_active = panel.series(series).first_active_day;
  for (int j = 1; j <= count; ++j) {
    const int d = day - (offset + j);
    if (d >= first_active) out[j - 1] = sales.sales(series, d);
  }
  return out;
}

std::array<double, 2> rolling_features(const PanelDataset& panel, const SalesReader& sales,
                                       std::size_t series, int day, int offset, int window) {
  const int last = day - offset;
  const int first = last - window + 1;
  if (first < panel.series(series).first_active_day) return {kMissing, kMissing};
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(window));
  for (int d = first; d <= last; ++d) {
    const double v = sales.sales(series, d);
    if (std::isnan(v)) return {kMissing, kMissing};
    xs.push_back(v);
  }
  return mean_std(xs);
}

FeatureBuilder::FeatureBuilder(const PanelDataset& panel, FeatureConfig config,
                               DayRange encoding_days)
    : panel_(&panel), config_(std::move(config)), encoding_days_(encoding_days) {
  const std::size_t n = panel.n_series();
  for (auto key : kAllKeys) {
    auto& codes = codes_[static_cast<std::size_t>(key)];
    for (std::size_t i = 0; i < n; ++i) codes.emplace(key_of(panel.series(i), key), 0);
    int next = 1;
    for (auto& [name, code] : codes) code = next++;
    auto& per_series = series_code_[static_cast<std::size_t>(key)];
    per_series.resize(n);
    for (std::size_t i = 0; i < n; ++i) per_series[i] = codes.at(key_of(panel.series(i), key));
  }

  auto add = [&](FeatureSpec spec) { specs_.push_back(std::move(spec)); };
  for (auto key : config_.categorical) {
    FeatureSpec s;
    s.name = fmt::format("{}_code", to_string(key));
    s.group = FeatureGroup::categorical;
    s.kind = FeatureKind::category_code;
    s.key = key;
    s.cardinality = static_cast<int>(codes_[static_cast<std::size_t>(key)].size());
    add(s);
  }
  for (auto key : config_.target_encoding) {
    FeatureSpec s;
    s.name = fmt::format("{}_target_mean", to_string(key));
    s.group = FeatureGroup::target_encoding;
    s.kind = FeatureKind::target_mean;
    s.key = key;
    add(s);
    const TargetEncoding enc = mean_target_encode(panel, key, encoding_days_);
    auto& values = series_encoding_[static_cast<std::size_t>(key)];
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = enc.lookup(key_of(panel.series(i), key));
  }
  if (config_.price) {
    const std::array<std::pair<const char*, FeatureKind>, 6> price_kinds = {{
        {"price", FeatureKind::price_current},
        {"price_max", FeatureKind::price_max},
        {"price_min", FeatureKind::price_min},
        {"price_mean", FeatureKind::price_mean},
        {"price_std", FeatureKind::price_std},
        {"price_n_unique", FeatureKind::price_unique},
    }};
    for (const auto& [name, kind] : price_kinds) {
      FeatureSpec s;
      s.name = name;
      s.group = FeatureGroup::price;
      s.kind = kind;
      add(s);
    }
    price_prefix_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::set<double> unique;
      double mx = -std::numeric_limits<double>::infinity();
      double mn = std::numeric_limits<double>::infinity();
      std::vector<double> seen;
      for (const auto& [w, p] : panel.weekly_prices(i)) {
        seen.push_back(p);
        unique.insert(p);
        mx = std::max(mx, p);
        mn = std::min(mn, p);
        const auto [mean, sd] = mean_std(seen);
        price_prefix_[i].push_back({mx, mn, mean, sd, static_cast<double>(unique.size())});
      }
    }
  }
  if (config_.calendar) {
    const std::array<std::pair<const char*, FeatureKind>, 6> calendar_kinds = {{
        {"wday", FeatureKind::weekday},
        {"month", FeatureKind::month},
        {"year", FeatureKind::year},
        {"mday", FeatureKind::month_day},
        {"event_type_1", FeatureKind::event_type_1},
        {"event_type_2", FeatureKind::event_type_2},
    }};
    for (const auto& [name, kind] : calendar_kinds) {
      FeatureSpec s;
      s.name = name;
      s.group = FeatureGroup::calendar;
      s.kind = kind;
      add(s);
    }
  }
  if (config_.snap_own) {
    FeatureSpec s;
    s.name = "snap";
    s.group = FeatureGroup::calendar;
    s.kind = FeatureKind::snap_own;
    add(s);
  }
  if (config_.snap_states) {
    for (std::size_t slot = 0; slot < kSnapStates.size(); ++slot) {
      FeatureSpec s;
      s.name = fmt::format("snap_{}", kSnapStates[slot]);
      s.group = FeatureGroup::calendar;
      s.kind = FeatureKind::snap_state;
      s.snap_slot = static_cast<int>(slot);
      add(s);
    }
  }
  for (int j = 1; j <= config_.lag_count; ++j) {
    FeatureSpec s;
    s.name = fmt::format("lag_{}", config_.lag_offset + j);
    s.group = FeatureGroup::lag;
    s.kind = FeatureKind::lag;
    s.offset = config_.lag_offset + j;
    add(s);
  }
  auto add_rolling = [&](FeatureGroup group, int offset, int window) {
    for (auto kind : {FeatureKind::rolling_mean, FeatureKind::rolling_std}) {
      FeatureSpec s;
      s.name = fmt::format("{}_{}_{}", kind == FeatureKind::rolling_mean ? "rmean" : "rstd", offset,
                           window);
      s.group = group;
      s.kind = kind;
      s.offset = offset;
      s.window = window;
      add(s);
    }
  };
  for (int w : config_.rolling_windows) add_rolling(FeatureGroup::rolling, 28, w);
  for (int l : config_.lag_rolling_lags) {
    for (int w : config_.lag_rolling_windows) add_rolling(FeatureGroup::lag_rolling, l, w);
  }

  std::set<std::string> names;
  for (std::size_t c = 0; c < specs_.size(); ++c) {
    if (!names.insert(specs_[c].name).second) {
      throw ValidationError(fmt::format("duplicate feature '{}'", specs_[c].name));
    }
    if (specs_[c].sales_derived()) sales_columns_.push_back(c);
  }
  schema_hash_ = blendcast::schema_hash(specs_);
}

void FeatureBuilder::fill_row(std::size_t series, int day, const SalesReader& sales,
                              std::span<double> out) const {
  const PanelDataset& panel = *panel_;
  const SeriesInfo& info = panel.series(series);
  const CalendarRow& cal = panel.calendar_row(day);
  const int first_active = info.first_active_day;

  // Price prefix index for this day's week.
  long price_idx = -1;
  if (config_.price) {
    const auto& weeks = panel.weekly_prices(series);
    auto it = std::upper_bound(weeks.begin(), weeks.end(), cal.wm_yr_wk,
                               [](int w, const std::pair<int, double>& e) { return w < e.first; });
    price_idx = static_cast<long>(it - weeks.begin()) - 1;
  }

  // Single-pass sum over a window; population std via a second pass.
  auto window_stats = [&](int offset, int window, bool want_std) -> double {
    const int last = day - offset;
    const int first = last - window + 1;
    if (first < first_active) return kMissing;
    double sum = 0.0;
    for (int d = first; d <= last; ++d) {
      const double v = sales.sales(series, d);
      if (std::isnan(v)) return kMissing;
      sum += v;
    }
    const double mean = sum / window;
    if (!want_std) return mean;
    double ss = 0.0;
    for (int d = first; d <= last; ++d) {
      const double e = sales.sales(series, d) - mean;
      ss += e * e;
    }
    return std::sqrt(ss / window);
  };

  for (std::size_t c = 0; c < specs_.size(); ++c) {
    const FeatureSpec& s = specs_[c];
    double v = kMissing;
    switch (s.kind) {
      case FeatureKind::category_code:
        v = series_code_[static_cast<std::size_t>(s.key)][series];
        break;
      case FeatureKind::target_mean:
        v = series_encoding_[static_cast<std::size_t>(s.key)][series];
        break;
      case FeatureKind::price_current:
        if (price_idx >= 0) v = panel.price(series, day);
        break;
      case FeatureKind::price_max:
      case FeatureKind::price_min:
      case FeatureKind::price_mean:
      case FeatureKind::price_std:
      case FeatureKind::price_unique:
        if (price_idx >= 0) {
          const std::size_t k = static_cast<std::size_t>(s.kind) -
                                static_cast<std::size_t>(FeatureKind::price_max);
          v = price_prefix_[series][static_cast<std::size_t>(price_idx)][k];
        }
        break;
      case FeatureKind::weekday: v = cal.wday; break;
      case FeatureKind::month: v = cal.month; break;
      case FeatureKind::year: v = cal.year; break;
      case FeatureKind::month_day: {
        const int md = day_of_month(cal.date);
        if (md > 0) v = md;
        break;
      }
      case FeatureKind::event_type_1: v = static_cast<double>(cal.event_type_1); break;
      case FeatureKind::event_type_2: v = static_cast<double>(cal.event_type_2); break;
      case FeatureKind::snap_own:
        v = info.snap_slot >= 0 ? cal.snap[static_cast<std::size_t>(info.snap_slot)] : 0.0;
        break;
      case FeatureKind::snap_state: v = cal.snap[static_cast<std::size_t>(s.snap_slot)]; break;
      case FeatureKind::lag: {
        const int d = day - s.offset;
        if (d >= first_active) v = sales.sales(series, d);
        break;
      }
      case FeatureKind::rolling_mean: v = window_stats(s.offset, s.window, false); break;
      case FeatureKind::rolling_std: v = window_stats(s.offset, s.window, true); break;
    }
    out[c] = v;
  }
}

FeatureMatrix FeatureBuilder::assemble(DayRange days, FeatureMode mode,
                                       const SalesReader* sales) const {
  const PanelDataset& panel = *panel_;
  if (days.empty()) throw ValidationError("feature assembly needs a nonempty day range");
  if (days.first < 1 || days.last > panel.calendar_days()) {
    throw ValidationError(fmt::format("days [{}, {}] outside calendar 1..{}", days.first, days.last,
                                      panel.calendar_days()));
  }
  if (mode == FeatureMode::training && days.last > panel.n_days()) {
    throw ValidationError(fmt::format("training day {} has no observed target (history ends at {})",
                                      days.last, panel.n_days()));
  }
  if (mode == FeatureMode::inference && sales == nullptr) {
    throw ValidationError("inference assembly needs a sales reader");
  }

  FeatureMatrix m;
  m.specs = specs_;
  m.schema_hash = schema_hash_;
  if (mode == FeatureMode::training) {
    for (std::size_t i = 0; i < panel.n_series(); ++i) {
      for (int d = std::max(days.first, panel.series(i).first_active_day); d <= days.last; ++d) {
        m.keys.push_back({static_cast<std::uint32_t>(i), d});
      }
    }
  } else {
    for (int d = days.first; d <= days.last; ++d) {
      for (std::size_t i = 0; i < panel.n_series(); ++i) {
        if (panel.active(i, d)) m.keys.push_back({static_cast<std::uint32_t>(i), d});
      }
    }
  }

  const std::size_t cols = specs_.size();
  m.values.resize(m.keys.size() * cols);
  m.target.resize(m.keys.size(), kMissing);
  const PanelSalesReader observed(panel);
  const SalesReader& reader = mode == FeatureMode::training ? observed : *sales;
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (m.keys.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t chunk) {
    const std::size_t end = std::min(m.keys.size(), (chunk + 1) * kChunk);
    for (std::size_t r = chunk * kChunk; r < end; ++r) {
      const RowKey k = m.keys[r];
      fill_row(k.series, k.day, reader, {m.values.data() + r * cols, cols});
      if (mode == FeatureMode::training) m.target[r] = panel.y(k.series, k.day);
    }
  });
  return m;
}

void FeatureBuilder::refresh_sales_columns(FeatureMatrix& matrix, std::size_t begin,
                                           std::size_t end, const SalesReader& sales) const {
  if (matrix.schema_hash != schema_hash_) throw ValidationError("feature schema mismatch");
  std::vector<double> scratch(specs_.size());
  const std::size_t cols = specs_.size();
  for (std::size_t r = begin; r < end; ++r) {
    const RowKey k = matrix.keys[r];
    fill_row(k.series, k.day, sales, scratch);
    for (std::size_t c : sales_columns_) matrix.values[r * cols + c] = scratch[c];
  }
}

namespace {

constexpr char kCacheMagic[4] = {'B', 'C', 'F', 'M'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_str(std::string& buf, const std::string& s) {
  put(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

class Cursor {
 public:
  explicit Cursor(std::string_view data) : data_(data) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw ValidationError("truncated cache");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    if (pos_ + n > data_.size()) throw ValidationError("truncated cache");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_matrix_cache(const std::filesystem::path& path, const FeatureMatrix& m,
                        std::uint64_t cache_key) {
  std::string buf;
  buf.append(kCacheMagic, 4);
  put(buf, kCacheVersion);
  put(buf, cache_key);
  put(buf, m.schema_hash);
  put(buf, static_cast<std::uint64_t>(m.n_rows()));
  put(buf, static_cast<std::uint32_t>(m.n_cols()));
  for (const auto& s : m.specs) {
    put_str(buf, s.name);
    put(buf, s.group);
    put(buf, s.kind);
    put(buf, s.key);
    put(buf, s.cardinality);
    put(buf, s.snap_slot);
    put(buf, s.offset);
    put(buf, s.window);
  }
  for (const auto& k : m.keys) put(buf, k);
  for (std::size_t c = 0; c < m.n_cols(); ++c) {
    for (std::size_t r = 0; r < m.n_rows(); ++r) put(buf, m.at(r, c));
  }
  for (double t : m.target) put(buf, t);
  put(buf, Fnv1a().bytes(buf.data(), buf.size()).digest());

  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write cache '{}'", path.string()));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::optional<FeatureMatrix> read_matrix_cache(const std::filesystem::path& path,
                                               std::uint64_t cache_key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  if (data.size() < 4 + sizeof(std::uint64_t) || std::memcmp(data.data(), kCacheMagic, 4) != 0) {
    return std::nullopt;
  }
  const std::size_t body = data.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + body, sizeof stored);
  if (Fnv1a().bytes(data.data(), body).digest() != stored) return std::nullopt;

  try {
    Cursor cur(std::string_view(data).substr(4, body - 4));
    if (cur.get<std::uint32_t>() != kCacheVersion) return std::nullopt;
    if (cur.get<std::uint64_t>() != cache_key) return std::nullopt;
    FeatureMatrix m;
    m.schema_hash = cur.get<std::uint64_t>();
    const auto rows = cur.get<std::uint64_t>();
    const auto cols = cur.get<std::uint32_t>();
    for (std::uint32_t c = 0; c < cols; ++c) {
      FeatureSpec s;
      s.name = cur.get_str();
      s.group = cur.get<FeatureGroup>();
      s.kind = cur.get<FeatureKind>();
      s.key = cur.get<GroupKey>();
      s.cardinality = cur.get<int>();
      s.snap_slot = cur.get<int>();
      s.offset = cur.get<int>();
      s.window = cur.get<int>();
      m.specs.push_back(std::move(s));
    }
    if (schema_hash(m.specs) != m.schema_hash) return std::nullopt;
    m.keys.resize(rows);
    for (auto& k : m.keys) k = cur.get<RowKey>();
    m.values.resize(rows * cols);
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) m.values[r * cols + c] = cur.get<double>();
    }
    m.target.resize(rows);
    for (auto& t : m.target) t = cur.get<double>();
    return m;
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

}  // namespace blendcast
