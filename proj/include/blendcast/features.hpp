#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/grid.hpp"
#include "blendcast/hierarchy.hpp"

namespace blendcast {

enum class FeatureGroup : std::uint8_t {
  categorical,
  target_encoding,
  price,
  calendar,
  lag,
  rolling,
  lag_rolling
};

enum class FeatureKind : std::uint8_t {
  category_code,
  target_mean,
  price_current,
  price_max,
  price_min,
  price_mean,
  price_std,
  price_unique,
  weekday,
  month,
  year,
  month_day,
  event_type_1,
  event_type_2,
  snap_own,
  snap_state,
  lag,
  rolling_mean,
  rolling_std
};

struct FeatureSpec {
  std::string name;
  FeatureGroup group = FeatureGroup::lag;
  FeatureKind kind = FeatureKind::lag;
  GroupKey key = GroupKey::item;  // category_code, target_mean
  int cardinality = 0;            // category_code: number of known categories
  int snap_slot = 0;              // snap_state
  int offset = 0;                 // lag: days back; rolling: window ends `offset` days back
  int window = 0;                 // rolling window length

  bool sales_derived() const {
    return group == FeatureGroup::lag || group == FeatureGroup::rolling ||
           group == FeatureGroup::lag_rolling;
  }
};

// Parsed form of the key-value feature spec file.
struct FeatureConfig {
  std::vector<GroupKey> categorical = {GroupKey::item, GroupKey::department, GroupKey::category,
                                       GroupKey::store, GroupKey::state};
  std::vector<GroupKey> target_encoding = {GroupKey::item, GroupKey::department,
                                           GroupKey::category, GroupKey::store, GroupKey::state};
  bool price = true;
  bool calendar = true;
  bool snap_own = true;     // the series' own-state flag
  bool snap_states = true;  // all three raw state flags
  int lag_offset = 28;
  int lag_count = 14;
  std::vector<int> rolling_windows = {7, 14, 28, 56};
  std::vector<int> lag_rolling_lags = {1, 7, 14};
  std::vector<int> lag_rolling_windows = {7, 14, 28, 56};

  // Largest number of days back any sales-derived feature reads.
  int max_lookback() const;
  // Smallest number of days back any sales-derived feature reads (0 if none).
  int min_lookback() const;
};

// Parses lines of `key = value`; '#' starts a comment. Lists are comma separated.
FeatureConfig parse_feature_config(const std::string& text);
FeatureConfig load_feature_config(const std::filesystem::path& path);
std::string to_text(const FeatureConfig& config);

std::string_view to_string(GroupKey key);
GroupKey parse_group_key(std::string_view text);

// Source of daily sales for sales-derived features. NaN means unknown.
class SalesReader {
 public:
  virtual ~SalesReader() = default;
  virtual double sales(std::size_t series, int day) const = 0;
};

// Observed history only.
class PanelSalesReader final : public SalesReader {
 public:
  explicit PanelSalesReader(const PanelDataset& panel) : panel_(&panel) {}
  double sales(std::size_t series, int day) const override;

 private:
  const PanelDataset* panel_;
};

// Observed history before `start_day`, forecasts from `buffer` for the first
// `filled` horizon steps, unknown after that. Days >= start_day never read
// the panel, even when actuals exist.
class RecursiveSalesReader final : public SalesReader {
 public:
  RecursiveSalesReader(const PanelDataset& panel, int start_day, const ForecastGrid& buffer)
      : panel_(&panel), start_day_(start_day), buffer_(&buffer) {}

  void set_filled(int steps) { filled_ = steps; }
  std::size_t buffer_reads() const { return buffer_reads_; }
  double sales(std::size_t series, int day) const override;

 private:
  const PanelDataset* panel_;
  int start_day_;
  const ForecastGrid* buffer_;
  int filled_ = 0;
  mutable std::atomic<std::size_t> buffer_reads_{0};
};

struct RowKey {
  std::uint32_t series = 0;
  std::int32_t day = 0;
  friend bool operator==(const RowKey&, const RowKey&) = default;
};

// Row-major feature values; NaN is the missing marker.
struct FeatureMatrix {
  std::vector<FeatureSpec> specs;
  std::uint64_t schema_hash = 0;
  std::vector<RowKey> keys;
  std::vector<double> values;
  std::vector<double> target;  // NaN in inference mode

  std::size_t n_rows() const { return keys.size(); }
  std::size_t n_cols() const { return specs.size(); }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * n_cols(), n_cols()};
  }
  double at(std::size_t r, std::size_t c) const { return values[r * n_cols() + c]; }

  // Rows whose index appears in `rows`, in that order.
  FeatureMatrix select(std::span<const std::size_t> rows) const;
};

std::uint64_t schema_hash(std::span<const FeatureSpec> specs);

enum class FeatureMode { training, inference };

// Category -> mean target over active rows of `train_days`.
struct TargetEncoding {
  std::map<std::string, double> means;
  double global_mean = 0.0;

  double lookup(const std::string& category) const;
};

TargetEncoding mean_target_encode(const PanelDataset& panel, GroupKey key, DayRange train_days);

// Price statistics over all priced weeks up to and including the week of
// `day`: {current, max, min, mean, std, n_unique}. NaN when never priced.
std::array<double, 6> price_features(const PanelDataset& panel, std::size_t series, int day);

// Sales at day - (offset + j), j = 1..count.
std::vector<double> lag_features(const PanelDataset& panel, const SalesReader& sales,
                                 std::size_t series, int day, int offset = 28, int count = 14);

// {mean, std} over days [day - offset - window + 1, day - offset].
std::array<double, 2> rolling_features(const PanelDataset& panel, const SalesReader& sales,
                                       std::size_t series, int day, int offset, int window);

// Maps (series, day) to feature vectors. Target encodings are fitted on
// `encoding_days` at construction; the panel must outlive the builder.
class FeatureBuilder {
 public:
  FeatureBuilder(const PanelDataset& panel, FeatureConfig config, DayRange encoding_days);

  const PanelDataset& panel() const { return *panel_; }
  const FeatureConfig& config() const { return config_; }
  const std::vector<FeatureSpec>& specs() const { return specs_; }
  std::uint64_t schema_hash() const { return schema_hash_; }
  DayRange encoding_days() const { return encoding_days_; }

  void fill_row(std::size_t series, int day, const SalesReader& sales, std::span<double> out) const;

  // Training: one row per active (series, day) with day <= n_days, ordered by
  // series then day, reading observed history. Inference: one row per active
  // series and day, ordered by day then series, reading `sales` (required).
  FeatureMatrix assemble(DayRange days, FeatureMode mode, const SalesReader* sales = nullptr) const;

  // Recomputes only the sales-derived columns of rows [begin, end).
  void refresh_sales_columns(FeatureMatrix& matrix, std::size_t begin, std::size_t end,
                             const SalesReader& sales) const;

 private:
  const PanelDataset* panel_;
  FeatureConfig config_;
  DayRange encoding_days_;
  std::vector<FeatureSpec> specs_;
  std::uint64_t schema_hash_ = 0;
  std::array<std::map<std::string, int>, 5> codes_;
  std::array<std::vector<double>, 5> series_encoding_;  // by GroupKey, per series
  std::array<std::vector<int>, 5> series_code_;
  // Per series, per priced week: running {max, min, mean, std, n_unique}.
  std::vector<std::vector<std::array<double, 5>>> price_prefix_;
  std::vector<std::size_t> sales_columns_;
};

// Columnar on-disk cache with an embedded schema header and checksum.
void write_matrix_cache(const std::filesystem::path& path, const FeatureMatrix& matrix,
                        std::uint64_t cache_key);
// nullopt when the file is absent, corrupted or built for another key.
std::optional<FeatureMatrix> read_matrix_cache(const std::filesystem::path& path,
                                               std::uint64_t cache_key);

}  // namespace blendcast
