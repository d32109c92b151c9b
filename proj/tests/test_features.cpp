#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "blendcast/error.hpp"
#include "blendcast/features.hpp"
#include "support.hpp"

using namespace blendcast;
using testing::ToySeries;

namespace {

std::size_t column(const FeatureMatrix& m, const std::string& name) {
  for (std::size_t c = 0; c < m.specs.size(); ++c) {
    if (m.specs[c].name == name) return c;
  }
  FAIL("no column " << name);
  return 0;
}

PanelDataset ramp_panel(int n_days) {
  ToySeries a{"A", "D", "C", "CA_1", "CA", {}, 1.0, 0};
  for (int d = 1; d <= n_days; ++d) a.sales.push_back(d);
  return testing::toy_panel({a});
}

}  // namespace

TEST_CASE("config text round trip") {
  FeatureConfig c;
  c.lag_count = 3;
  c.rolling_windows = {7};
  c.snap_states = false;
  const FeatureConfig back = parse_feature_config(to_text(c));
  CHECK(to_text(back) == to_text(c));
  CHECK_THROWS_AS(parse_feature_config("lag_count = x\n"), ValidationError);
  CHECK_THROWS_AS(parse_feature_config("colour = red\n"), ValidationError);
}

TEST_CASE("target encoding") {
  ToySeries a{"A", "D", "C", "S1", "CA", {1, 1, 1, 1}, 1.0, 0};
  ToySeries b{"B", "D", "C", "S2", "CA", {3, 3, 3, 3}, 1.0, 0};
  const PanelDataset panel = testing::toy_panel({a, b});
  const TargetEncoding store = mean_target_encode(panel, GroupKey::store, {1, 4});
  CHECK(store.means.at("S1") == 1.0);
  CHECK(store.means.at("S2") == 3.0);
  CHECK(store.lookup("S9") == store.global_mean);
  CHECK(store.global_mean == 2.0);
  const TargetEncoding cat = mean_target_encode(panel, GroupKey::category, {1, 4});
  CHECK(cat.means.at("C") == 2.0);
}

TEST_CASE("price statistics never look ahead") {
  SalesWide wide;
  wide.n_days = 14;
  wide.rows.push_back({"A", "D", "C", "CA_1", "CA", std::vector<double>(14, 1.0)});
  std::vector<PriceRow> prices = {{"CA_1", "A", 11101, 2.0}, {"CA_1", "A", 11102, 3.0}};
  for (int w = 2; w < 7; ++w) prices.push_back({"CA_1", "A", 11101 + w, 3.0});
  const PanelDataset panel = build_panel(wide, testing::plain_calendar(42), prices);
  const auto week1 = price_features(panel, 0, 3);
  CHECK(week1 == std::array<double, 6>{2, 2, 2, 2, 0, 1});
  const auto week2 = price_features(panel, 0, 10);
  CHECK(week2[0] == 3.0);
  CHECK(week2[1] == 3.0);
  CHECK(week2[2] == 2.0);
  CHECK(week2[3] == 2.5);
  CHECK(week2[5] == 2.0);
}

TEST_CASE("lags") {
  const PanelDataset panel = ramp_panel(60);
  const PanelSalesReader reader(panel);
  const auto lags = lag_features(panel, reader, 0, 43, 28, 14);
  CHECK(lags[0] == 14.0);
  CHECK(lags[13] == 1.0);
  const auto early = lag_features(panel, reader, 0, 30, 28, 14);
  CHECK(early[0] == 1.0);
  for (int j = 1; j < 14; ++j) CHECK(std::isnan(early[j]));

  ToySeries c{"A", "D", "C", "CA_1", "CA", std::vector<double>(60, 4.0), 1.0, 0};
  const PanelDataset flat = testing::toy_panel({c});
  for (double v : lag_features(flat, PanelSalesReader(flat), 0, 50, 28, 14)) CHECK(v == 4.0);
}

TEST_CASE("rolling windows") {
  const PanelDataset panel = ramp_panel(80);
  const PanelSalesReader reader(panel);
  const auto two = rolling_features(panel, reader, 0, 40, 28, 2);
  CHECK(two[0] == 11.5);
  const auto lagged = rolling_features(panel, reader, 0, 60, 35, 7);
  CHECK(lagged[0] == doctest::Approx((19 + 20 + 21 + 22 + 23 + 24 + 25) / 7.0));
  CHECK(std::isnan(rolling_features(panel, reader, 0, 30, 28, 7)[0]));
  CHECK(std::isnan(rolling_features(panel, reader, 0, 20, 35, 7)[0]));

  ToySeries c{"A", "D", "C", "CA_1", "CA", std::vector<double>(80, 2.0), 1.0, 0};
  const PanelDataset flat = testing::toy_panel({c});
  const auto f = rolling_features(flat, PanelSalesReader(flat), 0, 70, 28, 14);
  CHECK(f[0] == 2.0);
  CHECK(f[1] == 0.0);
}

TEST_CASE("rolling window before first active day is missing") {
  ToySeries a{"A", "D", "C", "CA_1", "CA", std::vector<double>(70, 1.0), 1.0, 2};
  const PanelDataset panel = testing::toy_panel({a});
  REQUIRE(panel.series(0).first_active_day == 15);
  CHECK(std::isnan(rolling_features(panel, PanelSalesReader(panel), 0, 50, 28, 14)[0]));
  CHECK(rolling_features(panel, PanelSalesReader(panel), 0, 56, 28, 14)[0] == 1.0);
}

TEST_CASE("lag-only matrix over ten days") {
  FeatureConfig c;
  c.categorical.clear();
  c.target_encoding.clear();
  c.price = false;
  c.calendar = false;
  c.snap_own = c.snap_states = false;
  c.rolling_windows.clear();
  c.lag_rolling_lags.clear();
  c.lag_count = 3;
  c.lag_offset = 5;
  const PanelDataset panel = ramp_panel(10);
  const FeatureBuilder builder(panel, c, {1, 10});
  const FeatureMatrix m = builder.assemble({1, 10}, FeatureMode::training);
  CHECK(m.n_rows() == 10);
  CHECK(m.n_cols() == 3);
  CHECK(std::isnan(m.at(5, 0)));
  CHECK(m.at(6, 0) == 1.0);
  CHECK(m.at(9, 2) == 2.0);
  CHECK(m.target[9] == 10.0);
}

TEST_CASE("calendar and snap columns") {
  SyntheticConfig sc;
  sc.n_days = 120;
  const PanelDataset panel = to_panel(generate_synthetic(sc));
  const FeatureBuilder builder(panel, FeatureConfig{}, {1, 120});
  const FeatureMatrix m = builder.assemble({1, 120}, FeatureMode::training);

  std::size_t ca = panel.n_series(), tx = panel.n_series();
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    if (panel.series(i).state_id == "CA" && ca == panel.n_series()) ca = i;
    if (panel.series(i).state_id == "TX" && tx == panel.n_series()) tx = i;
  }
  int ca_only = 0, superbowl = 0;
  for (int d = 1; d <= 120; ++d) {
    const auto& cal = panel.calendar_row(d);
    if (cal.event_name_1 == "SuperBowl") superbowl = d;
    if (cal.snap[0] == 1 && cal.snap[1] == 0 && ca_only == 0) ca_only = d;
  }
  REQUIRE(ca_only > 0);
  REQUIRE(superbowl > 0);
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    const RowKey k = m.keys[r];
    if (k.day == ca_only && k.series == ca) CHECK(m.at(r, column(m, "snap")) == 1.0);
    if (k.day == ca_only && k.series == tx) CHECK(m.at(r, column(m, "snap")) == 0.0);
    if (k.day == superbowl) {
      CHECK(m.at(r, column(m, "event_type_1")) == static_cast<double>(EventType::sporting));
    }
  }
}

TEST_CASE("training rows equal active pairs and are deterministic") {
  const PanelDataset panel = testing::small_synthetic(2, 300);
  const FeatureBuilder builder(panel, FeatureConfig{}, {1, 272});
  const FeatureMatrix a = builder.assemble({1, 272}, FeatureMode::training);
  std::size_t active = 0;
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    for (int d = 1; d <= 272; ++d) active += panel.active(i, d);
  }
  CHECK(a.n_rows() == active);
  const FeatureMatrix b = FeatureBuilder(panel, FeatureConfig{}, {1, 272}).assemble({1, 272}, FeatureMode::training);
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
  CHECK(a.schema_hash == b.schema_hash);
}

TEST_CASE("training features ignore sales after the encoding range") {
  const PanelDataset panel = testing::small_synthetic(2, 300);
  const PanelDataset cut = panel.truncated(272);
  const FeatureMatrix a = FeatureBuilder(panel, FeatureConfig{}, {1, 272}).assemble({1, 272}, FeatureMode::training);
  const FeatureMatrix b = FeatureBuilder(cut, FeatureConfig{}, {1, 272}).assemble({1, 272}, FeatureMode::training);
  REQUIRE(a.values.size() == b.values.size());
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
}

TEST_CASE("matrix cache round trip and tamper detection") {
  const PanelDataset panel = testing::small_synthetic(2, 120);
  const FeatureMatrix m = FeatureBuilder(panel, FeatureConfig{}, {1, 120}).assemble({1, 120}, FeatureMode::training);
  const auto path = std::filesystem::temp_directory_path() / "blendcast_cache_test.bcfm";
  write_matrix_cache(path, m, 77);
  const auto back = read_matrix_cache(path, 77);
  REQUIRE(back.has_value());
  CHECK(back->keys == m.keys);
  CHECK(std::memcmp(back->values.data(), m.values.data(), m.values.size() * sizeof(double)) == 0);
  CHECK_FALSE(read_matrix_cache(path, 78).has_value());
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x5a');
  }
  CHECK_FALSE(read_matrix_cache(path, 77).has_value());
  std::filesystem::remove(path);
  CHECK_FALSE(read_matrix_cache(path, 77).has_value());
}

TEST_CASE("lookback bounds") {
  FeatureConfig c;
  CHECK(c.min_lookback() == 1);
  c.lag_rolling_lags.clear();
  CHECK(c.min_lookback() == 28);
  CHECK(c.max_lookback() == 28 + 56 - 1);
}
