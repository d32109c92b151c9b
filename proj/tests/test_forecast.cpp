#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "blendcast/error.hpp"
#include "blendcast/forecast.hpp"
#include "support.hpp"

using namespace blendcast;

namespace {

std::size_t column(const std::vector<FeatureSpec>& specs, const std::string& name) {
  for (std::size_t c = 0; c < specs.size(); ++c) {
    if (specs[c].name == name) return c;
  }
  throw std::runtime_error("no column " + name);
}

FeatureConfig far_lags() {
  FeatureConfig c;
  c.lag_rolling_lags.clear();
  c.rolling_windows = {7, 28};
  return c;
}

FunctionPointModel lag29_model(const FeatureBuilder& builder) {
  const std::size_t col = column(builder.specs(), "lag_29");
  return FunctionPointModel(builder.schema_hash(), [col](const FeatureMatrix& m) {
    std::vector<double> out(m.n_rows());
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
      const double v = m.at(r, col);
      out[r] = std::isnan(v) ? 0.0 : v;
    }
    return out;
  });
}

ForecastConfig tiny_config() {
  ForecastConfig c;
  c.features = far_lags();
  c.groups.clear();
  ModelGroupConfig g;
  g.name = "gb";
  g.kind = GroupKind::gbdt;
  g.gbdt.n_estimators = 15;
  c.groups.push_back(g);
  ModelGroupConfig o;
  o.name = "truth";
  o.kind = GroupKind::oracle;
  c.groups.push_back(o);
  c.blend.groups = {"gb", "truth"};
  c.blend.early = {1, 1};
  c.blend.last = {1, 1};
  return c;
}

}  // namespace

TEST_CASE("validation splits") {
  const auto full = make_splits(1941);
  REQUIRE(full.size() == 3);
  CHECK(full[0].validation == DayRange{1914, 1941});
  CHECK(full[1].validation == DayRange{1886, 1913});
  CHECK(full[2].validation == DayRange{1578, 1605});
  CHECK(full[0].train == DayRange{1, 1913});
  CHECK(make_splits(1941, true)[0].train == DayRange{1, 1940});

  const auto desk = make_splits(700);
  CHECK(desk[0].validation == DayRange{673, 700});
  CHECK(desk[1].validation == DayRange{645, 672});
  CHECK(desk[2].validation == DayRange{337, 364});
  CHECK(make_splits(100).size() == 2);
}

TEST_CASE("lag-29 model forecasts shifted history and never reads the buffer") {
  const PanelDataset panel = testing::small_synthetic(3, 300);
  const FeatureBuilder builder(panel, far_lags(), {1, 272});
  const FunctionPointModel model = lag29_model(builder);
  RecursiveStats stats;
  const ForecastGrid rec = recursive_forecast(model, builder, 273, kHorizon, &stats);
  CHECK(stats.buffer_reads == 0);
  for (std::size_t i = 0; i < panel.n_series(); ++i) {
    if (!panel.active(i, 273 - 43)) continue;
    for (int k = 0; k < kHorizon; ++k) CHECK(rec.at(i, k) == panel.y(i, 273 + k - 29));
  }
  const ForecastGrid dir = direct_forecast(model, builder, 273);
  CHECK(std::memcmp(rec.values.data(), dir.values.data(), rec.values.size() * sizeof(double)) == 0);
}

TEST_CASE("short lags read the buffer") {
  const PanelDataset panel = testing::small_synthetic(3, 300);
  FeatureConfig c = far_lags();
  c.lag_rolling_lags = {1};
  c.lag_rolling_windows = {7};
  const FeatureBuilder builder(panel, c, {1, 272});
  const FunctionPointModel model(builder.schema_hash(), [](const FeatureMatrix& m) {
    return std::vector<double>(m.n_rows(), 1.0);
  });
  RecursiveStats stats;
  recursive_forecast(model, builder, 273, kHorizon, &stats);
  CHECK(stats.buffer_reads > 0);
}

TEST_CASE("constant model") {
  const PanelDataset panel = testing::small_synthetic(4, 200);
  const FeatureBuilder builder(panel, far_lags(), {1, 200});
  const FunctionPointModel model(builder.schema_hash(), [](const FeatureMatrix& m) {
    return std::vector<double>(m.n_rows(), 2.5);
  });
  const ForecastGrid g = recursive_forecast(model, builder, 201);
  for (std::size_t i = 0; i < g.n_series(); ++i) {
    for (std::size_t t = 0; t < g.horizon(); ++t) {
      CHECK(g.at(i, t) == (panel.active(i, 201 + static_cast<int>(t)) ? 2.5 : 0.0));
    }
  }
  const FunctionPointModel wrong(builder.schema_hash() + 1, [](const FeatureMatrix& m) {
    return std::vector<double>(m.n_rows(), 0.0);
  });
  CHECK_THROWS_AS(recursive_forecast(wrong, builder, 201), ValidationError);
}

TEST_CASE("oracle group scores zero on every split") {
  const PanelDataset panel = testing::small_synthetic(5, 400);
  ForecastConfig c = tiny_config();
  c.groups.erase(c.groups.begin());
  c.blend.groups = {"truth"};
  c.blend.early = {1};
  c.blend.last = {1};
  c.smoothing.alpha = 1.0;
  const BacktestResult r = backtest(c, panel, make_splits(panel.n_days()));
  REQUIRE(r.report.splits.size() == 3);
  for (const auto& row : r.report.scores) {
    for (double v : row) CHECK(v == 0.0);
  }
}

TEST_CASE("backtest report shape") {
  const PanelDataset panel = testing::small_synthetic(6, 400);
  const ForecastConfig c = tiny_config();
  const BacktestResult r = backtest(c, panel, make_splits(panel.n_days()));
  CHECK(r.report.columns == std::vector<std::string>{"gb", "truth", "ensemble"});
  REQUIRE(r.report.mean.size() == 3);
  CHECK(r.report.mean[0] > 0.0);
  CHECK(r.report.mean[1] == 0.0);
  double m = 0.0;
  for (const auto& row : r.report.scores) m += row[0];
  CHECK(r.report.mean[0] == doctest::Approx(m / 3.0));
  CHECK(r.report.to_csv().rfind("split,gb,truth,ensemble\n", 0) == 0);
}

TEST_CASE("model bundle round trip") {
  const PanelDataset panel = testing::small_synthetic(7, 300);
  ForecastConfig c = tiny_config();
  ModelGroupConfig net;
  net.name = "net";
  net.kind = GroupKind::mlp;
  net.mlp.push_back(MlpConfig::fastai_preset());
  net.mlp.back().epochs = 2;
  net.mlp.back().hidden = {8};
  c.groups.push_back(net);
  ModelGroupConfig store;
  store.name = "store";
  store.kind = GroupKind::gbdt_per_store;
  store.gbdt.n_estimators = 5;
  c.groups.push_back(store);
  c.blend.groups = {"gb", "truth", "net", "store"};
  c.blend.early = {1, 1, 1, 1};
  c.blend.last = {1, 1, 0, 1};
  const TrainedPipeline p = full_train(c, panel);
  const auto path = std::filesystem::temp_directory_path() / "blendcast_models_test.bin";
  save_models(path, p);
  const TrainedPipeline q = load_models(path, c, panel);
  const auto a = forecast_groups(p, 301), b = forecast_groups(q, 301);
  for (const auto& [name, grid] : a) {
    CHECK(std::memcmp(grid.values.data(), b.at(name).values.data(), grid.values.size() * sizeof(double)) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("point submission round trip") {
  const PanelDataset panel = testing::small_synthetic(8, 100);
  ForecastGrid g(12, build_hierarchy(panel).ids(12), {73, 100});
  for (std::size_t k = 0; k < g.values.size(); ++k) g.values[k] = 0.1 * static_cast<double>(k % 17) + 1.0 / 3.0;
  const auto path = std::filesystem::temp_directory_path() / "blendcast_point_test.csv";
  write_point_submission(path, g);
  const ForecastGrid back = read_point_submission(path, panel, g.days);
  CHECK(back.values == g.values);
  std::filesystem::remove(path);
}
