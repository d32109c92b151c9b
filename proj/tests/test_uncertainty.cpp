#include <doctest.h>

#include <filesystem>
#include <random>

#include "blendcast/error.hpp"
#include "blendcast/uncertainty.hpp"
#include "support.hpp"

using namespace blendcast;

namespace {

StatQuantiles constant_stats(const std::string& id, double v) {
  StatQuantiles s;
  s.series_ids = {id};
  std::array<double, kQuantileCount> row;
  row.fill(v);
  s.values = {row};
  return s;
}

QuantileGrid constant_grid(const std::string& id, int level, double v) {
  QuantileGrid g(level, {id}, {1, kHorizon});
  for (auto& c : g.cells) c.fill(v);
  return g;
}

bool monotone(const std::array<double, kQuantileCount>& c) {
  for (std::size_t q = 1; q < kQuantileCount; ++q) {
    if (c[q] < c[q - 1]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("reference table spot values") {
  const QuantileFactorTable t = QuantileFactorTable::reference();
  CHECK(t.level(1)[0] == 0.890);
  CHECK(t.level(12)[8] == 4.066);
  for (int l = 1; l <= 12; ++l) CHECK(t.level(l)[kMedianIndex] == 1.0);
  t.validate();
  ForecastGrid median(12, {"a"}, {1, kHorizon});
  std::fill(median.values.begin(), median.values.end(), 10.0);
  CHECK(apply_factors(median, t).at(0, 3)[8] == doctest::Approx(40.66).epsilon(1e-14));
}

TEST_CASE("factor table CSV round trip and validation") {
  QuantileFactorTable t = QuantileFactorTable::reference();
  t.last_multiplier[11] = 1.03;
  const QuantileFactorTable back = QuantileFactorTable::parse_csv(t.to_csv(), "t");
  CHECK(back.factors == t.factors);
  CHECK(back.last_multiplier == t.last_multiplier);
  CHECK(back.effective(12, 8) == doctest::Approx(4.066 * 1.03));
  CHECK(back.effective(12, 7) == 3.548);
  t.factors[2][kMedianIndex] = 1.01;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  CHECK_THROWS_AS(QuantileFactorTable::parse_csv("level,0.005\n1,0.9\n", "t"), ValidationError);
}

TEST_CASE("empirical quantiles") {
  std::vector<double> v;
  for (int i = 0; i < 28; ++i) v.push_back(i);
  CHECK(empirical_quantile(v, 0.75) == 20.25);
  CHECK(empirical_quantile(v, 0.0) == 0.0);
  CHECK(empirical_quantile(v, 1.0) == 27.0);
}

TEST_CASE("statistical quantiles of constant sales") {
  testing::ToySeries a{"A", "D", "C", "CA_1", "CA", std::vector<double>(400, 3.0), 1.0, 0};
  const PanelDataset panel = testing::toy_panel({a});
  for (bool weekly : {false, true}) {
    const StatQuantiles s = statistical_quantiles(panel, 400, 13 * 28, weekly);
    for (double v : s.values[0]) CHECK(v == 3.0);
  }
}

TEST_CASE("level-12 correction") {
  StatisticalSet stats{constant_stats("a", 8), constant_stats("a", 8), constant_stats("a", 6), constant_stats("a", 6)};
  const QuantileGrid out = correct_level12(constant_grid("a", 12, 10.0), stats);
  for (std::size_t q = 0; q < kQuantileCount; ++q) {
    if (q == kMedianIndex) continue;
    CHECK(std::fabs(out.at(0, 5)[q] - 8.2) < 1e-12);
  }
  CHECK(out.at(0, 5)[kMedianIndex] == 10.0);

  StatisticalSet same{constant_stats("a", 4), constant_stats("a", 4), constant_stats("a", 4), constant_stats("a", 4)};
  CHECK(std::fabs(correct_level12(constant_grid("a", 12, 4.0), same).at(0, 0)[0] - 4.0) < 1e-12);
}

TEST_CASE("level-11 correction") {
  const QuantileGrid out =
      correct_level11(constant_grid("a", 11, 100.0), constant_stats("a", 80), constant_stats("a", 80));
  CHECK(std::fabs(out.at(0, 0)[0] - 98.2) < 1e-12);
  CHECK(std::fabs(out.at(0, 27)[8] - 98.2) < 1e-12);
}

TEST_CASE("restore_monotone keeps the median") {
  std::array<double, kQuantileCount> c = {3, 2, 1, 4, 5, 4, 9, 8, 7};
  restore_monotone(c);
  CHECK(c == std::array<double, kQuantileCount>{1, 2, 3, 4, 5, 5, 7, 8, 9});
  std::array<double, kQuantileCount> n = {-1, 0, 1, 2, 3, 4, 5, 6, 7};
  restore_monotone(n);
  CHECK(n[0] == 0.0);
}

TEST_CASE("isotonic regression and golden section") {
  const std::vector<double> v = {1, 3, 2, 4};
  CHECK(isotonic_increasing(v) == std::vector<double>{1, 2.5, 2.5, 4});
  const double x = golden_section_minimize([](double t) { return (t - 1.3) * (t - 1.3); }, 0.0, 4.0, 1e-8);
  CHECK(x == doctest::Approx(1.3).epsilon(1e-6));
}

TEST_CASE("perfect medians fit the identity table") {
  const PanelDataset panel = testing::small_synthetic(12, 200);
  const HierarchyIndex index = build_hierarchy(panel);
  const WeightTable w = compute_weights(panel, index, 172);
  const ForecastGrid truth = actuals_grid(panel, {173, 200});
  const FactorFitInput input = prepare_factor_fit(panel, index, w, truth);
  const FactorFitResult r = optimize_factors(input);
  for (int l = 1; l <= 12; ++l) {
    for (double f : r.table.level(l)) CHECK(std::fabs(f - 1.0) < 1e-3);
  }
  CHECK(r.fitted_wspl <= r.identity_wspl + 1e-15);
}

TEST_CASE("pipeline without corrections equals applying factors") {
  const PanelDataset panel = testing::fifteen_series_panel(3, 400);
  const HierarchyIndex index = build_hierarchy(panel);
  ForecastGrid median(12, index.ids(12), {401, 428});
  std::fill(median.values.begin(), median.values.end(), 3.0);
  const auto table = QuantileFactorTable::reference();
  const auto piped = quantile_pipeline(panel, index, median, table, {.corrections = false});
  for (int l = 1; l <= 12; ++l) {
    const QuantileGrid direct = apply_factors(aggregate(median, index, l), table);
    for (std::size_t k = 0; k < direct.cells.size(); ++k) CHECK(piped[l - 1].cells[k] == direct.cells[k]);
  }
  const auto corrected = quantile_pipeline(panel, index, median, table);
  for (const auto& g : corrected) {
    for (const auto& c : g.cells) CHECK(monotone(c));
  }
  const std::string csv = quantile_submission_csv(corrected);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 135);

  const auto path = std::filesystem::temp_directory_path() / "blendcast_quantiles_test.csv";
  write_quantile_submission(path, corrected);
  const auto back = read_quantile_submission(path, index, {401, 428});
  for (int l = 0; l < 12; ++l) CHECK(back[l].cells == corrected[l].cells);
  std::filesystem::remove(path);
}
