#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "blendcast/error.hpp"
#include "blendcast/features.hpp"
#include "blendcast/gbdt.hpp"
#include "support.hpp"

using namespace blendcast;

namespace {

FeatureMatrix dense_matrix(std::size_t n_cols, const std::vector<double>& values, const std::vector<double>& target) {
  FeatureMatrix m;
  for (std::size_t c = 0; c < n_cols; ++c) {
    FeatureSpec s;
    s.name = "x" + std::to_string(c);
    s.group = FeatureGroup::price;
    s.kind = FeatureKind::price_current;
    m.specs.push_back(s);
  }
  m.schema_hash = schema_hash(m.specs);
  m.values = values;
  m.target = target;
  for (std::size_t r = 0; r < target.size(); ++r) m.keys.push_back({0, static_cast<std::int32_t>(r + 1)});
  return m;
}

// y = 2 * [x0 > 0.5] + noise, with a second pure-noise column.
FeatureMatrix step_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    x.push_back(a);
    x.push_back(b);
    y.push_back(2.0 * (a > 0.5) + 0.2 * u(rng));
  }
  return dense_matrix(2, x, y);
}

GbdtParams plain_params(Objective obj) {
  GbdtParams p;
  p.objective = obj;
  p.subsample = 1.0;
  p.feature_fraction = 1.0;
  return p;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("tweedie loss hand values and deviance agreement") {
  CHECK(tweedie_loss(0.0, 1.0, 1.5) == doctest::Approx(2.0));
  CHECK(tweedie_loss(1.0, 1.0, 1.5) == doctest::Approx(4.0));
  CHECK_THROWS_AS(tweedie_loss(1.0, 0.0, 1.5), DomainError);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int k = 0; k < 200; ++k) {
    const double y = u(rng), mu = u(rng), p = 1.05 + 0.9 * u(rng) / 5.0;
    const double gap = tweedie_loss(y, mu, p) - tweedie_loss(y, y, p);
    CHECK(2.0 * gap == doctest::Approx(tweedie_deviance(y, mu, p)).epsilon(1e-9));
  }
}

TEST_CASE("tweedie gradient signs") {
  for (double f : {-2.0, 0.0, 1.3}) {
    CHECK(std::fabs(tweedie_grad_hess(std::exp(f), f, 1.1).grad) < 1e-12);
    CHECK(tweedie_grad_hess(0.0, f, 1.1).grad > 0.0);
    CHECK(tweedie_grad_hess(0.0, f, 1.1).hess > 0.0);
  }
}

TEST_CASE("binning") {
  const std::vector<double> few = {1, 2, 2, 3, 3, 3};
  const BinMapper lossless = make_bin_mapper(few, 100);
  CHECK(lossless.n_bins() == 3);
  CHECK(lossless.bin(1) == 0);
  CHECK(lossless.bin(2) == 1);
  CHECK(lossless.bin(3) == 2);
  CHECK(lossless.bin(std::nan("")) == lossless.missing_bin());

  std::vector<double> uniform;
  for (int i = 0; i < 1000; ++i) uniform.push_back(i);
  const BinMapper quart = make_bin_mapper(uniform, 4);
  REQUIRE(quart.n_bins() == 4);
  std::array<int, 4> counts{};
  for (double v : uniform) ++counts[quart.bin(v)];
  for (int c : counts) CHECK(c == 250);

  const std::vector<double> missing(10, std::nan(""));
  const BinMapper none = make_bin_mapper(missing, 10);
  CHECK(none.n_bins() == 0);
  CHECK(none.bin(std::nan("")) == 0);
}

TEST_CASE("zero trees and a single leaf give the base score") {
  const FeatureMatrix m = step_data(500, 2);
  GbdtParams p = plain_params(Objective::tweedie);
  p.n_estimators = 0;
  const GbdtModel zero = fit(m, p);
  double mean = 0.0;
  for (double y : m.target) mean += y;
  mean /= static_cast<double>(m.target.size());
  CHECK(zero.predict(m)[0] == doctest::Approx(mean).epsilon(1e-12));

  p.n_estimators = 1;
  p.min_data_in_leaf = 500;
  const GbdtModel stump = fit(m, p);
  CHECK(stump.trees().at(0).leaf_count() == 1);
}

TEST_CASE("held-out deviance falls over the first 50 trees") {
  const FeatureMatrix train = step_data(10000, 3);
  const FeatureMatrix test = step_data(2000, 4);
  GbdtParams p = plain_params(Objective::tweedie);
  p.n_estimators = 50;
  const GbdtModel model = fit(train, p);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= 50; ++k) {
    const auto pred = model.predict(test, k);
    double dev = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) dev += tweedie_deviance(test.target[i], pred[i], 1.1);
    CHECK(dev <= prev);
    prev = dev;
  }
}

TEST_CASE("fit is deterministic and survives save/load") {
  const FeatureMatrix m = step_data(3000, 5);
  GbdtParams p;
  p.n_estimators = 30;
  p.rng_seed = 9;
  const GbdtModel a = fit(m, p);
  const GbdtModel b = fit(m, p);
  CHECK(same_bits(a.predict(m), b.predict(m)));
  std::stringstream buf;
  a.save(buf);
  const GbdtModel c = GbdtModel::load(buf);
  CHECK(same_bits(a.predict(m), c.predict(m)));
  CHECK(c.params().rng_seed == 9);
}

TEST_CASE("squared error matches a hand-coded stump booster") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 40;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n; ++i) {
    x.push_back(std::round(u(rng) * 1000.0) / 1000.0);
    y.push_back(3.0 * x.back() * x.back() + u(rng));
  }
  const FeatureMatrix m = dense_matrix(1, x, y);
  GbdtParams p = plain_params(Objective::squared_error);
  p.num_leaves = 2;
  p.min_data_in_leaf = 1;
  p.learning_rate = 0.1;
  p.n_estimators = 20;
  const GbdtModel model = fit(m, p);

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  double base = 0.0;
  for (double v : y) base += v;
  base /= static_cast<double>(n);
  std::vector<double> f(n, base);
  for (int it = 0; it < p.n_estimators; ++it) {
    double G = 0.0, H = 0.0;
    for (std::size_t i = 0; i < n; ++i) G += f[i] - y[i], H += 1.0;
    double best_gain = 0.0, best_t = 0.0;
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      const double t = (sorted[k] + sorted[k + 1]) / 2.0;
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= t) gl += f[i] - y[i], hl += 1.0;
      }
      const double gain = gl * gl / (hl + 1.0) + (G - gl) * (G - gl) / (H - hl + 1.0) - G * G / (H + 1.0);
      if (gain > best_gain) best_gain = gain, best_t = t;
    }
    double gl = 0.0, hl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] <= best_t) gl += f[i] - y[i], hl += 1.0;
    }
    const double left = -gl / (hl + 1.0) * p.learning_rate;
    const double right = -(G - gl) / (H - hl + 1.0) * p.learning_rate;
    for (std::size_t i = 0; i < n; ++i) f[i] += x[i] <= best_t ? left : right;
  }
  const auto pred = model.predict(m);
  for (std::size_t i = 0; i < n; ++i) CHECK(pred[i] == doctest::Approx(f[i]).epsilon(1e-10));
}

TEST_CASE("invalid inputs") {
  FeatureMatrix m = step_data(100, 7);
  m.target[3] = -1.0;
  CHECK_THROWS_AS(fit(m, GbdtParams{}), ValidationError);
  GbdtParams bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK(parse_objective("mse") == Objective::squared_error);
  CHECK_THROWS(parse_objective("poisson-ish"));
}

TEST_CASE("per-store models") {
  FeatureConfig fc;
  fc.lag_rolling_lags.clear();
  SyntheticConfig one;
  one.stores = {"CA_1"};
  one.n_days = 200;
  const PanelDataset single = to_panel(generate_synthetic(one));
  const FeatureMatrix sm = FeatureBuilder(single, fc, {1, 200}).assemble({1, 200}, FeatureMode::training);
  GbdtParams p;
  p.n_estimators = 10;
  const StoreGbdtModel per = fit_per_store(sm, single, p, {}, {});
  CHECK(same_bits(per.predict(sm, single), fit(sm, p).predict(sm)));

  SyntheticConfig two;
  two.stores = {"CA_1", "TX_1"};
  two.n_days = 200;
  const PanelDataset panel = to_panel(generate_synthetic(two));
  FeatureMatrix m = FeatureBuilder(panel, fc, {1, 200}).assemble({1, 200}, FeatureMode::training);
  const StoreGbdtModel base = fit_per_store(m, panel, p, {}, {{"CA_1", 5}});
  CHECK(base.models().at("CA_1").trees().size() == 5);
  CHECK(base.models().at("TX_1").trees().size() == 10);
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    if (panel.series(m.keys[r].series).store_id == "CA_1") m.target[r] += 3.0;
  }
  const StoreGbdtModel moved = fit_per_store(m, panel, p, {}, {{"CA_1", 5}});
  CHECK(same_bits(base.models().at("TX_1").predict(m), moved.models().at("TX_1").predict(m)));
  CHECK_FALSE(same_bits(base.models().at("CA_1").predict(m), moved.models().at("CA_1").predict(m)));
}
