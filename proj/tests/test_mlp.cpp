#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "blendcast/error.hpp"
#include "blendcast/features.hpp"
#include "blendcast/mlp.hpp"

using namespace blendcast;

namespace {

FeatureSpec numeric_spec(const std::string& name) {
  FeatureSpec s;
  s.name = name;
  s.group = FeatureGroup::price;
  s.kind = FeatureKind::price_current;
  return s;
}

FeatureSpec code_spec(const std::string& name, int cardinality) {
  FeatureSpec s;
  s.name = name;
  s.group = FeatureGroup::categorical;
  s.kind = FeatureKind::category_code;
  s.cardinality = cardinality;
  return s;
}

FeatureMatrix make_matrix(std::vector<FeatureSpec> specs, std::vector<double> values, std::vector<double> target) {
  FeatureMatrix m;
  m.specs = std::move(specs);
  m.schema_hash = schema_hash(m.specs);
  m.values = std::move(values);
  m.target = std::move(target);
  for (std::size_t r = 0; r < m.target.size(); ++r) m.keys.push_back({0, static_cast<std::int32_t>(r + 1)});
  return m;
}

// Gradient of the mean batch loss against central differences.
double max_gradient_error(const MlpLayout& layout, MlpLoss loss, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 0.5);
  std::vector<double> params(layout.n_params);
  for (double& p : params) p = z(rng);
  std::vector<MlpExample> batch(6);
  for (auto& ex : batch) {
    for (std::size_t c = 0; c < layout.cardinality.size(); ++c) ex.codes.push_back(static_cast<int>(rng() % 3));
    for (std::size_t c = 0; c < layout.num_columns.size(); ++c) ex.numeric.push_back(z(rng) * 2.0);
    ex.target = std::fabs(z(rng)) * 3.0;
  }
  std::vector<double> grad(layout.n_params, 0.0);
  mlp_loss_gradient(layout, params, batch, loss, grad);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double h = 1e-6;
    std::vector<double> up = params, down = params;
    up[k] += h;
    down[k] -= h;
    const double fd = (mlp_loss_gradient(layout, up, batch, loss, {}) -
                       mlp_loss_gradient(layout, down, batch, loss, {})) / (2.0 * h);
    worst = std::max(worst, std::fabs(fd - grad[k]) / std::max(1e-3, std::fabs(fd)));
  }
  return worst;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("layout sizes") {
  const MlpLayout ten({}, 4, 1, {3});
  CHECK(ten.n_params == 10);
  const MlpLayout emb({5, 2}, 3, 2, {4});
  CHECK(emb.input_width() == 3 + 3 + 2);
  CHECK(emb.n_params == 6 * 3 + 3 * 3 + 8 * 4 + 4 + 4 + 1);
}

TEST_CASE("backprop matches finite differences") {
  CHECK(max_gradient_error(MlpLayout({}, 4, 1, {3}), {Objective::squared_error, 1.1}, 1) < 1e-4);
  CHECK(max_gradient_error(MlpLayout({3, 2}, 2, 3, {5, 4}), {Objective::squared_error, 1.1}, 2) < 1e-4);
  CHECK(max_gradient_error(MlpLayout({3}, 2, 2, {4}), {Objective::tweedie, 1.1}, 3) < 1e-4);
  CHECK(max_gradient_error(MlpLayout({}, 2, 2, {}), {Objective::tweedie, 1.5}, 4) < 1e-4);
}

TEST_CASE("no hidden layers recovers least squares") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::normal_distribution<double> e(0.0, 0.3);
  std::vector<double> x, y;
  for (int i = 0; i < 2000; ++i) {
    x.push_back(u(rng));
    y.push_back(1.5 * x.back() + 0.7 + e(rng));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  const double slope = sxy / sxx, intercept = my - slope * mx;

  const FeatureMatrix m = make_matrix({numeric_spec("x")}, x, y);
  MlpConfig c;
  c.hidden = {};
  c.epochs = 40;
  c.batch_size = 50;
  c.learning_rate = 0.02;
  c.lr_step_epochs = 10;
  c.snapshots_to_keep = 1;
  const MlpModel model = fit(m, c);
  const FeatureMatrix probe = make_matrix({numeric_spec("x")}, {1.0, 3.0}, {0.0, 0.0});
  const auto pred = model.predict(probe);
  CHECK(pred[0] == doctest::Approx(intercept + slope).epsilon(1e-3));
  CHECK(pred[1] == doctest::Approx(intercept + 3.0 * slope).epsilon(1e-3));
}

TEST_CASE("inputs outside the training range are clamped to it") {
  std::vector<double> x, y;
  for (int i = 0; i < 400; ++i) {
    x.push_back(1.0 + (i % 50) * 0.1);
    y.push_back(std::exp(0.3 * x.back()));
  }
  const FeatureMatrix m = make_matrix({numeric_spec("x")}, x, y);
  MlpConfig c = MlpConfig::fastai_preset();
  c.hidden = {8};
  c.epochs = 3;
  const MlpModel model = fit(m, c);
  CHECK(model.lows()[0] == 1.0);
  CHECK(model.highs()[0] == doctest::Approx(5.9).epsilon(1e-12));
  const FeatureMatrix probe = make_matrix({numeric_spec("x")}, {-50.0, 1.0, 500.0, model.highs()[0]}, {0, 0, 0, 0});
  const auto pred = model.predict(probe);
  CHECK(pred[0] == pred[1]);
  CHECK(pred[2] == pred[3]);
  CHECK(std::isfinite(pred[2]));
}

TEST_CASE("snapshot averaging") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x, y;
  for (int i = 0; i < 500; ++i) {
    x.push_back(u(rng));
    x.push_back(u(rng));
    y.push_back(x[x.size() - 2] + 2.0 * x.back());
  }
  const FeatureMatrix m = make_matrix({numeric_spec("a"), numeric_spec("b")}, x, y);
  MlpConfig c;
  c.hidden = {8};
  c.epochs = 3;
  c.snapshots_to_keep = 1;
  const MlpModel one = fit(m, c);
  CHECK(one.snapshots().size() == 1);
  CHECK(same_bits(predict_averaged(std::span(&one, 1), m), one.predict(m)));

  c.snapshots_to_keep = 2;
  const MlpModel two = fit(m, c);
  REQUIRE(two.snapshots().size() == 2);
  const auto avg = predict_averaged(std::span(&two, 1), m);
  const auto a = two.predict(m, 0), b = two.predict(m, 1);
  for (std::size_t i = 0; i < avg.size(); ++i) CHECK(avg[i] == doctest::Approx((a[i] + b[i]) / 2.0).epsilon(1e-14));
}

TEST_CASE("fit is deterministic and survives save/load") {
  std::vector<double> x, y;
  for (int i = 0; i < 300; ++i) {
    x.push_back(i % 3 + 1);
    x.push_back(i * 0.01);
    y.push_back(i % 3);
  }
  const FeatureMatrix m = make_matrix({code_spec("c", 3), numeric_spec("t")}, x, y);
  MlpConfig c = MlpConfig::fastai_preset();
  c.epochs = 3;
  c.hidden = {6};
  const MlpModel a = fit(m, c), b = fit(m, c);
  CHECK(same_bits(a.predict(m), b.predict(m)));
  std::stringstream buf;
  a.save(buf);
  const MlpModel back = MlpModel::load(buf);
  CHECK(same_bits(a.predict(m), back.predict(m)));
}

TEST_CASE("embeddings separate codes and default unseen codes to row 0") {
  std::mt19937_64 rng(8);
  std::vector<double> x, y;
  for (int i = 0; i < 2000; ++i) {
    const int code = static_cast<int>(rng() % 2) + 1;
    x.push_back(code);
    y.push_back(code == 1 ? 0.0 : 5.0);
  }
  const FeatureMatrix m = make_matrix({code_spec("c", 2)}, x, y);
  MlpConfig c;
  c.hidden = {4};
  c.epochs = 6;
  const MlpModel model = fit(m, c);
  CHECK(embed_lookup(model, 0, 1) != embed_lookup(model, 0, 2));
  CHECK(embed_lookup(model, 0, 57) == embed_lookup(model, 0, 0));
  const auto pred = model.predict(m);
  for (std::size_t i = 0; i < 20; ++i) CHECK(std::fabs(pred[i] - y[i]) < 1.0);
}

TEST_CASE("presets") {
  for (int i = 0; i < 3; ++i) {
    const MlpConfig k = MlpConfig::keras_preset(i);
    CHECK(k.window_days == 17 * 28);
    CHECK(k.objective == Objective::squared_error);
  }
  CHECK(MlpConfig::keras_preset(0).hidden != MlpConfig::keras_preset(1).hidden);
  CHECK(MlpConfig::fastai_preset().objective == Objective::tweedie);
  CHECK(MlpConfig::fastai_preset().window_days == 0);
  CHECK_THROWS_AS(MlpConfig::keras_preset(3), ValidationError);
}

TEST_CASE("keras window keeps only the last days") {
  std::vector<double> x, y;
  for (int i = 0; i < 600; ++i) {
    x.push_back(i);
    y.push_back(i < 600 - 476 ? 100.0 : 1.0);
  }
  const FeatureMatrix m = make_matrix({numeric_spec("t")}, x, y);
  MlpConfig c = MlpConfig::keras_preset(0);
  c.hidden = {};
  c.epochs = 30;
  const MlpModel model = fit(m, c);
  const auto pred = model.predict(m);
  CHECK(pred.back() == doctest::Approx(1.0).epsilon(0.05));
}
