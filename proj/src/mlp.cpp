#include "blendcast/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "blendcast/error.hpp"
#include "blendcast/parallel.hpp"

namespace blendcast {

void MlpConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("mlp config: " + what); };
  if (embedding_dim < 1) fail("embedding_dim must be >= 1");
  for (int w : hidden) {
    if (w < 1) fail("hidden widths must be >= 1");
  }
  if (objective == Objective::tweedie &&
      !(tweedie_variance_power > 1.0 && tweedie_variance_power < 2.0)) {
    fail("tweedie_variance_power must lie in (1, 2)");
  }
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (lr_step_epochs < 1) fail("lr_step_epochs must be >= 1");
  if (!(lr_decay > 0.0)) fail("lr_decay must be positive");
  if (grad_clip < 0.0) fail("grad_clip must be >= 0");
  if (snapshots_to_keep < 1) fail("snapshots_to_keep must be >= 1");
  if (window_days < 0) fail("window_days must be >= 0");
}

MlpConfig MlpConfig::keras_preset(int index) {
  static const std::vector<int> widths[3] = {{64, 32}, {96, 48}, {48, 24}};
  if (index < 0 || index > 2) throw ValidationError("keras preset index must be 0, 1 or 2");
  MlpConfig c;
  c.hidden = widths[index];
  c.objective = Objective::squared_error;
  c.window_days = 17 * kHorizon;
  c.rng_seed = static_cast<std::uint64_t>(index);
  return c;
}

MlpConfig MlpConfig::fastai_preset() {
  MlpConfig c;
  c.hidden = {64, 32};
  c.objective = Objective::tweedie;
  c.tweedie_variance_power = 1.1;
  c.learning_rate = 0.005;
  c.window_days = 0;
  return c;
}

MlpLayout::MlpLayout(std::vector<int> card, int dim, std::size_t n_numeric,
                     const std::vector<int>& hidden)
    : cardinality(std::move(card)), embedding_dim(dim) {
  num_columns.resize(n_numeric);
  std::size_t offset = 0;
  for (int c : cardinality) {
    embedding_offset.push_back(offset);
    offset += static_cast<std::size_t>(c + 1) * static_cast<std::size_t>(dim);
  }
  widths.push_back(static_cast<int>(cardinality.size()) * dim + static_cast<int>(n_numeric));
  for (int w : hidden) widths.push_back(w);
  widths.push_back(1);
  for (std::size_t l = 1; l < widths.size(); ++l) {
    weight_offset.push_back(offset);
    offset += static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l - 1]);
    bias_offset.push_back(offset);
    offset += static_cast<std::size_t>(widths[l]);
  }
  n_params = offset;
}

MlpLayout MlpLayout::from_specs(const std::vector<FeatureSpec>& specs, int embedding_dim,
                                const std::vector<int>& hidden) {
  std::vector<std::size_t> cats;
  std::vector<int> card;
  std::vector<std::size_t> nums;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    if (specs[c].kind == FeatureKind::category_code) {
      cats.push_back(c);
      card.push_back(specs[c].cardinality);
    } else {
      nums.push_back(c);
    }
  }
  MlpLayout layout(card, embedding_dim, nums.size(), hidden);
  layout.cat_columns = std::move(cats);
  layout.num_columns = std::move(nums);
  return layout;
}

namespace {

constexpr double kOutputClamp = 50.0;

int table_row(const MlpLayout& layout, std::size_t k, int code) {
  return code >= 1 && code <= layout.cardinality[k] ? code : 0;
}

// Activations per layer: a[0] is the input, a[l] the post-ReLU output of layer l.
struct Trace {
  std::vector<std::vector<double>> a;
};

double forward(const MlpLayout& layout, std::span<const double> params, const MlpExample& x,
               Trace& trace) {
  const std::size_t n_layers = layout.widths.size();
  trace.a.resize(n_layers);
  auto& input = trace.a[0];
  input.assign(layout.input_width(), 0.0);
  const auto dim = static_cast<std::size_t>(layout.embedding_dim);
  for (std::size_t k = 0; k < layout.cardinality.size(); ++k) {
    const double* row = params.data() + layout.embedding_offset[k] +
                        static_cast<std::size_t>(table_row(layout, k, x.codes[k])) * dim;
    std::copy(row, row + dim, input.begin() + static_cast<std::ptrdiff_t>(k * dim));
  }
  std::copy(x.numeric.begin(), x.numeric.end(),
            input.begin() + static_cast<std::ptrdiff_t>(layout.cardinality.size() * dim));

  for (std::size_t l = 1; l < n_layers; ++l) {
    const auto in = static_cast<std::size_t>(layout.widths[l - 1]);
    const auto out = static_cast<std::size_t>(layout.widths[l]);
    const double* w = params.data() + layout.weight_offset[l - 1];
    const double* b = params.data() + layout.bias_offset[l - 1];
    const auto& prev = trace.a[l - 1];
    auto& cur = trace.a[l];
    cur.resize(out);
    const bool last = l + 1 == n_layers;
    for (std::size_t j = 0; j < out; ++j) {
      double z = b[j];
      const double* wj = w + j * in;
      for (std::size_t i = 0; i < in; ++i) z += wj[i] * prev[i];
      cur[j] = last ? z : std::max(z, 0.0);
    }
  }
  return trace.a.back()[0];
}

double example_loss(double out, double y, MlpLoss loss, double& d_out) {
  if (loss.objective == Objective::squared_error) {
    d_out = out - y;
    return 0.5 * (out - y) * (out - y);
  }
  const double o = std::clamp(out, -kOutputClamp, kOutputClamp);
  const GradHess gh = tweedie_grad_hess(y, o, loss.p);
  d_out = o == out ? gh.grad : 0.0;
  return tweedie_loss(y, std::exp(o), loss.p);
}

}  // namespace

double mlp_output(const MlpLayout& layout, std::span<const double> params, const MlpExample& x) {
  Trace trace;
  return forward(layout, params, x, trace);
}

double mlp_loss_gradient(const MlpLayout& layout, std::span<const double> params,
                         std::span<const MlpExample> batch, MlpLoss loss, std::span<double> grad) {
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t n_layers = layout.widths.size();
  const auto dim = static_cast<std::size_t>(layout.embedding_dim);
  Trace trace;
  std::vector<double> delta;
  std::vector<double> prev_delta;
  double total = 0.0;
  for (const MlpExample& x : batch) {
    const double out = forward(layout, params, x, trace);
    double d_out = 0.0;
    total += example_loss(out, x.target, loss, d_out);
    if (grad.empty()) continue;

    delta.assign(1, d_out * scale);
    for (std::size_t l = n_layers - 1; l >= 1; --l) {
      const auto in = static_cast<std::size_t>(layout.widths[l - 1]);
      const auto out_w = static_cast<std::size_t>(layout.widths[l]);
      const double* w = params.data() + layout.weight_offset[l - 1];
      double* gw = grad.data() + layout.weight_offset[l - 1];
      double* gb = grad.data() + layout.bias_offset[l - 1];
      const auto& prev = trace.a[l - 1];
      prev_delta.assign(in, 0.0);
      for (std::size_t j = 0; j < out_w; ++j) {
        const double d = delta[j];
        if (d == 0.0) continue;
        gb[j] += d;
        double* gwj = gw + j * in;
        const double* wj = w + j * in;
        for (std::size_t i = 0; i < in; ++i) {
          gwj[i] += d * prev[i];
          prev_delta[i] += d * wj[i];
        }
      }
      if (l > 1) {
        for (std::size_t i = 0; i < in; ++i) {
          if (prev[i] <= 0.0) prev_delta[i] = 0.0;
        }
      }
      delta.swap(prev_delta);
    }
    for (std::size_t k = 0; k < layout.cardinality.size(); ++k) {
      double* g = grad.data() + layout.embedding_offset[k] +
                  static_cast<std::size_t>(table_row(layout, k, x.codes[k])) * dim;
      for (std::size_t d = 0; d < dim; ++d) g[d] += delta[k * dim + d];
    }
  }
  return total * scale;
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> init_params(const MlpLayout& layout, std::mt19937_64& rng) {
  std::vector<double> params(layout.n_params, 0.0);
  for (std::size_t k = 0; k < layout.cardinality.size(); ++k) {
    const std::size_t size =
        static_cast<std::size_t>(layout.cardinality[k] + 1) * static_cast<std::size_t>(layout.embedding_dim);
    for (std::size_t i = 0; i < size; ++i) {
      params[layout.embedding_offset[k] + i] = 0.1 * (2.0 * unit_uniform(rng) - 1.0);
    }
  }
  for (std::size_t l = 1; l < layout.widths.size(); ++l) {
    const auto in = static_cast<std::size_t>(layout.widths[l - 1]);
    const auto out = static_cast<std::size_t>(layout.widths[l]);
    const double limit = in == 0 ? 0.0 : std::sqrt(6.0 / static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) {
      params[layout.weight_offset[l - 1] + i] = limit * (2.0 * unit_uniform(rng) - 1.0);
    }
  }
  return params;
}

}  // namespace

MlpExample MlpModel::encode(const FeatureMatrix& matrix, std::size_t row) const {
  MlpExample x;
  x.codes.resize(layout_.cat_columns.size());
  for (std::size_t k = 0; k < layout_.cat_columns.size(); ++k) {
    const double v = matrix.at(row, layout_.cat_columns[k]);
    x.codes[k] = std::isnan(v) ? 0 : static_cast<int>(v);
  }
  x.numeric.resize(layout_.num_columns.size());
  for (std::size_t j = 0; j < layout_.num_columns.size(); ++j) {
    const double v = matrix.at(row, layout_.num_columns[j]);
    x.numeric[j] = std::isnan(v) ? 0.0 : (std::clamp(v, lows_[j], highs_[j]) - means_[j]) / scales_[j];
  }
  x.target = matrix.target.empty() ? 0.0 : matrix.target[row];
  return x;
}

double MlpModel::transform(double out) const {
  if (config_.objective == Objective::tweedie) {
    return std::exp(std::clamp(out, -kOutputClamp, kOutputClamp));
  }
  return out;
}

std::vector<double> MlpModel::predict(const FeatureMatrix& matrix, int snapshot) const {
  if (matrix.schema_hash != schema_hash_) {
    throw ValidationError("mlp predict: feature schema does not match the trained model");
  }
  if (snapshots_.empty()) throw ValidationError("mlp predict: model has no snapshots");
  const std::size_t s = snapshot < 0 ? snapshots_.size() - 1 : static_cast<std::size_t>(snapshot);
  if (s >= snapshots_.size()) throw ValidationError("mlp predict: snapshot index out of range");
  std::vector<double> out(matrix.n_rows());
  parallel_for(matrix.n_rows(), [&](std::size_t r) {
    out[r] = transform(mlp_output(layout_, snapshots_[s], encode(matrix, r)));
  });
  return out;
}

MlpModel fit(const FeatureMatrix& matrix, const MlpConfig& config) {
  config.validate();
  std::vector<std::size_t> rows;
  int last_day = std::numeric_limits<int>::min();
  for (const RowKey& key : matrix.keys) last_day = std::max(last_day, static_cast<int>(key.day));
  for (std::size_t r = 0; r < matrix.n_rows(); ++r) {
    if (!std::isfinite(matrix.target[r])) continue;
    if (config.window_days > 0 && matrix.keys[r].day <= last_day - config.window_days) continue;
    if (config.objective == Objective::tweedie && matrix.target[r] < 0.0) {
      throw ValidationError("mlp fit: tweedie objective needs non-negative targets");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw ValidationError("mlp fit: no training rows");

  MlpModel model;
  model.config_ = config;
  model.schema_hash_ = matrix.schema_hash;
  model.layout_ = MlpLayout::from_specs(matrix.specs, config.embedding_dim, config.hidden);
  const MlpLayout& layout = model.layout_;

  const std::size_t n_num = layout.num_columns.size();
  model.means_.assign(n_num, 0.0);
  model.scales_.assign(n_num, 1.0);
  model.lows_.assign(n_num, -std::numeric_limits<double>::infinity());
  model.highs_.assign(n_num, std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < n_num; ++j) {
    double sum = 0.0;
    double sq = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t count = 0;
    for (std::size_t r : rows) {
      const double v = matrix.at(r, layout.num_columns[j]);
      if (std::isnan(v)) continue;
      if (std::isinf(v)) throw ValidationError("mlp fit: non-finite feature value");
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++count;
    }
    if (count == 0) continue;
    model.lows_[j] = lo;
    model.highs_[j] = hi;
    const double mean = sum / static_cast<double>(count);
    for (std::size_t r : rows) {
      const double v = matrix.at(r, layout.num_columns[j]);
      if (!std::isnan(v)) sq += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(count));
    model.means_[j] = mean;
    model.scales_[j] = sd > 0.0 ? sd : 1.0;
  }

  std::vector<MlpExample> examples;
  examples.reserve(rows.size());
  for (std::size_t r : rows) examples.push_back(model.encode(matrix, r));

  std::mt19937_64 rng(config.rng_seed);
  std::vector<double> params = init_params(layout, rng);
  if (config.objective == Objective::tweedie) {
    double mean = 0.0;
    for (const auto& x : examples) mean += x.target;
    mean /= static_cast<double>(examples.size());
    params[layout.bias_offset.back()] = std::log(std::max(mean, 1e-6));
  }

  const MlpLoss loss{config.objective, config.tweedie_variance_power};
  std::vector<double> velocity(layout.n_params, 0.0);
  std::vector<double> grad(layout.n_params, 0.0);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<MlpExample> batch;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    const double rate =
        config.learning_rate * std::pow(config.lr_decay, epoch / config.lr_step_epochs);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(examples[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double value = mlp_loss_gradient(layout, params, batch, loss, grad);
      if (!std::isfinite(value)) {
        throw DivergenceError(fmt::format(
            "mlp training diverged at epoch {} batch {}: loss {} (learning rate {})", epoch + 1,
            begin / batch_size + 1, value, rate));
      }
      if (config.grad_clip > 0.0) {
        double norm = 0.0;
        for (double g : grad) norm += g * g;
        norm = std::sqrt(norm);
        if (norm > config.grad_clip) {
          const double shrink = config.grad_clip / norm;
          for (double& g : grad) g *= shrink;
        }
      }
      for (std::size_t k = 0; k < params.size(); ++k) {
        velocity[k] = config.momentum * velocity[k] - rate * grad[k];
        params[k] += velocity[k];
      }
    }
    if (epoch >= config.epochs - config.snapshots_to_keep) model.snapshots_.push_back(params);
  }
  return model;
}

std::vector<MlpModel> fit_group(const FeatureMatrix& matrix, const std::vector<MlpConfig>& configs) {
  std::vector<MlpModel> models(configs.size());
  parallel_for(configs.size(), [&](std::size_t i) { models[i] = fit(matrix, configs[i]); });
  return models;
}

std::vector<double> predict_averaged(std::span<const MlpModel> models, const FeatureMatrix& matrix) {
  if (models.empty()) throw ValidationError("predict_averaged: no models");
  std::vector<double> sum(matrix.n_rows(), 0.0);
  std::size_t count = 0;
  for (const MlpModel& model : models) {
    for (std::size_t s = 0; s < model.snapshots().size(); ++s) {
      const std::vector<double> p = model.predict(matrix, static_cast<int>(s));
      for (std::size_t r = 0; r < p.size(); ++r) sum[r] += p[r];
      ++count;
    }
  }
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

std::vector<double> embed_lookup(const MlpModel& model, std::size_t cat_index, int code) {
  const MlpLayout& layout = model.layout();
  if (cat_index >= layout.cardinality.size()) {
    throw ValidationError("embed_lookup: categorical column out of range");
  }
  const auto dim = static_cast<std::size_t>(layout.embedding_dim);
  const auto& params = model.snapshots().back();
  const double* row = params.data() + layout.embedding_offset[cat_index] +
                      static_cast<std::size_t>(table_row(layout, cat_index, code)) * dim;
  return {row, row + dim};
}

namespace {

constexpr char kMlpMagic[4] = {'B', 'C', 'M', 'P'};
constexpr std::uint32_t kMlpVersion = 2;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ValidationError("truncated mlp model");
  return v;
}

template <typename T>
void put_vector(std::ostream& out, const std::vector<T>& v) {
  put(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> take_vector(std::istream& in) {
  std::vector<T> v(take<std::uint64_t>(in));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!in) throw ValidationError("truncated mlp model");
  return v;
}

}  // namespace

void MlpModel::save(std::ostream& out) const {
  out.write(kMlpMagic, 4);
  put(out, kMlpVersion);
  put(out, schema_hash_);
  put(out, config_.embedding_dim);
  put_vector(out, config_.hidden);
  put(out, config_.objective);
  put(out, config_.tweedie_variance_power);
  put(out, config_.epochs);
  put(out, config_.batch_size);
  put(out, config_.learning_rate);
  put(out, config_.momentum);
  put(out, config_.lr_step_epochs);
  put(out, config_.lr_decay);
  put(out, config_.grad_clip);
  put(out, config_.snapshots_to_keep);
  put(out, config_.rng_seed);
  put(out, config_.window_days);
  put_vector(out, layout_.cat_columns);
  put_vector(out, layout_.cardinality);
  put_vector(out, layout_.num_columns);
  put_vector(out, means_);
  put_vector(out, scales_);
  put_vector(out, lows_);
  put_vector(out, highs_);
  put(out, static_cast<std::uint64_t>(snapshots_.size()));
  for (const auto& s : snapshots_) put_vector(out, s);
}

MlpModel MlpModel::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMlpMagic, 4) != 0) throw ValidationError("not an mlp model file");
  if (take<std::uint32_t>(in) != kMlpVersion) throw ValidationError("unsupported mlp model version");
  MlpModel m;
  m.schema_hash_ = take<std::uint64_t>(in);
  MlpConfig& c = m.config_;
  c.embedding_dim = take<int>(in);
  c.hidden = take_vector<int>(in);
  c.objective = take<Objective>(in);
  c.tweedie_variance_power = take<double>(in);
  c.epochs = take<int>(in);
  c.batch_size = take<int>(in);
  c.learning_rate = take<double>(in);
  c.momentum = take<double>(in);
  c.lr_step_epochs = take<int>(in);
  c.lr_decay = take<double>(in);
  c.grad_clip = take<double>(in);
  c.snapshots_to_keep = take<int>(in);
  c.rng_seed = take<std::uint64_t>(in);
  c.window_days = take<int>(in);
  auto cats = take_vector<std::size_t>(in);
  auto card = take_vector<int>(in);
  auto nums = take_vector<std::size_t>(in);
  m.layout_ = MlpLayout(card, c.embedding_dim, nums.size(), c.hidden);
  m.layout_.cat_columns = std::move(cats);
  m.layout_.num_columns = std::move(nums);
  m.means_ = take_vector<double>(in);
  m.scales_ = take_vector<double>(in);
  m.lows_ = take_vector<double>(in);
  m.highs_ = take_vector<double>(in);
  for (const auto* v : {&m.means_, &m.scales_, &m.lows_, &m.highs_}) {
    if (v->size() != m.layout_.num_columns.size()) throw ValidationError("mlp model column count mismatch");
  }
  const auto n = take<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    m.snapshots_.push_back(take_vector<double>(in));
    if (m.snapshots_.back().size() != m.layout_.n_params) {
      throw ValidationError("mlp model snapshot size mismatch");
    }
  }
  return m;
}

void MlpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  save(out);
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return load(in);
}

}  // namespace blendcast
