#include "blendcast/gbdt.hpp"

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

namespace {

constexpr double kScoreClamp = 50.0;

double clamp_score(double f) { return std::clamp(f, -kScoreClamp, kScoreClamp); }

}  // namespace

std::string_view to_string(Objective objective) {
  return objective == Objective::tweedie ? "tweedie" : "squared_error";
}

Objective parse_objective(std::string_view text) {
  if (text == "tweedie") return Objective::tweedie;
  if (text == "squared_error" || text == "mse" || text == "regression") {
    return Objective::squared_error;
  }
  throw ValidationError(fmt::format("unknown objective '{}'", text));
}

void GbdtParams::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("gbdt params: " + what); };
  if (objective == Objective::tweedie &&
      !(tweedie_variance_power > 1.0 && tweedie_variance_power < 2.0)) {
    fail("tweedie_variance_power must lie in (1, 2)");
  }
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (num_leaves < 2) fail("num_leaves must be >= 2");
  if (min_data_in_leaf < 1) fail("min_data_in_leaf must be >= 1");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) fail("feature_fraction must be in (0,1]");
  if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must be in (0,1]");
  if (subsample_freq < 0) fail("subsample_freq must be >= 0");
  if (max_bin < 2 || max_bin > 65000) fail("max_bin must be in [2, 65000]");
  if (n_estimators < 0) fail("n_estimators must be >= 0");
}

GbdtParams GbdtParams::desk() { return GbdtParams{}; }

GbdtParams GbdtParams::full_single_model() {
  GbdtParams p;
  p.objective = Objective::tweedie;
  p.tweedie_variance_power = 1.1;
  p.subsample = 0.5;
  p.subsample_freq = 1;
  p.learning_rate = 0.03;
  p.num_leaves = 2047;
  p.min_data_in_leaf = 4095;
  p.feature_fraction = 0.5;
  p.max_bin = 100;
  p.n_estimators = 1300;
  p.boost_from_average = false;
  return p;
}

GbdtParams GbdtParams::full_per_store() {
  GbdtParams p;
  p.objective = Objective::tweedie;
  p.tweedie_variance_power = 1.1;
  p.subsample = 0.6;
  p.subsample_freq = 1;
  p.learning_rate = 0.02;
  p.num_leaves = (1 << 11) - 1;
  p.min_data_in_leaf = (1 << 12) - 1;
  p.feature_fraction = 0.6;
  p.max_bin = 100;
  p.n_estimators = 1000;
  p.boost_from_average = false;
  return p;
}

const std::map<std::string, int>& full_store_estimators() {
  static const std::map<std::string, int> table = {
      {"CA_1", 700},  {"CA_2", 1100}, {"CA_3", 1600}, {"CA_4", 1500}, {"TX_1", 1000},
      {"TX_2", 1000}, {"TX_3", 1000}, {"WI_1", 1600}, {"WI_2", 1500}, {"WI_3", 1100},
  };
  return table;
}

double tweedie_loss(double y, double yhat, double p) {
  if (!(yhat > 0.0)) throw DomainError(fmt::format("tweedie_loss: prediction {} must be > 0", yhat));
  return -y * std::pow(yhat, 1.0 - p) / (1.0 - p) + std::pow(yhat, 2.0 - p) / (2.0 - p);
}

double tweedie_deviance(double y, double mu, double p) {
  if (!(mu > 0.0)) throw DomainError(fmt::format("tweedie_deviance: mean {} must be > 0", mu));
  const double a = y > 0.0 ? std::pow(y, 2.0 - p) / ((1.0 - p) * (2.0 - p)) : 0.0;
  const double b = y * std::pow(mu, 1.0 - p) / (1.0 - p);
  const double c = std::pow(mu, 2.0 - p) / (2.0 - p);
  return 2.0 * (a - b + c);
}

GradHess tweedie_grad_hess(double y, double score, double p) {
  const double f = clamp_score(score);
  const double e1 = std::exp((1.0 - p) * f);
  const double e2 = std::exp((2.0 - p) * f);
  return {-y * e1 + e2, -(1.0 - p) * y * e1 + (2.0 - p) * e2};
}

std::uint16_t BinMapper::bin(double value) const {
  if (std::isnan(value)) return static_cast<std::uint16_t>(missing_bin());
  auto it = std::lower_bound(upper_bounds.begin(), upper_bounds.end(), value);
  return static_cast<std::uint16_t>(it - upper_bounds.begin());
}

BinMapper make_bin_mapper(std::span<const double> values, int max_bin) {
  std::vector<double> sorted;
  sorted.reserve(values.size());
  for (double v : values) {
    if (!std::isnan(v)) sorted.push_back(v);
  }
  BinMapper mapper;
  if (sorted.empty()) return mapper;
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> distinct;
  std::vector<std::size_t> counts;
  for (double v : sorted) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      counts.push_back(0);
    }
    ++counts.back();
  }

  const std::size_t k = distinct.size();
  if (k <= static_cast<std::size_t>(max_bin)) {
    for (std::size_t i = 0; i + 1 < k; ++i) {
      mapper.upper_bounds.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
    }
  } else {
    // Close a bin once the running count reaches the next equal-population target.
    const double n = static_cast<double>(sorted.size());
    std::size_t cumulative = 0;
    int made = 0;
    for (std::size_t i = 0; i + 1 < k && made + 1 < max_bin; ++i) {
      cumulative += counts[i];
      const double target = n * static_cast<double>(made + 1) / static_cast<double>(max_bin);
      if (static_cast<double>(cumulative) >= target) {
        mapper.upper_bounds.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
        ++made;
      }
    }
  }
  mapper.upper_bounds.push_back(std::numeric_limits<double>::infinity());
  return mapper;
}

BinnedDataset build_histograms(const FeatureMatrix& matrix, int max_bin) {
  if (max_bin < 2) throw ValidationError("max_bin must be >= 2");
  BinnedDataset data;
  data.n_rows = matrix.n_rows();
  const std::size_t cols = matrix.n_cols();
  data.mappers.resize(cols);
  data.bins.resize(cols);
  parallel_for(cols, [&](std::size_t c) {
    std::vector<double> column(matrix.n_rows());
    for (std::size_t r = 0; r < matrix.n_rows(); ++r) column[r] = matrix.at(r, c);
    data.mappers[c] = make_bin_mapper(column, max_bin);
    auto& bins = data.bins[c];
    bins.resize(matrix.n_rows());
    for (std::size_t r = 0; r < matrix.n_rows(); ++r) bins[r] = data.mappers[c].bin(column[r]);
  });
  return data;
}

double Tree::predict(std::span<const double> row) const {
  int node = 0;
  while (!nodes[node].is_leaf()) {
    const TreeNode& n = nodes[node];
    const double v = row[static_cast<std::size_t>(n.feature)];
    const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
    node = left ? n.left : n.right;
  }
  return nodes[node].value;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double GbdtModel::raw_score(std::span<const double> row, std::size_t n_trees) const {
  double score = base_score_;
  const std::size_t n = std::min(n_trees, trees_.size());
  for (std::size_t t = 0; t < n; ++t) score += trees_[t].predict(row);
  return score;
}

double GbdtModel::transform(double score) const {
  return params_.objective == Objective::tweedie ? std::exp(clamp_score(score)) : score;
}

std::vector<double> GbdtModel::predict(const FeatureMatrix& matrix, std::size_t n_trees) const {
  if (matrix.schema_hash != schema_hash_) {
    throw ValidationError("gbdt predict: feature schema does not match the trained model");
  }
  std::vector<double> out(matrix.n_rows());
  parallel_for(matrix.n_rows(), [&](std::size_t r) {
    out[r] = transform(raw_score(matrix.row(r), n_trees));
  });
  return out;
}

namespace {

struct HistBin {
  double grad = 0.0;
  double hess = 0.0;
  std::uint32_t count = 0;
};

using Histogram = std::vector<std::vector<HistBin>>;  // [feature slot][bin]

struct SplitInfo {
  double gain = 0.0;
  int feature = -1;
  int bin = 0;
  bool default_left = false;
  bool valid() const { return feature >= 0; }
};

struct LeafState {
  int node = 0;
  std::vector<std::uint32_t> rows;
  double grad = 0.0;
  double hess = 0.0;
  Histogram hist;
  SplitInfo best;
};

double leaf_objective(double g, double h) { return g * g / (h + kLeafL2); }

class TreeGrower {
 public:
  TreeGrower(const BinnedDataset& data, const GbdtParams& params, std::span<const double> grad,
             std::span<const double> hess, std::vector<int> features)
      : data_(data), params_(params), grad_(grad), hess_(hess), features_(std::move(features)) {}

  Tree grow(std::vector<std::uint32_t> rows) {
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<LeafState> leaves;
    leaves.push_back(make_leaf(0, std::move(rows)));
    leaves.back().hist = build(leaves.back().rows);
    leaves.back().best = find_split(leaves.back());

    while (static_cast<int>(leaves.size()) < params_.num_leaves) {
      int pick = -1;
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!leaves[i].best.valid()) continue;
        if (pick < 0 || leaves[i].best.gain > leaves[pick].best.gain) pick = static_cast<int>(i);
      }
      if (pick < 0) break;
      split(tree, leaves, static_cast<std::size_t>(pick));
    }

    for (const auto& leaf : leaves) {
      TreeNode& node = tree.nodes[leaf.node];
      node.value = -leaf.grad / (leaf.hess + kLeafL2) * params_.learning_rate;
      node.count = static_cast<std::uint32_t>(leaf.rows.size());
    }
    return tree;
  }

 private:
  LeafState make_leaf(int node, std::vector<std::uint32_t> rows) const {
    LeafState leaf;
    leaf.node = node;
    leaf.rows = std::move(rows);
    for (std::uint32_t r : leaf.rows) {
      leaf.grad += grad_[r];
      leaf.hess += hess_[r];
    }
    return leaf;
  }

  Histogram build(const std::vector<std::uint32_t>& rows) const {
    Histogram hist(features_.size());
    parallel_for(features_.size(), [&](std::size_t slot) {
      const int f = features_[slot];
      auto& h = hist[slot];
      h.assign(static_cast<std::size_t>(data_.mappers[f].n_bins() + 1), HistBin{});
      const auto& bins = data_.bins[f];
      for (std::uint32_t r : rows) {
        HistBin& b = h[bins[r]];
        b.grad += grad_[r];
        b.hess += hess_[r];
        ++b.count;
      }
    });
    return hist;
  }

  SplitInfo find_split(const LeafState& leaf) const {
    SplitInfo best;
    const auto min_leaf = static_cast<std::uint32_t>(params_.min_data_in_leaf);
    const auto total_count = static_cast<std::uint32_t>(leaf.rows.size());
    if (total_count < 2 * min_leaf) return best;
    const double parent = leaf_objective(leaf.grad, leaf.hess);
    for (std::size_t slot = 0; slot < features_.size(); ++slot) {
      const auto& h = leaf.hist[slot];
      const int n_bins = static_cast<int>(h.size()) - 1;
      const HistBin& miss = h.back();
      double gl = 0.0;
      double hl = 0.0;
      std::uint32_t cl = 0;
      for (int b = 0; b + 1 < n_bins; ++b) {
        gl += h[b].grad;
        hl += h[b].hess;
        cl += h[b].count;
        for (bool default_left : {false, true}) {
          if (default_left && miss.count == 0) continue;
          const double g_left = default_left ? gl + miss.grad : gl;
          const double h_left = default_left ? hl + miss.hess : hl;
          const std::uint32_t c_left = default_left ? cl + miss.count : cl;
          const std::uint32_t c_right = total_count - c_left;
          if (c_left < min_leaf || c_right < min_leaf) continue;
          const double gain = leaf_objective(g_left, h_left) +
                              leaf_objective(leaf.grad - g_left, leaf.hess - h_left) - parent;
          if (gain > best.gain) {
            best = {gain, features_[slot], b, default_left};
          }
        }
      }
    }
    return best;
  }

  void split(Tree& tree, std::vector<LeafState>& leaves, std::size_t index) {
    LeafState parent = std::move(leaves[index]);
    const SplitInfo s = parent.best;
    const int left_node = static_cast<int>(tree.nodes.size());
    const int right_node = left_node + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[parent.node];
    node.feature = s.feature;
    node.threshold_bin = static_cast<std::uint16_t>(s.bin);
    node.threshold = data_.mappers[s.feature].upper_bounds[s.bin];
    node.default_left = s.default_left;
    node.left = left_node;
    node.right = right_node;
    node.count = static_cast<std::uint32_t>(parent.rows.size());

    const auto& bins = data_.bins[s.feature];
    const int missing = data_.mappers[s.feature].missing_bin();
    std::vector<std::uint32_t> left_rows;
    std::vector<std::uint32_t> right_rows;
    for (std::uint32_t r : parent.rows) {
      const int b = bins[r];
      const bool left = b == missing ? s.default_left : b <= s.bin;
      (left ? left_rows : right_rows).push_back(r);
    }

    LeafState left = make_leaf(left_node, std::move(left_rows));
    LeafState right = make_leaf(right_node, std::move(right_rows));
    // Build the smaller child directly, derive the larger by subtraction.
    LeafState& small = left.rows.size() <= right.rows.size() ? left : right;
    LeafState& large = left.rows.size() <= right.rows.size() ? right : left;
    small.hist = build(small.rows);
    large.hist = std::move(parent.hist);
    for (std::size_t slot = 0; slot < large.hist.size(); ++slot) {
      for (std::size_t b = 0; b < large.hist[slot].size(); ++b) {
        large.hist[slot][b].grad -= small.hist[slot][b].grad;
        large.hist[slot][b].hess -= small.hist[slot][b].hess;
        large.hist[slot][b].count -= small.hist[slot][b].count;
      }
    }
    left.best = find_split(left);
    right.best = find_split(right);
    leaves[index] = std::move(left);
    leaves.push_back(std::move(right));
  }

  const BinnedDataset& data_;
  const GbdtParams& params_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::vector<int> features_;
};

// Uniform index in [0, bound) from a standardized engine.
std::uint64_t draw(std::mt19937_64& rng, std::uint64_t bound) { return rng() % bound; }

std::vector<std::uint32_t> sample_rows(std::mt19937_64& rng, std::size_t n, double fraction) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
  for (std::size_t i = 0; i < keep && i + 1 < n; ++i) {
    const std::size_t j = i + draw(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> sample_features(std::mt19937_64& rng, std::size_t n, double fraction) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (fraction >= 1.0) return idx;
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
  for (std::size_t i = 0; i < keep && i + 1 < n; ++i) {
    const std::size_t j = i + draw(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GbdtModel fit(const FeatureMatrix& matrix, const GbdtParams& params) {
  params.validate();
  const std::size_t n = matrix.n_rows();
  if (n == 0) throw ValidationError("gbdt fit: empty feature matrix");
  for (double v : matrix.values) {
    if (std::isinf(v)) throw ValidationError("gbdt fit: non-finite feature value");
  }
  double sum = 0.0;
  for (double y : matrix.target) {
    if (!std::isfinite(y)) throw ValidationError("gbdt fit: non-finite target");
    if (params.objective == Objective::tweedie && y < 0.0) {
      throw ValidationError("gbdt fit: tweedie objective needs non-negative targets");
    }
    sum += y;
  }
  const double mean = sum / static_cast<double>(n);
  double base = 0.0;
  if (params.boost_from_average) {
    base = params.objective == Objective::tweedie ? std::log(std::max(mean, 1e-12)) : mean;
  }
  GbdtModel model(params, matrix.schema_hash, base);

  const BinnedDataset data = build_histograms(matrix, params.max_bin);
  std::vector<double> score(n, base);
  std::vector<double> grad(n);
  std::vector<double> hess(n);
  std::mt19937_64 rng(params.rng_seed);
  const bool bagging = params.subsample < 1.0 && params.subsample_freq > 0;
  std::vector<std::uint32_t> bag(n);
  std::iota(bag.begin(), bag.end(), 0u);

  for (int it = 0; it < params.n_estimators; ++it) {
    if (bagging && it % params.subsample_freq == 0) bag = sample_rows(rng, n, params.subsample);
    const std::vector<int> features = sample_features(rng, matrix.n_cols(), params.feature_fraction);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = matrix.target[r];
      if (params.objective == Objective::tweedie) {
        const GradHess gh = tweedie_grad_hess(y, score[r], params.tweedie_variance_power);
        grad[r] = gh.grad;
        hess[r] = gh.hess;
      } else {
        grad[r] = score[r] - y;
        hess[r] = 1.0;
      }
    }
    TreeGrower grower(data, params, grad, hess, features);
    Tree tree = grower.grow(bag);

    // Score update through the binned representation; matches raw traversal.
    for (std::size_t r = 0; r < n; ++r) {
      int node = 0;
      while (!tree.nodes[node].is_leaf()) {
        const TreeNode& nd = tree.nodes[node];
        const int b = data.bins[nd.feature][r];
        const bool left =
            b == data.mappers[nd.feature].missing_bin() ? nd.default_left : b <= nd.threshold_bin;
        node = left ? nd.left : nd.right;
      }
      score[r] += tree.nodes[node].value;
    }
    model.add_tree(std::move(tree));
  }
  return model;
}

namespace {

constexpr char kModelMagic[4] = {'B', 'C', 'G', 'B'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ValidationError("truncated gbdt model");
  return v;
}

void write_params(std::ostream& out, const GbdtParams& p) {
  write_pod(out, p.objective);
  write_pod(out, p.tweedie_variance_power);
  write_pod(out, p.learning_rate);
  write_pod(out, p.num_leaves);
  write_pod(out, p.min_data_in_leaf);
  write_pod(out, p.feature_fraction);
  write_pod(out, p.subsample);
  write_pod(out, p.subsample_freq);
  write_pod(out, p.max_bin);
  write_pod(out, p.n_estimators);
  write_pod(out, p.rng_seed);
  write_pod(out, static_cast<std::uint8_t>(p.boost_from_average));
}

GbdtParams read_params(std::istream& in) {
  GbdtParams p;
  p.objective = read_pod<Objective>(in);
  p.tweedie_variance_power = read_pod<double>(in);
  p.learning_rate = read_pod<double>(in);
  p.num_leaves = read_pod<int>(in);
  p.min_data_in_leaf = read_pod<int>(in);
  p.feature_fraction = read_pod<double>(in);
  p.subsample = read_pod<double>(in);
  p.subsample_freq = read_pod<int>(in);
  p.max_bin = read_pod<int>(in);
  p.n_estimators = read_pod<int>(in);
  p.rng_seed = read_pod<std::uint64_t>(in);
  p.boost_from_average = read_pod<std::uint8_t>(in) != 0;
  return p;
}

}  // namespace

void GbdtModel::save(std::ostream& out) const {
  out.write(kModelMagic, 4);
  write_pod(out, kModelVersion);
  write_pod(out, schema_hash_);
  write_params(out, params_);
  write_pod(out, base_score_);
  write_pod(out, static_cast<std::uint64_t>(trees_.size()));
  for (const auto& tree : trees_) {
    write_pod(out, static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
      write_pod(out, n.feature);
      write_pod(out, n.threshold_bin);
      write_pod(out, n.threshold);
      write_pod(out, static_cast<std::uint8_t>(n.default_left));
      write_pod(out, n.left);
      write_pod(out, n.right);
      write_pod(out, n.value);
      write_pod(out, n.count);
    }
  }
}

GbdtModel GbdtModel::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0) throw ValidationError("not a gbdt model file");
  if (read_pod<std::uint32_t>(in) != kModelVersion) throw ValidationError("unsupported gbdt model version");
  GbdtModel model;
  model.schema_hash_ = read_pod<std::uint64_t>(in);
  model.params_ = read_params(in);
  model.base_score_ = read_pod<double>(in);
  const auto n_trees = read_pod<std::uint64_t>(in);
  model.trees_.resize(n_trees);
  for (auto& tree : model.trees_) {
    tree.nodes.resize(read_pod<std::uint32_t>(in));
    for (auto& n : tree.nodes) {
      n.feature = read_pod<int>(in);
      n.threshold_bin = read_pod<std::uint16_t>(in);
      n.threshold = read_pod<double>(in);
      n.default_left = read_pod<std::uint8_t>(in) != 0;
      n.left = read_pod<int>(in);
      n.right = read_pod<int>(in);
      n.value = read_pod<double>(in);
      n.count = read_pod<std::uint32_t>(in);
    }
  }
  return model;
}

void GbdtModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  save(out);
}

GbdtModel GbdtModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return load(in);
}

std::vector<double> StoreGbdtModel::predict(const FeatureMatrix& matrix,
                                            const PanelDataset& panel) const {
  if (matrix.schema_hash != schema_hash_) {
    throw ValidationError("gbdt predict: feature schema does not match the trained model");
  }
  std::vector<double> out(matrix.n_rows());
  parallel_for(matrix.n_rows(), [&](std::size_t r) {
    const std::string& store = panel.series(matrix.keys[r].series).store_id;
    auto it = models_.find(store);
    if (it == models_.end()) {
      throw ValidationError(fmt::format("no per-store model for store '{}'", store));
    }
    out[r] = it->second.transform(it->second.raw_score(matrix.row(r)));
  });
  return out;
}

void StoreGbdtModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_pod(out, schema_hash_);
  write_pod(out, static_cast<std::uint32_t>(models_.size()));
  for (const auto& [store, model] : models_) {
    write_pod(out, static_cast<std::uint32_t>(store.size()));
    out.write(store.data(), static_cast<std::streamsize>(store.size()));
    model.save(out);
  }
}

StoreGbdtModel StoreGbdtModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  StoreGbdtModel grouped;
  grouped.schema_hash_ = read_pod<std::uint64_t>(in);
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string store(read_pod<std::uint32_t>(in), '\0');
    in.read(store.data(), static_cast<std::streamsize>(store.size()));
    grouped.models_.emplace(store, GbdtModel::load(in));
  }
  return grouped;
}

StoreGbdtModel fit_per_store(const FeatureMatrix& matrix, const PanelDataset& panel,
                             const GbdtParams& params, const std::vector<std::string>& stores,
                             const std::map<std::string, int>& n_estimators) {
  std::map<std::string, std::vector<std::size_t>> rows_by_store;
  for (const auto& s : stores) rows_by_store[s];
  for (std::size_t r = 0; r < matrix.n_rows(); ++r) {
    const std::string& store = panel.series(matrix.keys[r].series).store_id;
    if (!stores.empty() && !rows_by_store.count(store)) {
      throw ValidationError(fmt::format("row of store '{}' not covered by the store list", store));
    }
    rows_by_store[store].push_back(r);
  }
  StoreGbdtModel grouped;
  grouped.schema_hash_ = matrix.schema_hash;
  for (const auto& [store, rows] : rows_by_store) {
    if (rows.empty()) throw ValidationError(fmt::format("store '{}' has no training rows", store));
    GbdtParams p = params;
    if (auto it = n_estimators.find(store); it != n_estimators.end()) p.n_estimators = it->second;
    grouped.models_.emplace(store, fit(matrix.select(rows), p));
  }
  return grouped;
}

}  // namespace blendcast
