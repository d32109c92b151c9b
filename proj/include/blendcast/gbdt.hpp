#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/features.hpp"

namespace blendcast {

enum class Objective : std::uint8_t { tweedie, squared_error };

std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);

struct GbdtParams {
  Objective objective = Objective::tweedie;
  double tweedie_variance_power = 1.1;
  double learning_rate = 0.05;
  int num_leaves = 31;
  int min_data_in_leaf = 20;
  double feature_fraction = 0.8;
  double subsample = 0.8;
  int subsample_freq = 1;
  int max_bin = 100;
  int n_estimators = 100;
  std::uint64_t rng_seed = 0;
  bool boost_from_average = true;  // false starts every score at 0

  void validate() const;

  // Desk-scale defaults used by tests and the bundled configs.
  static GbdtParams desk();
  // The two LightGBM parameter tables of the reference solution.
  static GbdtParams full_single_model();
  static GbdtParams full_per_store();
};

// Per-store estimator counts of the reference per-store model group.
const std::map<std::string, int>& full_store_estimators();

// L2 regularization on leaf values, fixed.
inline constexpr double kLeafL2 = 1.0;

// -y * yhat^(1-p) / (1-p) + yhat^(2-p) / (2-p). Throws DomainError for yhat <= 0.
double tweedie_loss(double y, double yhat, double p = 1.5);

// Unit deviance 2 * [y^(2-p)/((1-p)(2-p)) - y mu^(1-p)/(1-p) + mu^(2-p)/(2-p)].
double tweedie_deviance(double y, double mu, double p);

struct GradHess {
  double grad = 0.0;
  double hess = 0.0;
};

// Derivatives of tweedie_loss(y, exp(score)) with respect to the score.
GradHess tweedie_grad_hess(double y, double score, double p);

// Quantile bin edges for one feature. Values map to the first bin whose upper
// bound is >= value; NaN maps to the reserved bin n_bins().
struct BinMapper {
  std::vector<double> upper_bounds;  // strictly increasing, last is +inf

  int n_bins() const { return static_cast<int>(upper_bounds.size()); }
  int missing_bin() const { return n_bins(); }
  std::uint16_t bin(double value) const;
};

BinMapper make_bin_mapper(std::span<const double> values, int max_bin);

struct BinnedDataset {
  std::size_t n_rows = 0;
  std::vector<BinMapper> mappers;
  std::vector<std::vector<std::uint16_t>> bins;  // [feature][row]
};

BinnedDataset build_histograms(const FeatureMatrix& matrix, int max_bin);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  std::uint16_t threshold_bin = 0;
  double threshold = 0.0;  // go left when value <= threshold
  bool default_left = false;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (score increment)
  std::uint32_t count = 0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  std::size_t leaf_count() const;
};

class GbdtModel {
 public:
  GbdtModel() = default;
  GbdtModel(GbdtParams params, std::uint64_t schema_hash, double base_score)
      : params_(params), schema_hash_(schema_hash), base_score_(base_score) {}

  const GbdtParams& params() const { return params_; }
  std::uint64_t schema_hash() const { return schema_hash_; }
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }
  void add_tree(Tree tree) { trees_.push_back(std::move(tree)); }

  // Raw score of the first `n_trees` trees (all by default).
  double raw_score(std::span<const double> row, std::size_t n_trees = SIZE_MAX) const;
  // exp(score) for tweedie, the score itself for squared error.
  double transform(double score) const;

  std::vector<double> predict(const FeatureMatrix& matrix, std::size_t n_trees = SIZE_MAX) const;

  void save(std::ostream& out) const;
  static GbdtModel load(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static GbdtModel load(const std::filesystem::path& path);

 private:
  GbdtParams params_;
  std::uint64_t schema_hash_ = 0;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
};

GbdtModel fit(const FeatureMatrix& matrix, const GbdtParams& params);

// One model per store, each trained only on that store's rows. Stores missing
// from `n_estimators` use params.n_estimators.
class StoreGbdtModel {
 public:
  const std::map<std::string, GbdtModel>& models() const { return models_; }
  std::uint64_t schema_hash() const { return schema_hash_; }

  static StoreGbdtModel from_models(std::map<std::string, GbdtModel> models, std::uint64_t schema_hash) {
    StoreGbdtModel m;
    m.models_ = std::move(models);
    m.schema_hash_ = schema_hash;
    return m;
  }

  std::vector<double> predict(const FeatureMatrix& matrix, const PanelDataset& panel) const;

  void save(const std::filesystem::path& path) const;
  static StoreGbdtModel load(const std::filesystem::path& path);

  friend StoreGbdtModel fit_per_store(const FeatureMatrix&, const PanelDataset&, const GbdtParams&,
                                      const std::vector<std::string>&,
                                      const std::map<std::string, int>&);

 private:
  std::map<std::string, GbdtModel> models_;
  std::uint64_t schema_hash_ = 0;
};

// `stores` empty means every store present in the matrix.
StoreGbdtModel fit_per_store(const FeatureMatrix& matrix, const PanelDataset& panel,
                             const GbdtParams& params, const std::vector<std::string>& stores,
                             const std::map<std::string, int>& n_estimators);

}  // namespace blendcast
