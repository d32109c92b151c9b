#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "blendcast/features.hpp"
#include "blendcast/gbdt.hpp"

namespace blendcast {

struct MlpConfig {
  int embedding_dim = 4;  // same width for every categorical column
  std::vector<int> hidden = {64, 32};
  Objective objective = Objective::squared_error;
  double tweedie_variance_power = 1.1;
  int epochs = 10;
  int batch_size = 256;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int lr_step_epochs = 4;  // multiply the rate by lr_decay every this many epochs
  double lr_decay = 0.5;
  double grad_clip = 5.0;  // max L2 norm of a batch gradient; 0 disables
  int snapshots_to_keep = 5;
  std::uint64_t rng_seed = 0;
  int window_days = 0;  // train on the last N days of the matrix; 0 = all

  void validate() const;

  // Three squared-error presets on the 17x28-day window, differing in widths.
  static MlpConfig keras_preset(int index);
  // Tweedie objective on the full training range.
  static MlpConfig fastai_preset();
};

// Column roles and parameter offsets derived from a feature schema.
struct MlpLayout {
  std::vector<std::size_t> cat_columns;
  std::vector<int> cardinality;  // table has cardinality + 1 rows, row 0 = unseen
  int embedding_dim = 0;
  std::vector<std::size_t> num_columns;
  std::vector<int> widths;  // input width, hidden widths..., 1

  std::vector<std::size_t> embedding_offset;  // per categorical column
  std::vector<std::size_t> weight_offset;     // per dense layer
  std::vector<std::size_t> bias_offset;
  std::size_t n_params = 0;

  MlpLayout() = default;
  MlpLayout(std::vector<int> cardinality, int embedding_dim, std::size_t n_numeric,
            const std::vector<int>& hidden);
  static MlpLayout from_specs(const std::vector<FeatureSpec>& specs, int embedding_dim,
                              const std::vector<int>& hidden);

  std::size_t input_width() const { return static_cast<std::size_t>(widths.front()); }
};

// One encoded example: category codes plus standardized numeric inputs.
struct MlpExample {
  std::vector<int> codes;
  std::vector<double> numeric;
  double target = 0.0;
};

struct MlpLoss {
  Objective objective = Objective::squared_error;
  double p = 1.1;
};

// Raw network output (log-mean for tweedie).
double mlp_output(const MlpLayout& layout, std::span<const double> params, const MlpExample& x);

// Mean loss over `batch`; adds the gradient of that mean into `grad` when non-empty.
double mlp_loss_gradient(const MlpLayout& layout, std::span<const double> params,
                         std::span<const MlpExample> batch, MlpLoss loss, std::span<double> grad);

class MlpModel {
 public:
  MlpModel() = default;

  const MlpConfig& config() const { return config_; }
  const MlpLayout& layout() const { return layout_; }
  std::uint64_t schema_hash() const { return schema_hash_; }
  const std::vector<std::vector<double>>& snapshots() const { return snapshots_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& scales() const { return scales_; }
  // Training range per numeric column; inputs are clamped to it before standardizing.
  const std::vector<double>& lows() const { return lows_; }
  const std::vector<double>& highs() const { return highs_; }

  MlpExample encode(const FeatureMatrix& matrix, std::size_t row) const;
  // Predictions from one snapshot (the last by default).
  std::vector<double> predict(const FeatureMatrix& matrix, int snapshot = -1) const;

  void save(std::ostream& out) const;
  static MlpModel load(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);

  friend MlpModel fit(const FeatureMatrix& matrix, const MlpConfig& config);

 private:
  double transform(double out) const;

  MlpConfig config_;
  MlpLayout layout_;
  std::uint64_t schema_hash_ = 0;
  std::vector<double> means_;   // per numeric column
  std::vector<double> scales_;  // per numeric column
  std::vector<double> lows_;
  std::vector<double> highs_;
  std::vector<std::vector<double>> snapshots_;
};

// Throws DivergenceError when a batch loss turns non-finite.
MlpModel fit(const FeatureMatrix& matrix, const MlpConfig& config);

// Fits each config concurrently.
std::vector<MlpModel> fit_group(const FeatureMatrix& matrix, const std::vector<MlpConfig>& configs);

// Mean over every snapshot of every model.
std::vector<double> predict_averaged(std::span<const MlpModel> models, const FeatureMatrix& matrix);

// Embedding row of categorical column `cat_index` for `code`, last snapshot.
// Codes outside the table fall back to row 0.
std::vector<double> embed_lookup(const MlpModel& model, std::size_t cat_index, int code);

}  // namespace blendcast
