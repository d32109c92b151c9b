#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "blendcast/blend.hpp"
#include "blendcast/features.hpp"
#include "blendcast/gbdt.hpp"
#include "blendcast/grid.hpp"
#include "blendcast/metrics.hpp"
#include "blendcast/mlp.hpp"

namespace blendcast {

struct ValidationSplit {
  std::string name;
  DayRange train;
  DayRange validation;
};

// Validation windows end 0, 28 and 336 days before the last observed day.
// Split 1 trains up to its window start by default; `printed_ranges` trains
// it through n_days - 1 instead. Splits without room for training are dropped
// with a warning.
std::vector<ValidationSplit> make_splits(int n_days, bool printed_ranges = false);

// Anything that maps feature rows to point forecasts.
class PointModel {
 public:
  virtual ~PointModel() = default;
  virtual std::uint64_t schema_hash() const = 0;
  virtual std::vector<double> predict(const FeatureMatrix& matrix) const = 0;
  virtual void save(std::ostream& out) const = 0;
};

class GbdtPointModel final : public PointModel {
 public:
  explicit GbdtPointModel(GbdtModel model) : model_(std::move(model)) {}
  std::uint64_t schema_hash() const override { return model_.schema_hash(); }
  std::vector<double> predict(const FeatureMatrix& matrix) const override { return model_.predict(matrix); }
  void save(std::ostream& out) const override { model_.save(out); }
  const GbdtModel& model() const { return model_; }

 private:
  GbdtModel model_;
};

class StoreGbdtPointModel final : public PointModel {
 public:
  StoreGbdtPointModel(StoreGbdtModel model, const PanelDataset& panel)
      : model_(std::move(model)), panel_(&panel) {}
  std::uint64_t schema_hash() const override { return model_.schema_hash(); }
  std::vector<double> predict(const FeatureMatrix& matrix) const override {
    return model_.predict(matrix, *panel_);
  }
  void save(std::ostream& out) const override;
  const StoreGbdtModel& model() const { return model_; }

 private:
  StoreGbdtModel model_;
  const PanelDataset* panel_;
};

class MlpGroupPointModel final : public PointModel {
 public:
  explicit MlpGroupPointModel(std::vector<MlpModel> models) : models_(std::move(models)) {}
  std::uint64_t schema_hash() const override { return models_.front().schema_hash(); }
  std::vector<double> predict(const FeatureMatrix& matrix) const override {
    return predict_averaged(models_, matrix);
  }
  void save(std::ostream& out) const override;
  const std::vector<MlpModel>& models() const { return models_; }

 private:
  std::vector<MlpModel> models_;
};

// Wraps a plain function; used for diagnostics and tests.
class FunctionPointModel final : public PointModel {
 public:
  using Fn = std::function<std::vector<double>(const FeatureMatrix&)>;
  FunctionPointModel(std::uint64_t schema_hash, Fn fn) : schema_(schema_hash), fn_(std::move(fn)) {}
  std::uint64_t schema_hash() const override { return schema_; }
  std::vector<double> predict(const FeatureMatrix& matrix) const override { return fn_(matrix); }
  void save(std::ostream&) const override {}

 private:
  std::uint64_t schema_;
  Fn fn_;
};

// Returns observed sales (0 beyond history); scores 0 on validation windows.
std::unique_ptr<PointModel> make_oracle_model(const PanelDataset& panel, std::uint64_t schema_hash);

struct RecursiveStats {
  std::size_t buffer_reads = 0;
};

// Level-12 forecast for days [start_day, start_day + horizon). Each day's
// sales-derived features read earlier forecast days from the buffer;
// predictions are clipped at 0 and inactive series stay 0.
ForecastGrid recursive_forecast(const PointModel& model, const FeatureBuilder& builder, int start_day,
                                int horizon = kHorizon, RecursiveStats* stats = nullptr);

// All horizon days predicted at once from history before start_day only.
ForecastGrid direct_forecast(const PointModel& model, const FeatureBuilder& builder, int start_day,
                             int horizon = kHorizon);

enum class GroupKind : std::uint8_t { gbdt, gbdt_per_store, mlp, oracle };

std::string_view to_string(GroupKind kind);
GroupKind parse_group_kind(std::string_view text);

struct ModelGroupConfig {
  std::string name;
  GroupKind kind = GroupKind::gbdt;
  GbdtParams gbdt;
  std::map<std::string, int> store_estimators;  // per-store tree counts
  std::vector<MlpConfig> mlp;
};

// Desk-scale lgb_nas, lgb_cos, keras_nas and fastai_cos groups.
std::vector<ModelGroupConfig> reference_groups();

struct SmoothingConfig {
  double alpha = 0.96;
  SmoothingMode mode = SmoothingMode::horizon;
  int history_days = kHorizon;  // with_history mode only
  bool apply_to_point = true;
};

struct ForecastConfig {
  FeatureConfig features;
  std::vector<ModelGroupConfig> groups = reference_groups();
  BlendSpec blend = BlendSpec::reference();
  SmoothingConfig smoothing;
  bool printed_split_ranges = false;
  int training_window_days = 0;  // 0 = every day up to the train end
  MetricOptions metric;
};

struct FittedGroup {
  std::string name;
  GroupKind kind = GroupKind::gbdt;
  std::shared_ptr<const PointModel> model;
};

struct TrainedPipeline {
  std::unique_ptr<FeatureBuilder> builder;
  DayRange train;
  std::vector<FittedGroup> groups;
};

// Supplies the training matrix for a builder and day range (e.g. from a cache).
using MatrixProvider = std::function<FeatureMatrix(const FeatureBuilder&, DayRange)>;

TrainedPipeline train_groups(const ForecastConfig& config, const PanelDataset& panel, DayRange train,
                             const MatrixProvider& provider = {});

// Retrains every group on all observed days.
TrainedPipeline full_train(const ForecastConfig& config, const PanelDataset& panel,
                           const MatrixProvider& provider = {});

std::map<std::string, ForecastGrid> forecast_groups(const TrainedPipeline& pipeline, int start_day,
                                                    int horizon = kHorizon);

// Geometric blend followed by smoothing when the config applies it.
ForecastGrid ensemble_forecast(const ForecastConfig& config, const PanelDataset& panel,
                               const std::map<std::string, ForecastGrid>& grids);

// Smoothing as configured, regardless of apply_to_point.
ForecastGrid smooth(const SmoothingConfig& config, const PanelDataset& panel, const ForecastGrid& grid);

struct SplitRun {
  ValidationSplit split;
  std::map<std::string, ForecastGrid> groups;
  ForecastGrid ensemble;
  std::map<std::string, ScoreReport> scores;  // per group plus "ensemble"
};

struct BacktestReport {
  std::vector<std::string> splits;
  std::vector<std::string> columns;         // groups then "ensemble"
  std::vector<std::vector<double>> scores;  // [split][column]
  std::vector<double> mean;
  std::vector<double> std;  // population

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct BacktestResult {
  BacktestReport report;
  std::vector<SplitRun> runs;
};

BacktestResult backtest(const ForecastConfig& config, const PanelDataset& panel,
                        const std::vector<ValidationSplit>& splits, const MatrixProvider& provider = {});

// `id,F1..F28`, one row per level-12 series.
std::string point_submission_csv(const ForecastGrid& grid);
void write_point_submission(const std::filesystem::path& path, const ForecastGrid& grid);
ForecastGrid read_point_submission(const std::filesystem::path& path, const PanelDataset& panel,
                                   DayRange days);

// Binary model bundle of a trained pipeline (oracle groups are rebuilt on load).
void save_models(const std::filesystem::path& path, const TrainedPipeline& pipeline);
TrainedPipeline load_models(const std::filesystem::path& path, const ForecastConfig& config,
                            const PanelDataset& panel);

}  // namespace blendcast
