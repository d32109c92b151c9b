#include "blendcast/forecast.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "blendcast/csv.hpp"
#include "blendcast/error.hpp"
#include "blendcast/hierarchy.hpp"
#include "blendcast/parallel.hpp"

namespace blendcast {

std::vector<ValidationSplit> make_splits(int n_days, bool printed_ranges) {
  if (n_days < kHorizon + 1) {
    throw ValidationError(fmt::format("{} days of history cannot hold a validation split", n_days));
  }
  static constexpr int kOffsets[3] = {0, kHorizon, 336};
  std::vector<ValidationSplit> splits;
  for (int k = 0; k < 3; ++k) {
    const int last = n_days - kOffsets[k];
    const int first = last - kHorizon + 1;
    ValidationSplit split;
    split.name = fmt::format("split{}", k + 1);
    split.validation = {first, last};
    split.train = {1, k == 0 && printed_ranges ? n_days - 1 : first - 1};
    if (first - 1 < kHorizon) {
      spdlog::warn("{} omitted: validation window [{}, {}] leaves too little training history",
                   split.name, first, last);
      continue;
    }
    splits.push_back(split);
  }
  return splits;
}

void StoreGbdtPointModel::save(std::ostream& out) const {
  const auto& models = model_.models();
  const std::uint64_t schema = model_.schema_hash();
  out.write(reinterpret_cast<const char*>(&schema), sizeof schema);
  const auto count = static_cast<std::uint32_t>(models.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [store, model] : models) {
    const auto len = static_cast<std::uint32_t>(store.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(store.data(), len);
    model.save(out);
  }
}

void MlpGroupPointModel::save(std::ostream& out) const {
  const auto count = static_cast<std::uint32_t>(models_.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& m : models_) m.save(out);
}

std::unique_ptr<PointModel> make_oracle_model(const PanelDataset& panel, std::uint64_t schema_hash) {
  const PanelDataset* p = &panel;
  return std::make_unique<FunctionPointModel>(schema_hash, [p](const FeatureMatrix& m) {
    std::vector<double> out(m.n_rows(), 0.0);
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
      const RowKey k = m.keys[r];
      if (k.day <= p->n_days()) out[r] = p->y(k.series, k.day);
    }
    return out;
  });
}

namespace {

void check_schema(const PointModel& model, const FeatureBuilder& builder) {
  if (model.schema_hash() != builder.schema_hash()) {
    throw ValidationError("forecast: model was trained on a different feature schema");
  }
}

ForecastGrid empty_grid(const PanelDataset& panel, int start_day, int horizon) {
  if (horizon < 1) throw ValidationError("forecast horizon must be >= 1");
  const int last = start_day + horizon - 1;
  if (last > panel.calendar_days()) {
    throw ValidationError(fmt::format("forecast through day {} exceeds the {}-day calendar", last,
                                      panel.calendar_days()));
  }
  if (start_day < 2 || start_day > panel.n_days() + 1) {
    throw ValidationError(fmt::format("forecast start day {} outside 2..{}", start_day,
                                      panel.n_days() + 1));
  }
  std::vector<std::string> ids;
  for (const auto& s : panel.all_series()) ids.push_back(s.id);
  return ForecastGrid(12, std::move(ids), {start_day, last});
}

void write_rows(ForecastGrid& grid, const FeatureMatrix& matrix, std::size_t begin,
                const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const RowKey k = matrix.keys[begin + i];
    const double v = values[i];
    if (std::isnan(v)) throw Error("forecast: model returned NaN");
    grid.at(k.series, static_cast<std::size_t>(k.day - grid.days.first)) = std::max(v, 0.0);
  }
}

}  // namespace

ForecastGrid recursive_forecast(const PointModel& model, const FeatureBuilder& builder, int start_day,
                                int horizon, RecursiveStats* stats) {
  check_schema(model, builder);
  const PanelDataset& panel = builder.panel();
  ForecastGrid buffer = empty_grid(panel, start_day, horizon);
  RecursiveSalesReader reader(panel, start_day, buffer);
  FeatureMatrix matrix = builder.assemble(buffer.days, FeatureMode::inference, &reader);

  std::size_t begin = 0;
  for (int t = 0; t < horizon; ++t) {
    const int day = start_day + t;
    std::size_t end = begin;
    while (end < matrix.n_rows() && matrix.keys[end].day == day) ++end;
    reader.set_filled(t);
    builder.refresh_sales_columns(matrix, begin, end, reader);
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
    const FeatureMatrix day_rows = matrix.select(rows);
    write_rows(buffer, matrix, begin, model.predict(day_rows));
    begin = end;
  }
  if (stats) stats->buffer_reads = reader.buffer_reads();
  return buffer;
}

ForecastGrid direct_forecast(const PointModel& model, const FeatureBuilder& builder, int start_day,
                             int horizon) {
  check_schema(model, builder);
  const PanelDataset& panel = builder.panel();
  ForecastGrid out = empty_grid(panel, start_day, horizon);
  const ForecastGrid unused = out;
  RecursiveSalesReader reader(panel, start_day, unused);
  const FeatureMatrix matrix = builder.assemble(out.days, FeatureMode::inference, &reader);
  write_rows(out, matrix, 0, model.predict(matrix));
  return out;
}

std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::gbdt: return "gbdt";
    case GroupKind::gbdt_per_store: return "gbdt_per_store";
    case GroupKind::mlp: return "mlp";
    case GroupKind::oracle: return "oracle";
  }
  return "?";
}

GroupKind parse_group_kind(std::string_view text) {
  if (text == "gbdt") return GroupKind::gbdt;
  if (text == "gbdt_per_store") return GroupKind::gbdt_per_store;
  if (text == "mlp") return GroupKind::mlp;
  if (text == "oracle") return GroupKind::oracle;
  throw ValidationError(fmt::format("unknown model group kind '{}'", text));
}

std::vector<ModelGroupConfig> reference_groups() {
  std::vector<ModelGroupConfig> groups;

  ModelGroupConfig nas;
  nas.name = "lgb_nas";
  nas.kind = GroupKind::gbdt_per_store;
  nas.gbdt = GbdtParams::desk();
  nas.gbdt.subsample = 0.6;
  nas.gbdt.feature_fraction = 0.6;
  nas.gbdt.rng_seed = 11;
  groups.push_back(nas);

  ModelGroupConfig cos;
  cos.name = "lgb_cos";
  cos.kind = GroupKind::gbdt;
  cos.gbdt = GbdtParams::desk();
  cos.gbdt.subsample = 0.5;
  cos.gbdt.feature_fraction = 0.5;
  cos.gbdt.rng_seed = 12;
  groups.push_back(cos);

  ModelGroupConfig keras;
  keras.name = "keras_nas";
  keras.kind = GroupKind::mlp;
  for (int i = 0; i < 3; ++i) keras.mlp.push_back(MlpConfig::keras_preset(i));
  groups.push_back(keras);

  ModelGroupConfig fastai;
  fastai.name = "fastai_cos";
  fastai.kind = GroupKind::mlp;
  fastai.mlp.push_back(MlpConfig::fastai_preset());
  fastai.mlp.back().rng_seed = 14;
  groups.push_back(fastai);
  return groups;
}

namespace {

std::shared_ptr<const PointModel> fit_group(const ModelGroupConfig& group, const FeatureMatrix& train,
                                            const PanelDataset& panel) {
  switch (group.kind) {
    case GroupKind::gbdt:
      return std::make_shared<GbdtPointModel>(fit(train, group.gbdt));
    case GroupKind::gbdt_per_store:
      return std::make_shared<StoreGbdtPointModel>(
          fit_per_store(train, panel, group.gbdt, {}, group.store_estimators), panel);
    case GroupKind::mlp:
      if (group.mlp.empty()) {
        throw ValidationError(fmt::format("group '{}' lists no network configs", group.name));
      }
      return std::make_shared<MlpGroupPointModel>(fit_group(train, group.mlp));
    case GroupKind::oracle:
      return make_oracle_model(panel, train.schema_hash);
  }
  throw ValidationError("unknown group kind");
}

}  // namespace

TrainedPipeline train_groups(const ForecastConfig& config, const PanelDataset& panel, DayRange train,
                             const MatrixProvider& provider) {
  if (config.groups.empty()) throw ValidationError("no model groups configured");
  if (train.empty() || train.last > panel.n_days()) {
    throw ValidationError(fmt::format("training range [{}, {}] outside history", train.first, train.last));
  }
  if (config.training_window_days > 0) {
    train.first = std::max(train.first, train.last - config.training_window_days + 1);
  }
  TrainedPipeline pipeline;
  pipeline.train = train;
  pipeline.builder = std::make_unique<FeatureBuilder>(panel, config.features, train);
  const FeatureMatrix matrix = provider ? provider(*pipeline.builder, train)
                                        : pipeline.builder->assemble(train, FeatureMode::training);
  spdlog::info("training {} groups on days [{}, {}] ({} rows, {} features)", config.groups.size(),
               train.first, train.last, matrix.n_rows(), matrix.n_cols());
  for (const auto& group : config.groups) {
    pipeline.groups.push_back({group.name, group.kind, fit_group(group, matrix, panel)});
  }
  return pipeline;
}

TrainedPipeline full_train(const ForecastConfig& config, const PanelDataset& panel,
                           const MatrixProvider& provider) {
  return train_groups(config, panel, {1, panel.n_days()}, provider);
}

std::map<std::string, ForecastGrid> forecast_groups(const TrainedPipeline& pipeline, int start_day,
                                                    int horizon) {
  std::map<std::string, ForecastGrid> grids;
  for (const auto& group : pipeline.groups) {
    grids.emplace(group.name, recursive_forecast(*group.model, *pipeline.builder, start_day, horizon));
  }
  return grids;
}

ForecastGrid smooth(const SmoothingConfig& config, const PanelDataset& panel, const ForecastGrid& grid) {
  if (config.mode == SmoothingMode::with_history) {
    return exponential_smooth(grid, config.alpha, panel, config.history_days);
  }
  return exponential_smooth(grid, config.alpha);
}

ForecastGrid ensemble_forecast(const ForecastConfig& config, const PanelDataset& panel,
                               const std::map<std::string, ForecastGrid>& grids) {
  ForecastGrid blended = geometric_blend(grids, config.blend);
  return config.smoothing.apply_to_point ? smooth(config.smoothing, panel, blended) : blended;
}

BacktestResult backtest(const ForecastConfig& config, const PanelDataset& panel,
                        const std::vector<ValidationSplit>& splits, const MatrixProvider& provider) {
  if (splits.empty()) throw ValidationError("backtest needs at least one split");
  const HierarchyIndex index = build_hierarchy(panel);
  BacktestResult result;
  BacktestReport& report = result.report;
  for (const auto& g : config.groups) report.columns.push_back(g.name);
  report.columns.push_back("ensemble");

  for (const auto& split : splits) {
    spdlog::info("backtest {}: train [{}, {}], validate [{}, {}]", split.name, split.train.first,
                 split.train.last, split.validation.first, split.validation.last);
    SplitRun run;
    run.split = split;
    const TrainedPipeline pipeline = train_groups(config, panel, split.train, provider);
    run.groups = forecast_groups(pipeline, split.validation.first, split.validation.size());
    run.ensemble = ensemble_forecast(config, panel, run.groups);
    const WeightTable weights = compute_weights(panel, index, split.validation.first - 1);
    std::vector<double> row;
    for (const auto& g : config.groups) {
      ScoreReport score = score_point(panel, index, weights, run.groups.at(g.name), config.metric);
      row.push_back(score.total);
      run.scores.emplace(g.name, std::move(score));
    }
    ScoreReport ens = score_point(panel, index, weights, run.ensemble, config.metric);
    row.push_back(ens.total);
    run.scores.emplace("ensemble", std::move(ens));
    report.splits.push_back(split.name);
    report.scores.push_back(std::move(row));
    result.runs.push_back(std::move(run));
  }

  const std::size_t cols = report.columns.size();
  const auto n = static_cast<double>(report.scores.size());
  report.mean.assign(cols, 0.0);
  report.std.assign(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    for (const auto& row : report.scores) report.mean[c] += row[c];
    report.mean[c] /= n;
    for (const auto& row : report.scores) {
      report.std[c] += (row[c] - report.mean[c]) * (row[c] - report.mean[c]);
    }
    report.std[c] = std::sqrt(report.std[c] / n);
  }
  return result;
}

std::string BacktestReport::to_csv() const {
  std::string out = "split";
  for (const auto& c : columns) out += "," + c;
  out += '\n';
  auto line = [&](const std::string& name, const std::vector<double>& values) {
    out += name;
    for (double v : values) out += "," + format_double(v);
    out += '\n';
  };
  for (std::size_t s = 0; s < splits.size(); ++s) line(splits[s], scores[s]);
  line("mean", mean);
  line("std", std);
  return out;
}

void BacktestReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << to_csv();
}

std::string point_submission_csv(const ForecastGrid& grid) {
  std::string out = "id";
  for (std::size_t t = 1; t <= grid.horizon(); ++t) out += ",F" + std::to_string(t);
  out += '\n';
  for (std::size_t s = 0; s < grid.n_series(); ++s) {
    out += grid.series_ids[s];
    for (double v : grid.row(s)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void write_point_submission(const std::filesystem::path& path, const ForecastGrid& grid) {
  const std::string text = point_submission_csv(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

ForecastGrid read_point_submission(const std::filesystem::path& path, const PanelDataset& panel,
                                   DayRange days) {
  const CsvTable csv = read_csv(path);
  if (csv.rows.empty()) throw ValidationError(fmt::format("{}: no forecast rows", path.string()));
  const auto h = static_cast<std::size_t>(days.size());
  if (csv.header.size() != h + 1) {
    throw ValidationError(fmt::format("{}: expected id and {} forecast columns, found {} columns",
                                      path.string(), h, csv.header.size()));
  }
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    if (!row_of.emplace(csv.rows[r][0], r).second) {
      throw ParseError(path.string(), csv.line_numbers[r], fmt::format("duplicate id '{}'", csv.rows[r][0]));
    }
  }
  std::vector<std::string> ids;
  for (const auto& s : panel.all_series()) ids.push_back(s.id);
  ForecastGrid grid(12, ids, days);
  for (std::size_t s = 0; s < ids.size(); ++s) {
    auto it = row_of.find(ids[s]);
    if (it == row_of.end()) {
      throw ValidationError(fmt::format("{}: no row for series '{}'", path.string(), ids[s]));
    }
    for (std::size_t t = 0; t < h; ++t) grid.at(s, t) = parse_double(csv, it->second, csv.rows[it->second][t + 1]);
  }
  if (row_of.size() != ids.size()) {
    throw ValidationError(fmt::format("{}: {} rows for {} series", path.string(), row_of.size(), ids.size()));
  }
  return grid;
}

namespace {

constexpr char kBundleMagic[4] = {'B', 'C', 'M', 'S'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ValidationError("truncated model bundle");
  return v;
}

std::string take_string(std::istream& in) {
  std::string s(take<std::uint32_t>(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!in) throw ValidationError("truncated model bundle");
  return s;
}

}  // namespace

void save_models(const std::filesystem::path& path, const TrainedPipeline& pipeline) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out.write(kBundleMagic, 4);
  put(out, pipeline.builder->schema_hash());
  put(out, pipeline.train.first);
  put(out, pipeline.train.last);
  put(out, static_cast<std::uint32_t>(pipeline.groups.size()));
  for (const auto& g : pipeline.groups) {
    put(out, static_cast<std::uint32_t>(g.name.size()));
    out.write(g.name.data(), static_cast<std::streamsize>(g.name.size()));
    put(out, g.kind);
    g.model->save(out);
  }
}

TrainedPipeline load_models(const std::filesystem::path& path, const ForecastConfig& config,
                            const PanelDataset& panel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open model bundle '{}'", path.string()));
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBundleMagic, 4) != 0) {
    throw ValidationError(fmt::format("'{}' is not a model bundle", path.string()));
  }
  const auto schema = take<std::uint64_t>(in);
  TrainedPipeline pipeline;
  pipeline.train.first = take<int>(in);
  pipeline.train.last = take<int>(in);
  pipeline.builder = std::make_unique<FeatureBuilder>(panel, config.features, pipeline.train);
  if (pipeline.builder->schema_hash() != schema) {
    throw ValidationError("model bundle was trained with a different feature configuration");
  }
  const auto count = take<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    FittedGroup g;
    g.name = take_string(in);
    g.kind = take<GroupKind>(in);
    switch (g.kind) {
      case GroupKind::gbdt:
        g.model = std::make_shared<GbdtPointModel>(GbdtModel::load(in));
        break;
      case GroupKind::gbdt_per_store: {
        // Mirrors StoreGbdtPointModel::save.
        const auto store_schema = take<std::uint64_t>(in);
        const auto n = take<std::uint32_t>(in);
        std::map<std::string, GbdtModel> models;
        for (std::uint32_t k = 0; k < n; ++k) {
          std::string store = take_string(in);
          models.emplace(std::move(store), GbdtModel::load(in));
        }
        g.model = std::make_shared<StoreGbdtPointModel>(
            StoreGbdtModel::from_models(std::move(models), store_schema), panel);
        break;
      }
      case GroupKind::mlp: {
        const auto n = take<std::uint32_t>(in);
        std::vector<MlpModel> models;
        for (std::uint32_t k = 0; k < n; ++k) models.push_back(MlpModel::load(in));
        g.model = std::make_shared<MlpGroupPointModel>(std::move(models));
        break;
      }
      case GroupKind::oracle:
        g.model = make_oracle_model(panel, schema);
        break;
      default:
        throw ValidationError("model bundle holds an unknown group kind");
    }
    pipeline.groups.push_back(std::move(g));
  }
  return pipeline;
}

}  // namespace blendcast
