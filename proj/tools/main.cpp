// blendcast command-line driver.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "blendcast/config.hpp"
#include "blendcast/csv.hpp"
#include "blendcast/error.hpp"
#include "blendcast/forecast.hpp"
#include "blendcast/hash.hpp"
#include "blendcast/hierarchy.hpp"
#include "blendcast/metrics.hpp"
#include "blendcast/parallel.hpp"
#include "blendcast/synthetic.hpp"
#include "blendcast/uncertainty.hpp"

namespace fs = std::filesystem;
using namespace blendcast;

namespace {

constexpr const char* kVersion = "0.3.0";

struct Options {
  std::string config_path;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  std::string output;
  bool deterministic = false;
  // evaluate
  std::string file;
  int first_day = 0;
  // gen-synthetic
  std::string out_dir;
};

struct Run {
  PipelineConfig config;
  fs::path dir;
};

Run open_run(const Options& opt) {
  if (opt.config_path.empty()) throw ValidationError("--config is required");
  Run run;
  run.config = load_pipeline_config(opt.config_path);
  if (opt.seed) run.config.seed = *opt.seed;
  if (!opt.output.empty()) run.config.output = opt.output;
  if (opt.jobs) run.config.jobs = *opt.jobs;
  set_max_jobs(run.config.jobs);
  run.dir = run.config.output / ("run-" + config_hash(run.config));
  fs::create_directories(run.dir);

  nlohmann::json manifest;
  manifest["tool"] = "blendcast";
  manifest["version"] = kVersion;
  manifest["config_hash"] = config_hash(run.config);
  manifest["seed"] = run.config.seed;
  manifest["deterministic"] = opt.deterministic;
  manifest["config"] = nlohmann::json::parse(config_snapshot(run.config));
  std::ofstream out(run.dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << manifest.dump(2) << '\n';
  spdlog::info("run directory {}", run.dir.string());
  return run;
}

PanelDataset load_panel(const PipelineConfig& config) {
  if (config.data.sales.empty()) throw ValidationError("config has no data paths");
  return load_dataset(config.data);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::uint64_t cache_key(const PanelDataset& panel, const FeatureConfig& features, DayRange range) {
  return Fnv1a().pod(panel.fingerprint()).str(to_text(features)).pod(range.first).pod(range.last).digest();
}

fs::path cache_path(const fs::path& dir, DayRange range) {
  return dir / "cache" / fmt::format("train_{}_{}.bcfm", range.first, range.last);
}

// Training matrices come from the prepare cache when it is valid.
MatrixProvider cached_provider(const fs::path& dir, const PanelDataset& panel, const FeatureConfig& features) {
  return [dir, &panel, features](const FeatureBuilder& builder, DayRange range) {
    const fs::path path = cache_path(dir, range);
    const std::uint64_t key = cache_key(panel, features, range);
    if (auto hit = read_matrix_cache(path, key)) {
      spdlog::info("feature cache hit: {}", path.filename().string());
      return std::move(*hit);
    }
    if (fs::exists(path)) spdlog::warn("feature cache {} is stale or corrupted, rebuilding", path.string());
    FeatureMatrix m = builder.assemble(range, FeatureMode::training);
    fs::create_directories(path.parent_path());
    write_matrix_cache(path, m, key);
    return m;
  };
}

std::vector<ValidationSplit> selected_splits(const PipelineConfig& config, int n_days) {
  std::vector<ValidationSplit> all = make_splits(n_days, config.forecast.printed_split_ranges);
  if (config.splits.empty()) return all;
  std::vector<ValidationSplit> out;
  for (const auto& name : config.splits) {
    auto it = std::find_if(all.begin(), all.end(), [&](const ValidationSplit& s) { return s.name == name; });
    if (it == all.end()) throw ValidationError(fmt::format("split '{}' is not available", name));
    out.push_back(*it);
  }
  return out;
}

DayRange training_range(const ForecastConfig& f, DayRange train) {
  if (f.training_window_days > 0) train.first = std::max(train.first, train.last - f.training_window_days + 1);
  return train;
}

int cmd_prepare(const Options& opt) {
  Run run = open_run(opt);
  const PanelDataset panel = load_panel(run.config);
  const HierarchyIndex index = build_hierarchy(panel);
  const ForecastConfig fc = seeded_forecast_config(run.config);
  write_text(run.dir / "panel.csv",
             fmt::format("series,days,calendar_days,active_rows,fingerprint\n{},{},{},{},{:016x}\n",
                         panel.n_series(), panel.n_days(), panel.calendar_days(),
                         panel.active_row_count(), panel.fingerprint()));
  compute_weights(panel, index, panel.n_days()).write_csv(run.dir / "weights.csv");

  std::vector<DayRange> ranges = {training_range(fc, {1, panel.n_days()})};
  for (const auto& s : selected_splits(run.config, panel.n_days())) ranges.push_back(training_range(fc, s.train));
  const MatrixProvider provider = cached_provider(run.dir, panel, fc.features);
  for (const DayRange& range : ranges) {
    const FeatureBuilder builder(panel, fc.features, range);
    const FeatureMatrix m = provider(builder, range);
    spdlog::info("training matrix [{}, {}]: {} rows x {} features", range.first, range.last, m.n_rows(), m.n_cols());
  }
  return 0;
}

int cmd_backtest(const Options& opt) {
  Run run = open_run(opt);
  const PanelDataset panel = load_panel(run.config);
  const ForecastConfig fc = seeded_forecast_config(run.config);
  const auto splits = selected_splits(run.config, panel.n_days());
  const BacktestResult result = backtest(fc, panel, splits, cached_provider(run.dir, panel, fc.features));
  result.report.write_csv(run.dir / "backtest.csv");

  std::string levels = "split,column,level,value\n";
  for (const auto& r : result.runs) {
    for (const auto& [name, score] : r.scores) {
      for (int l = 0; l < kLevelCount; ++l) {
        levels += fmt::format("{},{},{},{}\n", r.split.name, name, l + 1, format_double(score.per_level[l]));
      }
    }
  }
  write_text(run.dir / "backtest_levels.csv", levels);
  for (const auto& r : result.runs) {
    const ForecastGrid median = smooth(fc.smoothing, panel, geometric_blend(r.groups, fc.blend));
    write_point_submission(run.dir / fmt::format("{}_median.csv", r.split.name), median);
  }
  std::cout << result.report.to_csv();
  return 0;
}

int cmd_train(const Options& opt) {
  Run run = open_run(opt);
  const PanelDataset panel = load_panel(run.config);
  const ForecastConfig fc = seeded_forecast_config(run.config);
  const TrainedPipeline pipeline = full_train(fc, panel, cached_provider(run.dir, panel, fc.features));
  save_models(run.dir / "models.bin", pipeline);
  return 0;
}

int cmd_forecast(const Options& opt) {
  Run run = open_run(opt);
  const PanelDataset panel = load_panel(run.config);
  const ForecastConfig fc = seeded_forecast_config(run.config);
  const fs::path models = run.dir / "models.bin";
  TrainedPipeline pipeline;
  if (fs::exists(models)) {
    pipeline = load_models(models, fc, panel);
  } else {
    spdlog::info("no trained models in the run directory, training first");
    pipeline = full_train(fc, panel, cached_provider(run.dir, panel, fc.features));
    save_models(models, pipeline);
  }
  const auto grids = forecast_groups(pipeline, panel.n_days() + 1);
  fs::create_directories(run.dir / "groups");
  for (const auto& [name, grid] : grids) write_point_submission(run.dir / "groups" / (name + ".csv"), grid);
  const ForecastGrid blended = geometric_blend(grids, fc.blend);
  const ForecastGrid median = smooth(fc.smoothing, panel, blended);
  write_point_submission(run.dir / "forecast.csv", fc.smoothing.apply_to_point ? median : blended);
  write_point_submission(run.dir / "median.csv", median);
  return 0;
}

int cmd_quantiles(const Options& opt) {
  Run run = open_run(opt);
  const PanelDataset panel = load_panel(run.config);
  const HierarchyIndex index = build_hierarchy(panel);
  const fs::path median_path = run.dir / "median.csv";
  if (!fs::exists(median_path)) throw ValidationError("no median forecast in the run directory; run forecast first");
  const ForecastGrid median = read_point_submission(median_path, panel, {panel.n_days() + 1, panel.n_days() + kHorizon});

  QuantileFactorTable table;
  if (run.config.factor_source == FactorSource::file) {
    table = QuantileFactorTable::read_csv(run.config.factor_file);
  } else {
    const auto splits = make_splits(panel.n_days(), run.config.forecast.printed_split_ranges);
    const ValidationSplit& split = splits.front();
    const fs::path split_median = run.dir / fmt::format("{}_median.csv", split.name);
    if (!fs::exists(split_median)) {
      throw ValidationError(fmt::format("factor fitting needs {}; run backtest first", split_median.string()));
    }
    const ForecastGrid fit_median = read_point_submission(split_median, panel, split.validation);
    const WeightTable weights = compute_weights(panel, index, split.validation.first - 1);
    const FactorFitInput input =
        prepare_factor_fit(panel, index, weights, fit_median, run.config.forecast.metric);
    const FactorFitResult fit = optimize_factors(input, run.config.factor_fit);
    table = fit.table;
    write_text(run.dir / "factor_fit.csv",
               fmt::format("table,wspl\nidentity,{}\nfitted,{}\n", format_double(fit.identity_wspl),
                           format_double(fit.fitted_wspl)));
  }
  table.write_csv(run.dir / "factors.csv");
  const auto grids = quantile_pipeline(panel, index, median, table, run.config.quantiles);
  write_quantile_submission(run.dir / "quantiles.csv", grids);
  return 0;
}

int cmd_evaluate(const Options& opt) {
  Run run = open_run(opt);
  const PanelDataset panel = load_panel(run.config);
  const HierarchyIndex index = build_hierarchy(panel);
  if (opt.file.empty()) throw ValidationError("--file is required");
  if (!fs::exists(opt.file)) throw ValidationError(fmt::format("no such file '{}'", opt.file));
  const int first = opt.first_day > 0 ? opt.first_day : panel.n_days() - kHorizon + 1;
  const DayRange days{first, first + kHorizon - 1};
  if (days.last > panel.n_days()) {
    throw ValidationError(fmt::format("truth for days [{}, {}] is not in the panel", days.first, days.last));
  }
  const CsvTable head = read_csv(opt.file);
  if (head.rows.empty()) throw ValidationError(fmt::format("{}: empty forecast file", opt.file));
  const WeightTable weights = compute_weights(panel, index, days.first - 1);
  ScoreReport report;
  if (head.header.size() > 1 && head.header[1] == "quantile") {
    report = score_quantiles(panel, index, weights, read_quantile_submission(opt.file, index, days),
                             run.config.forecast.metric);
  } else {
    report = score_point(panel, index, weights, read_point_submission(opt.file, panel, days),
                         run.config.forecast.metric);
  }
  const fs::path out = run.dir / fmt::format("evaluation_{}.csv", fs::path(opt.file).stem().string());
  report.write_csv(out);
  std::cout << report.metric << ' ' << format_double(report.total) << '\n';
  return 0;
}

int cmd_gen_synthetic(const Options& opt) {
  SyntheticConfig synth;
  DataPaths paths;
  if (!opt.config_path.empty()) {
    const PipelineConfig config = load_pipeline_config(opt.config_path);
    synth = config.synthetic;
    paths = config.data;
  }
  if (opt.seed) synth.seed = *opt.seed;
  if (!opt.out_dir.empty()) {
    const fs::path dir = opt.out_dir;
    paths = {dir / "sales_train_evaluation.csv", dir / "calendar.csv", dir / "sell_prices.csv"};
  }
  if (paths.sales.empty()) throw ValidationError("gen-synthetic needs --out or data paths in --config");
  const SyntheticData data = generate_synthetic(synth);
  write_synthetic(data, paths);
  spdlog::info("wrote {} series x {} days to {}", data.sales.rows.size(), data.sales.n_days,
               paths.sales.parent_path().string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("blendcast"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Hierarchical retail sales forecasting pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options opt;
  std::size_t jobs = 0;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config,-c", opt.config_path, "pipeline config (JSON)");
    cmd->add_option("--jobs,-j", jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "seed added to every model seed");
    cmd->add_option("--output,-o", opt.output, "output root (overrides the config)");
    cmd->add_flag("--deterministic", opt.deterministic, "record a fixed-seed run in the manifest");
  };

  auto* prepare = app.add_subcommand("prepare", "validate inputs and build feature caches");
  auto* backtest_cmd = app.add_subcommand("backtest", "score every model group on the validation splits");
  auto* train = app.add_subcommand("train", "fit all model groups on the full history");
  auto* forecast = app.add_subcommand("forecast", "write the 28-day level-12 point forecast");
  auto* quantiles = app.add_subcommand("quantiles", "write the 9-quantile forecast for all levels");
  auto* evaluate = app.add_subcommand("evaluate", "score a forecast file against observed sales");
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic panel in M5 layout");
  for (auto* cmd : {prepare, backtest_cmd, train, forecast, quantiles, evaluate, gen}) common(cmd);
  evaluate->add_option("--file,-f", opt.file, "point or quantile submission CSV")->required();
  evaluate->add_option("--first-day", opt.first_day, "first scored day (default: last 28 days)");
  gen->add_option("--out", opt.out_dir, "directory for the three CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto* cmd : {prepare, backtest_cmd, train, forecast, quantiles, evaluate, gen}) {
      if (cmd->count("--jobs")) opt.jobs = jobs;
      if (cmd->count("--seed")) opt.seed = seed;
    }
    if (opt.jobs) set_max_jobs(*opt.jobs);
    if (*prepare) return cmd_prepare(opt);
    if (*backtest_cmd) return cmd_backtest(opt);
    if (*train) return cmd_train(opt);
    if (*forecast) return cmd_forecast(opt);
    if (*quantiles) return cmd_quantiles(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*gen) return cmd_gen_synthetic(opt);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
