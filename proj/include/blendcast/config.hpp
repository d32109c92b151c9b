#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"
#include "blendcast/forecast.hpp"
#include "blendcast/synthetic.hpp"
#include "blendcast/uncertainty.hpp"

namespace blendcast {

enum class FactorSource { fit, file };

// Everything one pipeline run depends on. Relative paths in the JSON file are
// resolved against the file's directory.
struct PipelineConfig {
  DataPaths data;
  std::filesystem::path feature_spec;  // empty: built-in defaults
  SyntheticConfig synthetic;
  ForecastConfig forecast;
  FactorSource factor_source = FactorSource::fit;
  std::filesystem::path factor_file;
  FactorFitOptions factor_fit;
  QuantilePipelineOptions quantiles;
  std::vector<std::string> splits;  // split names to run; empty = all
  std::uint64_t seed = 0;           // added to every model seed
  std::filesystem::path output = "output";
  std::size_t jobs = 1;
};

PipelineConfig parse_pipeline_config(const std::string& json_text,
                                     const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Effective settings as canonical JSON (sorted keys, resolved values).
std::string config_snapshot(const PipelineConfig& config);
// 16 hex digits of the snapshot hash.
std::string config_hash(const PipelineConfig& config);

// Model seeds after adding config.seed.
ForecastConfig seeded_forecast_config(const PipelineConfig& config);

}  // namespace blendcast
