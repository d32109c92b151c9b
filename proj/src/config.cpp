#include "blendcast/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "blendcast/error.hpp"
#include "blendcast/hash.hpp"

namespace blendcast {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(fmt::format("config: '{}' must be an object", where));
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ValidationError(fmt::format("config: unknown key '{}' in {}", key, where));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("config: {}.{}: {}", where, key, e.what()));
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

GbdtParams read_gbdt(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"preset", "objective", "tweedie_variance_power", "learning_rate", "num_leaves",
              "min_data_in_leaf", "feature_fraction", "subsample", "subsample_freq", "max_bin",
              "n_estimators", "rng_seed", "boost_from_average"});
  std::string preset = "desk";
  read(obj, "preset", preset, where);
  GbdtParams p;
  if (preset == "desk") {
    p = GbdtParams::desk();
  } else if (preset == "full_single") {
    p = GbdtParams::full_single_model();
  } else if (preset == "full_per_store") {
    p = GbdtParams::full_per_store();
  } else {
    throw ValidationError(fmt::format("config: {}: unknown preset '{}'", where, preset));
  }
  if (obj.contains("objective")) p.objective = parse_objective(obj.at("objective").get<std::string>());
  read(obj, "tweedie_variance_power", p.tweedie_variance_power, where);
  read(obj, "learning_rate", p.learning_rate, where);
  read(obj, "num_leaves", p.num_leaves, where);
  read(obj, "min_data_in_leaf", p.min_data_in_leaf, where);
  read(obj, "feature_fraction", p.feature_fraction, where);
  read(obj, "subsample", p.subsample, where);
  read(obj, "subsample_freq", p.subsample_freq, where);
  read(obj, "max_bin", p.max_bin, where);
  read(obj, "n_estimators", p.n_estimators, where);
  read(obj, "rng_seed", p.rng_seed, where);
  read(obj, "boost_from_average", p.boost_from_average, where);
  p.validate();
  return p;
}

json gbdt_json(const GbdtParams& p) {
  return {{"objective", std::string(to_string(p.objective))},
          {"tweedie_variance_power", p.tweedie_variance_power},
          {"learning_rate", p.learning_rate},
          {"num_leaves", p.num_leaves},
          {"min_data_in_leaf", p.min_data_in_leaf},
          {"feature_fraction", p.feature_fraction},
          {"subsample", p.subsample},
          {"subsample_freq", p.subsample_freq},
          {"max_bin", p.max_bin},
          {"n_estimators", p.n_estimators},
          {"rng_seed", p.rng_seed},
          {"boost_from_average", p.boost_from_average}};
}

MlpConfig read_mlp(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"preset", "embedding_dim", "hidden", "objective", "tweedie_variance_power", "epochs",
              "batch_size", "learning_rate", "momentum", "lr_step_epochs", "lr_decay", "grad_clip",
              "snapshots_to_keep", "rng_seed", "window_days"});
  MlpConfig c;
  std::string preset;
  read(obj, "preset", preset, where);
  if (preset == "keras0" || preset == "keras1" || preset == "keras2") {
    c = MlpConfig::keras_preset(preset.back() - '0');
  } else if (preset == "fastai") {
    c = MlpConfig::fastai_preset();
  } else if (!preset.empty()) {
    throw ValidationError(fmt::format("config: {}: unknown preset '{}'", where, preset));
  }
  read(obj, "embedding_dim", c.embedding_dim, where);
  read(obj, "hidden", c.hidden, where);
  if (obj.contains("objective")) c.objective = parse_objective(obj.at("objective").get<std::string>());
  read(obj, "tweedie_variance_power", c.tweedie_variance_power, where);
  read(obj, "epochs", c.epochs, where);
  read(obj, "batch_size", c.batch_size, where);
  read(obj, "learning_rate", c.learning_rate, where);
  read(obj, "momentum", c.momentum, where);
  read(obj, "lr_step_epochs", c.lr_step_epochs, where);
  read(obj, "lr_decay", c.lr_decay, where);
  read(obj, "grad_clip", c.grad_clip, where);
  read(obj, "snapshots_to_keep", c.snapshots_to_keep, where);
  read(obj, "rng_seed", c.rng_seed, where);
  read(obj, "window_days", c.window_days, where);
  c.validate();
  return c;
}

json mlp_json(const MlpConfig& c) {
  return {{"embedding_dim", c.embedding_dim},
          {"hidden", c.hidden},
          {"objective", std::string(to_string(c.objective))},
          {"tweedie_variance_power", c.tweedie_variance_power},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"lr_step_epochs", c.lr_step_epochs},
          {"lr_decay", c.lr_decay},
          {"grad_clip", c.grad_clip},
          {"snapshots_to_keep", c.snapshots_to_keep},
          {"rng_seed", c.rng_seed},
          {"window_days", c.window_days}};
}

ModelGroupConfig read_group(const json& obj, std::size_t i) {
  const std::string where = fmt::format("groups[{}]", i);
  check_keys(obj, where, {"name", "kind", "gbdt", "store_estimators", "mlp"});
  ModelGroupConfig g;
  read(obj, "name", g.name, where);
  if (g.name.empty()) throw ValidationError(fmt::format("config: {} needs a name", where));
  std::string kind = "gbdt";
  read(obj, "kind", kind, where);
  g.kind = parse_group_kind(kind);
  if (obj.contains("gbdt")) g.gbdt = read_gbdt(obj.at("gbdt"), where + ".gbdt");
  if (obj.contains("store_estimators")) {
    const json& se = obj.at("store_estimators");
    if (se.is_string() && se.get<std::string>() == "full") {
      g.store_estimators = full_store_estimators();
    } else {
      read(obj, "store_estimators", g.store_estimators, where);
    }
  }
  if (obj.contains("mlp")) {
    const json& list = obj.at("mlp");
    if (!list.is_array()) throw ValidationError(fmt::format("config: {}.mlp must be a list", where));
    for (std::size_t k = 0; k < list.size(); ++k) {
      g.mlp.push_back(read_mlp(list[k], fmt::format("{}.mlp[{}]", where, k)));
    }
  }
  if (g.kind == GroupKind::mlp && g.mlp.empty()) {
    throw ValidationError(fmt::format("config: {} of kind mlp lists no networks", where));
  }
  return g;
}

SyntheticConfig read_synthetic(const json& obj) {
  check_keys(obj, "synthetic",
             {"stores", "categories", "items_per_department", "n_days", "mean_rate", "dispersion",
              "late_release_share", "seed"});
  SyntheticConfig c;
  read(obj, "stores", c.stores, "synthetic");
  if (obj.contains("categories")) {
    c.categories.clear();
    for (const auto& [cat, n] : obj.at("categories").items()) c.categories.emplace_back(cat, n.get<int>());
  }
  read(obj, "items_per_department", c.items_per_department, "synthetic");
  read(obj, "n_days", c.n_days, "synthetic");
  read(obj, "mean_rate", c.mean_rate, "synthetic");
  read(obj, "dispersion", c.dispersion, "synthetic");
  read(obj, "late_release_share", c.late_release_share, "synthetic");
  read(obj, "seed", c.seed, "synthetic");
  return c;
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("config: invalid JSON: {}", e.what()));
  }
  check_keys(root, "config",
             {"data", "features", "synthetic", "groups", "blend", "smoothing", "uncertainty", "splits",
              "training_window_days", "metric", "seed", "output", "jobs"});
  PipelineConfig c;

  if (root.contains("data")) {
    const json& d = root.at("data");
    check_keys(d, "data", {"sales", "calendar", "prices"});
    std::string sales, calendar, prices;
    read(d, "sales", sales, "data");
    read(d, "calendar", calendar, "data");
    read(d, "prices", prices, "data");
    c.data = {resolve(base_dir, sales), resolve(base_dir, calendar), resolve(base_dir, prices)};
  }
  if (root.contains("features")) {
    c.feature_spec = resolve(base_dir, root.at("features").get<std::string>());
    c.forecast.features = load_feature_config(c.feature_spec);
  }
  if (root.contains("synthetic")) c.synthetic = read_synthetic(root.at("synthetic"));
  if (root.contains("groups")) {
    const json& groups = root.at("groups");
    if (!groups.is_array() || groups.empty()) {
      throw ValidationError("config: 'groups' must be a nonempty list");
    }
    c.forecast.groups.clear();
    std::set<std::string> names;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      c.forecast.groups.push_back(read_group(groups[i], i));
      if (!names.insert(c.forecast.groups.back().name).second) {
        throw ValidationError(fmt::format("config: duplicate group '{}'", c.forecast.groups.back().name));
      }
    }
  }
  if (root.contains("blend")) {
    const json& b = root.at("blend");
    check_keys(b, "blend", {"groups", "early", "last", "last_day_position"});
    read(b, "groups", c.forecast.blend.groups, "blend");
    read(b, "early", c.forecast.blend.early, "blend");
    read(b, "last", c.forecast.blend.last, "blend");
    read(b, "last_day_position", c.forecast.blend.last_day_position, "blend");
  }
  c.forecast.blend.validate();
  for (const auto& name : c.forecast.blend.groups) {
    bool found = false;
    for (const auto& g : c.forecast.groups) found = found || g.name == name;
    if (!found) throw ValidationError(fmt::format("config: blend group '{}' is not configured", name));
  }
  if (root.contains("smoothing")) {
    const json& s = root.at("smoothing");
    check_keys(s, "smoothing", {"alpha", "mode", "history_days", "apply_to_point"});
    SmoothingConfig& sm = c.forecast.smoothing;
    read(s, "alpha", sm.alpha, "smoothing");
    std::string mode = "horizon";
    read(s, "mode", mode, "smoothing");
    if (mode == "horizon") {
      sm.mode = SmoothingMode::horizon;
    } else if (mode == "with_history") {
      sm.mode = SmoothingMode::with_history;
    } else {
      throw ValidationError(fmt::format("config: unknown smoothing mode '{}'", mode));
    }
    read(s, "history_days", sm.history_days, "smoothing");
    read(s, "apply_to_point", sm.apply_to_point, "smoothing");
    if (!(sm.alpha > 0.0 && sm.alpha <= 1.0)) throw ValidationError("config: smoothing alpha outside (0, 1]");
  }
  if (root.contains("uncertainty")) {
    const json& u = root.at("uncertainty");
    check_keys(u, "uncertainty",
               {"factor_source", "factor_file", "corrections", "level11_stats", "symmetric_through_level",
                "tolerance"});
    std::string source = "fit";
    read(u, "factor_source", source, "uncertainty");
    if (source == "fit") {
      c.factor_source = FactorSource::fit;
    } else if (source == "file") {
      c.factor_source = FactorSource::file;
    } else {
      throw ValidationError(fmt::format("config: unknown factor_source '{}'", source));
    }
    if (u.contains("factor_file")) c.factor_file = resolve(base_dir, u.at("factor_file").get<std::string>());
    read(u, "corrections", c.quantiles.corrections, "uncertainty");
    std::string l11 = "sum_members";
    read(u, "level11_stats", l11, "uncertainty");
    if (l11 == "sum_members") {
      c.quantiles.level11 = Level11Stats::sum_members;
    } else if (l11 == "direct_empirical") {
      c.quantiles.level11 = Level11Stats::direct_empirical;
    } else {
      throw ValidationError(fmt::format("config: unknown level11_stats '{}'", l11));
    }
    read(u, "symmetric_through_level", c.factor_fit.symmetric_through_level, "uncertainty");
    read(u, "tolerance", c.factor_fit.tolerance, "uncertainty");
  }
  if (c.factor_source == FactorSource::file && c.factor_file.empty()) {
    throw ValidationError("config: factor_source 'file' needs factor_file");
  }
  if (root.contains("splits")) {
    const json& s = root.at("splits");
    check_keys(s, "splits", {"use", "printed_ranges"});
    read(s, "use", c.splits, "splits");
    read(s, "printed_ranges", c.forecast.printed_split_ranges, "splits");
  }
  read(root, "training_window_days", c.forecast.training_window_days, "config");
  if (root.contains("metric")) {
    check_keys(root.at("metric"), "metric", {"trim_leading_zeros"});
    read(root.at("metric"), "trim_leading_zeros", c.forecast.metric.trim_leading_zeros, "metric");
  }
  read(root, "seed", c.seed, "config");
  if (root.contains("output")) c.output = resolve(base_dir, root.at("output").get<std::string>());
  read(root, "jobs", c.jobs, "config");
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream text;
  text << in.rdbuf();
  return parse_pipeline_config(text.str(), path.parent_path());
}

std::string config_snapshot(const PipelineConfig& c) {
  json root;
  root["data"] = {{"sales", c.data.sales.generic_string()},
                  {"calendar", c.data.calendar.generic_string()},
                  {"prices", c.data.prices.generic_string()}};
  root["features"] = to_text(c.forecast.features);
  json groups = json::array();
  for (const auto& g : c.forecast.groups) {
    json obj = {{"name", g.name}, {"kind", std::string(to_string(g.kind))}};
    if (g.kind == GroupKind::gbdt || g.kind == GroupKind::gbdt_per_store) obj["gbdt"] = gbdt_json(g.gbdt);
    if (!g.store_estimators.empty()) obj["store_estimators"] = g.store_estimators;
    if (g.kind == GroupKind::mlp) {
      obj["mlp"] = json::array();
      for (const auto& m : g.mlp) obj["mlp"].push_back(mlp_json(m));
    }
    groups.push_back(obj);
  }
  root["groups"] = groups;
  root["blend"] = {{"groups", c.forecast.blend.groups},
                   {"early", c.forecast.blend.early},
                   {"last", c.forecast.blend.last},
                   {"last_day_position", c.forecast.blend.last_day_position}};
  root["smoothing"] = {
      {"alpha", c.forecast.smoothing.alpha},
      {"mode", c.forecast.smoothing.mode == SmoothingMode::horizon ? "horizon" : "with_history"},
      {"history_days", c.forecast.smoothing.history_days},
      {"apply_to_point", c.forecast.smoothing.apply_to_point}};
  root["uncertainty"] = {
      {"factor_source", c.factor_source == FactorSource::fit ? "fit" : "file"},
      {"factor_file", c.factor_file.generic_string()},
      {"corrections", c.quantiles.corrections},
      {"level11_stats",
       c.quantiles.level11 == Level11Stats::sum_members ? "sum_members" : "direct_empirical"},
      {"symmetric_through_level", c.factor_fit.symmetric_through_level},
      {"tolerance", c.factor_fit.tolerance}};
  root["splits"] = {{"use", c.splits}, {"printed_ranges", c.forecast.printed_split_ranges}};
  root["training_window_days"] = c.forecast.training_window_days;
  root["metric"] = {{"trim_leading_zeros", c.forecast.metric.trim_leading_zeros}};
  root["seed"] = c.seed;
  json categories = json::object();
  for (const auto& [cat, n] : c.synthetic.categories) categories[cat] = n;
  root["synthetic"] = {{"stores", c.synthetic.stores},
                       {"categories", categories},
                       {"items_per_department", c.synthetic.items_per_department},
                       {"n_days", c.synthetic.n_days},
                       {"mean_rate", c.synthetic.mean_rate},
                       {"dispersion", c.synthetic.dispersion},
                       {"late_release_share", c.synthetic.late_release_share},
                       {"seed", c.synthetic.seed}};
  return root.dump(2) + "\n";
}

std::string config_hash(const PipelineConfig& config) {
  return fmt::format("{:016x}", Fnv1a().str(config_snapshot(config)).digest());
}

ForecastConfig seeded_forecast_config(const PipelineConfig& config) {
  ForecastConfig f = config.forecast;
  for (auto& g : f.groups) {
    g.gbdt.rng_seed += config.seed;
    for (auto& m : g.mlp) m.rng_seed += config.seed;
  }
  return f;
}

}  // namespace blendcast
