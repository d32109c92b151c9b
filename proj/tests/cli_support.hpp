#pragma once

// Helpers for driving the command-line tool from tests.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testing {

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code = -1;
  std::string err;
};

inline CliResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const auto err_path = scratch / "stderr.txt";
  const std::string cmd = std::string(BLENDCAST_CLI) + " " + args + " 2> \"" + err_path.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

// A small but complete pipeline config with data under `dir`.
inline std::filesystem::path write_small_config(const std::filesystem::path& dir, const std::string& output = "out") {
  std::filesystem::create_directories(dir);
  const auto path = dir / "small.json";
  std::ofstream(path) << R"({
  "data": {"sales": "data/sales_train_evaluation.csv", "calendar": "data/calendar.csv", "prices": "data/sell_prices.csv"},
  "features": ")" << BLENDCAST_CONFIGS << R"(/features.cfg",
  "synthetic": {"stores": ["CA_1", "TX_1"], "n_days": 420, "seed": 5},
  "groups": [
    {"name": "lgb_nas", "kind": "gbdt_per_store", "gbdt": {"n_estimators": 20, "rng_seed": 11}},
    {"name": "lgb_cos", "kind": "gbdt", "gbdt": {"n_estimators": 20, "subsample": 0.5, "rng_seed": 12}},
    {"name": "keras_nas", "kind": "mlp", "mlp": [{"preset": "keras0", "epochs": 2, "hidden": [16]}]},
    {"name": "fastai_cos", "kind": "mlp", "mlp": [{"preset": "fastai", "epochs": 2, "hidden": [16], "rng_seed": 14}]}
  ],
  "blend": {"groups": ["lgb_nas", "lgb_cos", "keras_nas", "fastai_cos"],
            "early": [3.5, 1, 1, 0.5], "last": [3, 0.5, 0, 1.5]},
  "seed": 3,
  "output": ")" << output << R"(",
  "jobs": 2
})";
  return path;
}

}  // namespace testing
