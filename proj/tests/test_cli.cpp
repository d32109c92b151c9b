#include <doctest.h>

#include "cli_support.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("blendcast_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path only_run_dir(const fs::path& out) {
  fs::path found;
  for (const auto& e : fs::directory_iterator(out)) found = e.path();
  return found;
}

}  // namespace

TEST_CASE("usage and validation errors exit with 1") {
  const fs::path dir = scratch("errors");
  CHECK(testing::run_cli("", dir).code == 1);
  CHECK(testing::run_cli("frobnicate", dir).code == 1);
  const auto missing = testing::run_cli("prepare --config " + (dir / "none.json").string(), dir);
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
  std::ofstream(dir / "bad.json") << "{\"groups\": 3";
  CHECK(testing::run_cli("prepare -c " + (dir / "bad.json").string(), dir).code == 1);
}

TEST_CASE("prepare caches, detects tampering and evaluates") {
  const fs::path dir = scratch("prepare");
  const fs::path config = testing::write_small_config(dir);
  REQUIRE(testing::run_cli("gen-synthetic -c " + config.string(), dir).code == 0);
  CHECK(fs::exists(dir / "data" / "sales_train_evaluation.csv"));

  const auto first = testing::run_cli("prepare -c " + config.string(), dir);
  REQUIRE(first.code == 0);
  const fs::path run = only_run_dir(dir / "out");
  CHECK(fs::exists(run / "manifest.json"));
  CHECK(fs::exists(run / "weights.csv"));
  CHECK(testing::slurp(run / "manifest.json").find("\"seed\": 3") != std::string::npos);

  const auto again = testing::run_cli("prepare -c " + config.string(), dir);
  CHECK(again.code == 0);
  CHECK(again.err.find("cache hit") != std::string::npos);

  const fs::path cache = run / "cache" / "train_1_420.bcfm";
  REQUIRE(fs::exists(cache));
  {
    std::fstream f(cache, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(300);
    f.put('\x01');
    f.put('\x02');
  }
  const auto tampered = testing::run_cli("prepare -c " + config.string(), dir);
  CHECK(tampered.code == 0);
  CHECK(tampered.err.find("rebuilding") != std::string::npos);

  std::ofstream(dir / "empty.csv") << "";
  const auto empty = testing::run_cli("evaluate -c " + config.string() + " -f " + (dir / "empty.csv").string(), dir);
  CHECK(empty.code == 1);
  CHECK(empty.err.find("error:") != std::string::npos);
}

TEST_CASE("quantiles before forecast is a validation error") {
  const fs::path dir = scratch("order");
  const fs::path config = testing::write_small_config(dir);
  REQUIRE(testing::run_cli("gen-synthetic -c " + config.string(), dir).code == 0);
  CHECK(testing::run_cli("quantiles -c " + config.string(), dir).code == 1);
}

TEST_CASE("backtest, forecast, quantiles and evaluate") {
  const fs::path dir = scratch("pipeline");
  const fs::path config = testing::write_small_config(dir);
  REQUIRE(testing::run_cli("gen-synthetic -c " + config.string(), dir).code == 0);
  REQUIRE(testing::run_cli("backtest -c " + config.string() + " > /dev/null", dir).code == 0);
  REQUIRE(testing::run_cli("forecast -c " + config.string(), dir).code == 0);
  REQUIRE(testing::run_cli("quantiles -c " + config.string(), dir).code == 0);
  const fs::path run = only_run_dir(dir / "out");
  const std::string forecast = testing::slurp(run / "forecast.csv");
  CHECK(std::count(forecast.begin(), forecast.end(), '\n') == 1 + 2 * 20);
  CHECK(forecast.rfind("id,F1,", 0) == 0);
  for (const char* f : {"backtest.csv", "backtest_levels.csv", "split1_median.csv", "factors.csv",
                        "quantiles.csv", "models.bin", "median.csv", "groups/keras_nas.csv"}) {
    CHECK_MESSAGE(fs::exists(run / f), f);
  }
  const auto eval = testing::run_cli(
      "evaluate -c " + config.string() + " -f " + (run / "split1_median.csv").string() + " --first-day 393 > " +
          (dir / "eval.txt").string(),
      dir);
  CHECK(eval.code == 0);
  CHECK(testing::slurp(dir / "eval.txt").rfind("WRMSSE ", 0) == 0);
}
