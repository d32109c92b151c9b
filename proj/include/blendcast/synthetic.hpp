#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blendcast/data_ingest.hpp"

namespace blendcast {

// Knobs of the bundled M5-shaped panel generator.
struct SyntheticConfig {
  std::vector<std::string> stores = {"CA_1", "CA_2", "TX_1", "WI_1"};
  // category -> departments; item counts are per department
  std::vector<std::pair<std::string, int>> categories = {{"HOBBIES", 1}, {"HOUSEHOLD", 1}, {"FOODS", 2}};
  int items_per_department = 5;
  int n_days = 800;
  double mean_rate = 0.55;       // average daily rate before the noise mixture
  double dispersion = 1.5;       // gamma shape of the per-day noise; lower = burstier
  double late_release_share = 0.3;
  std::uint64_t seed = 42;
};

struct SyntheticData {
  SalesWide sales;
  std::vector<CalendarRow> calendar;  // n_days + 28 days
  std::vector<PriceRow> prices;
};

SyntheticData generate_synthetic(const SyntheticConfig& config);
PanelDataset to_panel(const SyntheticData& data);

std::string sales_csv(const SalesWide& sales);
std::string calendar_csv(const std::vector<CalendarRow>& calendar);
std::string prices_csv(const std::vector<PriceRow>& prices);

// Writes the three files (sales, calendar, prices) in M5 layout.
void write_synthetic(const SyntheticData& data, const DataPaths& paths);

}  // namespace blendcast
