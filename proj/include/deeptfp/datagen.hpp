#pragma once

// Deterministic synthetic city: per-cell flows with a daily profile, weekend
// damping, neighbour diffusion, incident dips and observation noise.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deeptfp/calendar.hpp"
#include "deeptfp/series.hpp"

namespace deeptfp::datagen {

struct CityConfig {
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::size_t roads = 0;  // 0 means one road per cell
  calendar::YearMonth start{2016, 9};
  std::size_t months = 4;
  std::size_t days = 0;  // when nonzero, overrides months
  int interval_minutes = 15;
  std::uint64_t seed = 1;
  double base_flow = 100.0;
  double daily_amplitude = 1.0;
  double weekend_damping = 0.3;
  double diffusion = 0.1;
  double incident_rate = 0.0005;     // per cell and interval
  double incident_magnitude = 0.5;   // fraction of flow lost during an incident
  double incident_duration = 4.0;    // mean length in intervals
  double noise = 0.05;               // relative standard deviation

  /// 2501 roads on a 51 x 50 grid.
  static CityConfig full_scale();
  std::size_t road_count() const { return roads == 0 ? rows * cols : roads; }
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Mean-one daily shape at `hour` (fractional hour of day) before amplitude scaling.
double daily_profile(double hour);
/// 1 + amplitude * (profile - 1), never negative.
double daily_factor(const CityConfig& config, double hour);
/// 1 on weekdays, 1 - weekend_damping on Saturday and Sunday.
double weekly_factor(const CityConfig& config, unsigned weekday);

struct City {
  series::FlowSeries series;
  series::RoadGridMap map;
  std::vector<double> cell_factor;  // per flat cell, U[0.5, 1.5]
};

/// Road i occupies flat cell i (row-major); cells without a road stay at 0.
City generate(const CityConfig& config);

/// Writes `flows.csv` (timestamp,road_id,flow) and `gridmap.csv`
/// (road_id,row,col) into `dir`. Every road must be alone in its cell, cells
/// without a road must be zero, and all flows must be integers.
void export_csv(const series::FlowSeries& series, const series::RoadGridMap& map,
                const std::filesystem::path& dir);

}  // namespace deeptfp::datagen
