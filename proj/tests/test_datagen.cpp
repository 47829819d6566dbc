#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deeptfp/datagen.hpp"
#include "doctest.h"

using namespace deeptfp::datagen;
using deeptfp::calendar::YearMonth;

namespace {

CityConfig small_city() {
  CityConfig c;
  c.rows = c.cols = 4;
  c.months = 2;
  return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("deeptfp_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Sample autocorrelation of x at the given lag, each sum averaged over its own terms.
double acf(const std::vector<double>& x, std::size_t lag) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    if (i + lag < x.size()) num += (x[i] - mean) * (x[i + lag] - mean);
  }
  return (num / double(x.size() - lag)) / (den / double(x.size()));
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("noiseless city repeats daily within a weekday class") {
  CityConfig c = small_city();
  c.noise = 0;
  c.incident_rate = 0;
  c.diffusion = 0;
  const auto city = generate(c);
  const auto& s = city.series;
  for (std::size_t t = 0; t + 96 < s.frame_count(); ++t) {
    const auto w0 = deeptfp::calendar::weekday_of(s.timestamp(t));
    const auto w1 = deeptfp::calendar::weekday_of(s.timestamp(t + 96));
    if (weekly_factor(c, w0) != weekly_factor(c, w1)) continue;
    const auto a = s.frame(t), b = s.frame(t + 96);
    REQUIRE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("same seed gives the same city and a different seed does not") {
  const auto a = generate(small_city());
  const auto b = generate(small_city());
  CHECK(a.series == b.series);
  CHECK(a.map == b.map);
  CityConfig other = small_city();
  other.seed = 2;
  CHECK_FALSE(generate(other).series == a.series);
}

TEST_CASE("flows are non-negative integers and every road has its own cell") {
  const auto city = generate(small_city());
  for (double v : city.series.values) {
    CHECK(v >= 0);
    CHECK(v == std::floor(v));
  }
  for (auto n : city.map.roads_per_cell()) CHECK(n == 1);
  CHECK(city.map.road_count() == 16);
}

TEST_CASE("weekly grid mean matches the analytic expectation within 2%") {
  CityConfig c = small_city();
  c.rows = c.cols = 16;
  const auto city = generate(c);
  const auto& s = city.series;
  double mean_factor = 0;
  for (double f : city.cell_factor) mean_factor += f;
  mean_factor /= double(city.cell_factor.size());
  double mean_daily = 0;
  for (int i = 0; i < 96; ++i) mean_daily += daily_factor(c, i * 0.25);
  mean_daily /= 96;
  const double mean_weekly = 1.0 - 2.0 / 7.0 * c.weekend_damping;
  const double expected = c.base_flow * mean_factor * mean_daily * mean_weekly;
  for (std::size_t week = 0; (week + 1) * 672 <= s.frame_count(); ++week) {
    double sum = 0;
    for (std::size_t t = week * 672; t < (week + 1) * 672; ++t)
      for (double v : s.frame(t)) sum += v;
    const double observed = sum / (672.0 * double(s.cells()));
    CHECK(std::abs(observed / expected - 1.0) < 0.02);
  }
}

TEST_CASE("noiseless autocorrelation peaks at one day and one week") {
  CityConfig c = small_city();
  c.noise = 0;
  c.incident_rate = 0;
  const auto s = generate(c).series;
  std::vector<double> avg;
  for (std::size_t t = 0; t < s.frame_count(); ++t) {
    double sum = 0;
    for (double v : s.frame(t)) sum += v;
    avg.push_back(sum / double(s.cells()));
  }
  auto local_max = [&](std::size_t lag, std::size_t radius) {
    for (std::size_t l = lag - radius; l <= lag + radius; ++l)
      if (l != lag && acf(avg, l) >= acf(avg, lag)) return false;
    return true;
  };
  CHECK(local_max(96, 40));
  CHECK(local_max(672, 90));
  CHECK(acf(avg, 672) > acf(avg, 96));
}

TEST_CASE("export_csv round trip and file layout") {
  const auto dir = scratch_dir("datagen_export");
  CityConfig c = small_city();
  c.rows = 1;
  c.cols = 2;
  c.start = YearMonth{2016, 11};
  const auto city = generate(c);
  export_csv(city.series, city.map, dir);
  const auto flows = slurp(dir / "flows.csv");
  CHECK(flows.rfind("timestamp,road_id,flow\n", 0) == 0);
  const auto map = deeptfp::series::RoadGridMap::load_csv(dir / "gridmap.csv");
  CHECK(map == city.map);
  const auto back = deeptfp::series::load_csv(dir / "flows.csv", map);
  CHECK(back == city.series);

  std::size_t december_rows = 0;
  std::istringstream lines(flows);
  for (std::string line; std::getline(lines, line);)
    if (line.rfind("2016-12-", 0) == 0 && line.find(",road-0001,") != std::string::npos) ++december_rows;
  CHECK(december_rows == 2976);
  std::filesystem::remove_all(dir);
}

TEST_CASE("round trip of a hand-built 2-cell, 4-interval series") {
  const auto dir = scratch_dir("datagen_tiny");
  deeptfp::series::FlowSeries s;
  s.start = YearMonth{2016, 12}.start();
  s.rows = 1;
  s.cols = 2;
  s.values = {3, 0, 7, 12, 0, 5, 9, 9};
  s.filled.assign(8, 0);
  deeptfp::series::RoadGridMap map(1, 2);
  map.assign("north", {0, 0});
  map.assign("south", {0, 1});
  export_csv(s, map, dir);
  CHECK(deeptfp::series::load_csv(dir / "flows.csv", map) == s);
  CHECK(slurp(dir / "flows.csv").substr(0, 57) ==
        "timestamp,road_id,flow\n2016-12-01T00:00:00Z,north,3\n2016-");
  s.values[1] = 0.5;
  CHECK_THROWS_AS(export_csv(s, map, dir), deeptfp::DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation names the key") {
  CityConfig c;
  c.diffusion = 0.9;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("diffusion"), deeptfp::ConfigError);
  c = {};
  c.months = 1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("months"), deeptfp::ConfigError);
  c.days = 14;
  CHECK_NOTHROW(c.validate());
  c.rows = c.cols = 2;
  CHECK(deeptfp::datagen::generate(c).series.frame_count() == 14 * 96);
  c = {};
  c.noise = -1;
  CHECK_THROWS_AS(c.validate(), deeptfp::ConfigError);
  const auto full = CityConfig::full_scale();
  CHECK(full.road_count() == 2501);
  CHECK(full.rows * full.cols == 2550);
  CHECK_NOTHROW(full.validate());
}

}  // TEST_SUITE
