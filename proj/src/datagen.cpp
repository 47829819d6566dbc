#include "deeptfp/datagen.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "deeptfp/error.hpp"

namespace deeptfp::datagen {

namespace {

double bump(double hour, double centre, double width) {
  const double d = (hour - centre) / width;
  return std::exp(-0.5 * d * d);
}

double raw_profile(double hour) {
  return 0.25 + bump(hour, 8.0, 1.5) + 0.9 * bump(hour, 17.5, 2.0);
}

double profile_mean() {
  static const double mean = [] {
    constexpr int kSteps = 24 * 60;
    double s = 0.0;
    for (int m = 0; m < kSteps; ++m) s += raw_profile(m / 60.0);
    return s / kSteps;
  }();
  return mean;
}

void require(bool ok, const char* key, const std::string& rule) {
  if (!ok) throw ConfigError(std::string(key) + " " + rule);
}

std::string road_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "road-%04zu", i);
  return buf;
}

}  // namespace

CityConfig CityConfig::full_scale() {
  CityConfig c;
  c.rows = 51;
  c.cols = 50;
  c.roads = 2501;
  return c;
}

void CityConfig::validate() const {
  require(rows >= 1, "rows", "must be >= 1");
  require(cols >= 1, "cols", "must be >= 1");
  require(road_count() <= rows * cols, "roads", "must not exceed rows * cols");
  require(days > 0 || months >= 2, "months", "must be >= 2 (train and test)");
  require(interval_minutes > 0 && 1440 % interval_minutes == 0, "interval_minutes",
          "must divide a day");
  require(start.month >= 1 && start.month <= 12, "start", "month must be 1..12");
  require(base_flow >= 0, "base_flow", "must be >= 0");
  require(daily_amplitude >= 0, "daily_amplitude", "must be >= 0");
  require(weekend_damping >= 0 && weekend_damping <= 1, "weekend_damping", "must lie in [0, 1]");
  require(diffusion >= 0 && diffusion <= 0.25, "diffusion", "must lie in [0, 0.25]");
  require(incident_rate >= 0 && incident_rate <= 1, "incident_rate", "must lie in [0, 1]");
  require(incident_magnitude >= 0 && incident_magnitude <= 1, "incident_magnitude",
          "must lie in [0, 1]");
  require(incident_duration >= 1, "incident_duration", "must be >= 1");
  require(noise >= 0, "noise", "must be >= 0");
}

double daily_profile(double hour) { return raw_profile(hour) / profile_mean(); }

double daily_factor(const CityConfig& config, double hour) {
  return std::max(0.0, 1.0 + config.daily_amplitude * (daily_profile(hour) - 1.0));
}

double weekly_factor(const CityConfig& config, unsigned weekday) {
  return (weekday == 0 || weekday == 6) ? 1.0 - config.weekend_damping : 1.0;
}

City generate(const CityConfig& config) {
  config.validate();
  const std::size_t rows = config.rows, cols = config.cols, cells = rows * cols;
  City city;
  city.map = series::RoadGridMap(rows, cols);
  for (std::size_t i = 0; i < config.road_count(); ++i) {
    city.map.assign(road_name(i), {i / cols, i % cols});
  }
  std::vector<std::uint8_t> has_road(cells, 0);
  for (std::size_t i = 0; i < config.road_count(); ++i) has_road[i] = 1;

  auto& s = city.series;
  s.interval_minutes = config.interval_minutes;
  s.start = config.start.start();
  s.rows = rows;
  s.cols = cols;
  calendar::YearMonth end = config.start;
  for (std::size_t m = 0; m < config.months; ++m) end = end.next();
  const calendar::EpochSeconds span =
      config.days > 0 ? static_cast<calendar::EpochSeconds>(config.days) * 86400 : end.start() - s.start;
  const std::size_t frames = static_cast<std::size_t>(span / s.interval_seconds());
  s.values.assign(frames * cells, 0.0);
  s.filled.assign(frames * cells, 0);

  std::seed_seq seq{config.seed, std::uint64_t{0x6369747921}};
  std::vector<std::uint64_t> seeds(3);
  seq.generate(seeds.begin(), seeds.end());
  std::mt19937_64 factor_rng(seeds[0]), incident_rng(seeds[1]), noise_rng(seeds[2]);

  std::uniform_real_distribution<double> factor_dist(0.5, 1.5);
  city.cell_factor.resize(cells);
  for (auto& f : city.cell_factor) f = factor_dist(factor_rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::geometric_distribution<int> extra_length(1.0 / config.incident_duration);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<int> incident_left(cells, 0);
  std::vector<double> mean(cells), smoothed(cells);

  for (std::size_t t = 0; t < frames; ++t) {
    const auto ts = s.timestamp(t);
    const double hour = static_cast<double>(ts % 86400) / 3600.0;
    const double level = config.base_flow * daily_factor(config, hour) *
                         weekly_factor(config, calendar::weekday_of(ts));
    for (std::size_t c = 0; c < cells; ++c) {
      if (incident_left[c] == 0 && config.incident_rate > 0 && unit(incident_rng) < config.incident_rate) {
        incident_left[c] = 1 + extra_length(incident_rng);
      }
      double m = level * city.cell_factor[c];
      if (incident_left[c] > 0) {
        m *= 1.0 - config.incident_magnitude;
        --incident_left[c];
      }
      mean[c] = m;
    }
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < cols; ++k) {
        const std::size_t c = r * cols + k;
        double flux = 0.0;
        if (r > 0) flux += mean[c - cols] - mean[c];
        if (r + 1 < rows) flux += mean[c + cols] - mean[c];
        if (k > 0) flux += mean[c - 1] - mean[c];
        if (k + 1 < cols) flux += mean[c + 1] - mean[c];
        smoothed[c] = mean[c] + config.diffusion * flux;
      }
    double* frame = s.values.data() + t * cells;
    for (std::size_t c = 0; c < cells; ++c) {
      const double z = gauss(noise_rng);
      if (!has_road[c]) continue;
      frame[c] = std::max(0.0, std::round(smoothed[c] * (1.0 + config.noise * z)));
    }
  }
  return city;
}

void export_csv(const series::FlowSeries& s, const series::RoadGridMap& map,
                const std::filesystem::path& dir) {
  s.validate();
  if (map.rows() > s.rows || map.cols() > s.cols) {
    throw DataError("grid map extends beyond the series grid");
  }
  const auto shared = map.roads_per_cell();
  std::vector<std::size_t> road_cell(map.road_count());
  std::vector<std::uint8_t> covered(s.cells(), 0);
  for (std::size_t i = 0; i < map.road_count(); ++i) {
    const auto cell = map.cell_of(i);
    road_cell[i] = cell.row * s.cols + cell.col;
    if (shared[map.flat_cell(i)] > 1) throw DataError("cannot export cells shared by several roads");
    covered[road_cell[i]] = 1;
  }
  for (std::size_t t = 0; t < s.frame_count(); ++t) {
    const auto f = s.frame(t);
    for (std::size_t c = 0; c < f.size(); ++c) {
      if (f[c] != std::floor(f[c]) || f[c] < 0) {
        throw DataError("flows must be non-negative integers to export");
      }
      if (!covered[c] && f[c] != 0) throw DataError("non-zero flow in a cell without a road");
    }
  }

  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "gridmap.csv", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "gridmap.csv").string());
    map.write_csv(out);
    if (!out) throw DataError("error writing " + (dir / "gridmap.csv").string());
  }
  std::ofstream out(dir / "flows.csv", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "flows.csv").string());
  std::string buf = "timestamp,road_id,flow\n";
  char num[32];
  for (std::size_t t = 0; t < s.frame_count(); ++t) {
    const std::string ts = calendar::format_iso8601(s.timestamp(t));
    const auto f = s.frame(t);
    for (std::size_t i = 0; i < map.road_count(); ++i) {
      buf += ts;
      buf += ',';
      buf += map.roads()[i];
      buf += ',';
      const auto [end, ec] = std::to_chars(num, num + sizeof num, static_cast<long long>(f[road_cell[i]]));
      buf.append(num, end);
      buf += '\n';
    }
    if (buf.size() > (1u << 20)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("error writing " + (dir / "flows.csv").string());
}

}  // namespace deeptfp::datagen
