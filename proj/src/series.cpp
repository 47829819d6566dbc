#include "deeptfp/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <string_view>

#include "deeptfp/error.hpp"

namespace deeptfp::series {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    fields.push_back(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <class Int>
bool parse_int(std::string_view text, Int& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

}  // namespace

// ---------------------------------------------------------------------------
// RoadGridMap

RoadGridMap::RoadGridMap(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw DataError("grid map needs positive rows and cols");
}

void RoadGridMap::assign(const std::string& road_id, Cell cell) {
  if (road_id.empty()) throw DataError("empty road_id");
  if (cell.row >= rows_ || cell.col >= cols_) {
    throw DataError("road '" + road_id + "' maps outside the " + std::to_string(rows_) + "x" +
                    std::to_string(cols_) + " grid");
  }
  if (!index_.emplace(road_id, roads_.size()).second) {
    throw DataError("road '" + road_id + "' is mapped more than once");
  }
  roads_.push_back(road_id);
  cells_.push_back(cell);
}

std::optional<std::size_t> RoadGridMap::road_index(const std::string& road_id) const {
  const auto it = index_.find(road_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> RoadGridMap::roads_per_cell() const {
  std::vector<std::size_t> counts(cells(), 0);
  for (std::size_t r = 0; r < roads_.size(); ++r) ++counts[flat_cell(r)];
  return counts;
}

RoadGridMap RoadGridMap::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open grid map '" + path.string() + "'");
  return read_csv(in);
}

RoadGridMap RoadGridMap::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("grid map is empty");
  strip_cr(line);
  if (line != "road_id,row,col") {
    throw DataError("grid map header must be 'road_id,row,col', got '" + line + "'");
  }
  std::vector<std::pair<std::string, Cell>> rows;
  std::size_t max_row = 0, max_col = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_fields(line);
    Cell cell;
    if (f.size() != 3 || !parse_int(f[1], cell.row) || !parse_int(f[2], cell.col)) {
      throw DataError("malformed grid map row '" + line + "'" + at_line(lineno));
    }
    max_row = std::max(max_row, cell.row);
    max_col = std::max(max_col, cell.col);
    rows.emplace_back(std::string(f[0]), cell);
  }
  if (rows.empty()) throw DataError("grid map has no roads");
  RoadGridMap map(max_row + 1, max_col + 1);
  for (const auto& [id, cell] : rows) map.assign(id, cell);
  return map;
}

void RoadGridMap::write_csv(std::ostream& out) const {
  out << "road_id,row,col\n";
  for (std::size_t r = 0; r < roads_.size(); ++r) {
    out << roads_[r] << ',' << cells_[r].row << ',' << cells_[r].col << '\n';
  }
}

// ---------------------------------------------------------------------------
// FlowSeries

std::optional<std::size_t> FlowSeries::index_of(calendar::EpochSeconds ts) const {
  if (ts < start) return std::nullopt;
  const auto idx = static_cast<std::size_t>((ts - start) / interval_seconds());
  if (idx >= frame_count()) return std::nullopt;
  return idx;
}

void FlowSeries::validate() const {
  if (interval_minutes <= 0) throw DataError("interval_minutes must be positive");
  if (cells() == 0) throw DataError("series has an empty grid");
  if (values.size() % cells() != 0) throw DataError("series values are not whole frames");
  if (!filled.empty() && filled.size() != values.size()) {
    throw DataError("quality mask does not match series size");
  }
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("series contains a negative flow");
  }
}

FlowSeries load_csv(const std::filesystem::path& path, const RoadGridMap& map,
                    int interval_minutes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open flow file '" + path.string() + "'");
  return read_csv(in, map, interval_minutes);
}

FlowSeries read_csv(std::istream& in, const RoadGridMap& map, int interval_minutes) {
  if (interval_minutes <= 0) throw DataError("interval_minutes must be positive");
  if (map.road_count() == 0) throw DataError("grid map has no roads");
  const calendar::EpochSeconds step = interval_minutes * 60LL;

  std::string line;
  if (!std::getline(in, line)) throw DataError("no observations");
  strip_cr(line);
  if (line != "timestamp,road_id,flow") {
    throw DataError("flow file header must be 'timestamp,road_id,flow', got '" + line + "'");
  }

  struct Obs {
    std::size_t frame;
    std::size_t road;
    double flow;
  };
  std::vector<Obs> observations;
  std::set<std::pair<std::size_t, std::size_t>> seen_in_frame;
  calendar::EpochSeconds start = 0, last_ts = 0;
  std::string last_ts_text;
  std::size_t lineno = 1, current_frame = 0;
  bool have_first = false;

  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 3) throw DataError("expected 3 fields" + at_line(lineno));

    calendar::EpochSeconds ts = last_ts;
    if (!have_first || f[0] != last_ts_text) {
      try {
        ts = calendar::parse_iso8601(f[0]);
      } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + at_line(lineno));
      }
      if (!have_first) {
        start = ts;
        have_first = true;
      } else if (ts < last_ts) {
        throw DataError("out-of-order timestamp " + std::string(f[0]) + at_line(lineno));
      }
      if ((ts - start) % step != 0) {
        throw DataError("timestamp " + std::string(f[0]) + " is not aligned to the " +
                        std::to_string(interval_minutes) + "-minute interval" + at_line(lineno));
      }
      const auto frame = static_cast<std::size_t>((ts - start) / step);
      if (frame != current_frame) seen_in_frame.clear();
      last_ts = ts;
      last_ts_text.assign(f[0]);
      current_frame = frame;
    }

    const auto road = map.road_index(std::string(f[1]));
    if (!road) throw DataError("unknown road_id '" + std::string(f[1]) + "'" + at_line(lineno));
    std::int64_t flow = 0;
    if (!f[2].empty() && f[2][0] == '-') {
      throw DataError("negative flow " + std::string(f[2]) + at_line(lineno));
    }
    if (!parse_int(f[2], flow)) {
      throw DataError("flow must be a non-negative integer, got '" + std::string(f[2]) + "'" +
                      at_line(lineno));
    }
    if (!seen_in_frame.emplace(current_frame, *road).second) {
      throw DataError("duplicate timestamp " + std::string(f[0]) + " for road '" +
                      std::string(f[1]) + "'" + at_line(lineno));
    }
    observations.push_back({current_frame, *road, static_cast<double>(flow)});
  }
  if (observations.empty()) throw DataError("no observations");

  const std::size_t frames = observations.back().frame + 1;
  const std::size_t roads = map.road_count();
  const double missing = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_road(frames * roads, missing);
  for (const auto& o : observations) per_road[o.frame * roads + o.road] = o.flow;

  FlowSeries series;
  series.interval_minutes = interval_minutes;
  series.start = start;
  series.rows = map.rows();
  series.cols = map.cols();
  series.values.assign(frames * series.cells(), 0.0);
  series.filled.assign(frames * series.cells(), 0);

  for (std::size_t r = 0; r < roads; ++r) {
    // Leading gaps take the first observation, later gaps the previous one.
    double carry = missing;
    for (std::size_t t = 0; t < frames && std::isnan(carry); ++t) carry = per_road[t * roads + r];
    if (std::isnan(carry)) throw DataError("road '" + map.roads()[r] + "' has no observations");
    const std::size_t cell = map.flat_cell(r);
    for (std::size_t t = 0; t < frames; ++t) {
      const double v = per_road[t * roads + r];
      const std::size_t idx = t * series.cells() + cell;
      if (std::isnan(v)) {
        series.filled[idx] = 1;
      } else {
        carry = v;
      }
      series.values[idx] += carry;
    }
  }
  return series;
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer::Normalizer(double min, double max) : min_(min), max_(max) {
  if (!(max > min)) {
    throw DataError("normalizer needs max > min, got [" + std::to_string(min) + ", " +
                    std::to_string(max) + "]");
  }
}

Normalizer Normalizer::fit(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot fit a normalizer on no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return Normalizer(*lo, *hi);
}

// ---------------------------------------------------------------------------
// Windows and instances

void WindowSpec::validate() const {
  if (closeness < 1 || period_len < 1 || trend_len < 1) {
    throw ConfigError("window lengths l_c, l_p, l_q must be >= 1");
  }
  if (period < 1) throw ConfigError("period p must be >= 1");
  if (trend <= period) throw ConfigError("trend span q must be greater than period p");
}

std::size_t WindowSpec::first_target() const {
  return std::max({closeness, period_len * period, trend_len * trend});
}

TrainingInstance TrainingInstance::at(const WindowSpec& spec, std::size_t t) {
  if (t < spec.first_target()) {
    throw HistoryError("target index " + std::to_string(t) + " has incomplete windows");
  }
  TrainingInstance inst;
  inst.t = t;
  for (std::size_t i = spec.closeness; i >= 1; --i) inst.closeness.push_back(t - i);
  for (std::size_t i = spec.period_len; i >= 1; --i) inst.period.push_back(t - i * spec.period);
  for (std::size_t i = spec.trend_len; i >= 1; --i) inst.trend.push_back(t - i * spec.trend);
  return inst;
}

Dataset::Dataset(std::shared_ptr<const FlowSeries> normalized, Normalizer normalizer,
                 WindowSpec spec, std::vector<TrainingInstance> instances)
    : series_(std::move(normalized)),
      normalizer_(normalizer),
      spec_(spec),
      instances_(std::move(instances)) {}

tensor::Tensor Dataset::stack(std::span<const std::size_t> frames) const {
  const std::size_t cells = series_->cells();
  std::vector<double> data(frames.size() * cells);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto f = series_->frame(frames[i]);
    std::copy(f.begin(), f.end(), data.begin() + i * cells);
  }
  return tensor::Tensor::from_data({frames.size(), series_->rows, series_->cols},
                                   std::move(data));
}

tensor::Tensor Dataset::frame(std::size_t t) const {
  const auto f = series_->frame(t);
  return tensor::Tensor::from_data({series_->rows, series_->cols},
                                   std::vector<double>(f.begin(), f.end()));
}

Dataset Dataset::with_instances(std::vector<TrainingInstance> instances) const {
  return Dataset(series_, normalizer_, spec_, std::move(instances));
}

Dataset Dataset::from_target(std::size_t min_t) const {
  std::vector<TrainingInstance> kept;
  for (const auto& inst : instances_)
    if (inst.t >= min_t) kept.push_back(inst);
  return with_instances(std::move(kept));
}

std::pair<Dataset, Dataset> Dataset::split_validation(double fraction) const {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("validation fraction must be in [0, 1)");
  }
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * double(instances_.size())));
  const std::size_t n_train = instances_.size() - n_val;
  std::vector<TrainingInstance> train(instances_.begin(), instances_.begin() + n_train);
  std::vector<TrainingInstance> val(instances_.begin() + n_train, instances_.end());
  for (auto& i : train) i.split = Split::kTrain;
  for (auto& i : val) i.split = Split::kValidation;
  return {with_instances(std::move(train)), with_instances(std::move(val))};
}

FlowSeries normalize(const FlowSeries& series, const Normalizer& normalizer) {
  FlowSeries out = series;
  for (double& v : out.values) v = normalizer.transform(v);
  return out;
}

Dataset build_instances(const FlowSeries& series, const WindowSpec& spec,
                        std::optional<Normalizer> normalizer) {
  spec.validate();
  const std::size_t n = series.frame_count();
  const std::size_t first = spec.first_target();
  if (n <= first) {
    throw DataError("series of " + std::to_string(n) + " frames is too short: the first target " +
                    "needs " + std::to_string(first + 1) + " frames");
  }
  const Normalizer norm = normalizer ? *normalizer : Normalizer::fit(series.values);
  auto normalized = std::make_shared<const FlowSeries>(normalize(series, norm));
  std::vector<TrainingInstance> instances;
  instances.reserve(n - first);
  for (std::size_t t = first; t < n; ++t) instances.push_back(TrainingInstance::at(spec, t));
  return Dataset(std::move(normalized), norm, spec, std::move(instances));
}

MonthSplit split_by_month(const FlowSeries& series,
                          const std::vector<calendar::YearMonth>& train_months,
                          calendar::YearMonth test_month, const WindowSpec& spec) {
  if (train_months.empty()) throw ConfigError("at least one training month is required");
  for (const auto& m : train_months) {
    if (m == test_month) {
      throw ConfigError("month " + m.str() + " is both a training and the test month");
    }
    if (m > test_month) {
      throw ConfigError("training month " + m.str() + " comes after test month " +
                        test_month.str());
    }
  }
  const std::size_t n = series.frame_count();
  std::vector<calendar::YearMonth> months(n);
  for (std::size_t t = 0; t < n; ++t) months[t] = series.month_of(t);
  auto in_train = [&](const calendar::YearMonth& m) {
    return std::find(train_months.begin(), train_months.end(), m) != train_months.end();
  };
  for (const auto& m : train_months) {
    if (std::find(months.begin(), months.end(), m) == months.end()) {
      throw DataError("training month " + m.str() + " is not covered by the series");
    }
  }
  if (std::find(months.begin(), months.end(), test_month) == months.end()) {
    throw DataError("test month " + test_month.str() + " is not covered by the series");
  }

  std::vector<double> train_values;
  for (std::size_t t = 0; t < n; ++t) {
    if (!in_train(months[t])) continue;
    const auto f = series.frame(t);
    train_values.insert(train_values.end(), f.begin(), f.end());
  }
  const Dataset all = build_instances(series, spec, Normalizer::fit(train_values));

  std::vector<TrainingInstance> train, test;
  for (auto inst : all.instances()) {
    const auto& m = months[inst.t];
    if (in_train(m)) {
      inst.split = Split::kTrain;
      train.push_back(std::move(inst));
    } else if (m == test_month) {
      inst.split = Split::kTest;
      test.push_back(std::move(inst));
    }
  }
  if (train.empty()) throw DataError("no training instances have complete windows");
  if (test.empty()) throw DataError("no test instances have complete windows");
  return {all.with_instances(std::move(train)), all.with_instances(std::move(test))};
}

}  // namespace deeptfp::series
