#pragma once

// Citywide flow series, road-to-grid mapping, normalization and construction
// of (closeness, period, trend) training instances.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "deeptfp/calendar.hpp"
#include "deeptfp/tensor.hpp"

namespace deeptfp::series {

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Cell&) const = default;
};

/// Assignment of road identifiers to cells of a rows x cols grid. Several
/// roads may share a cell; their flows are summed.
class RoadGridMap {
 public:
  RoadGridMap() = default;
  RoadGridMap(std::size_t rows, std::size_t cols);

  /// Reads `road_id,row,col`. The grid extent is the bounding box of the
  /// assignments.
  static RoadGridMap load_csv(const std::filesystem::path& path);
  static RoadGridMap read_csv(std::istream& in);
  void write_csv(std::ostream& out) const;

  void assign(const std::string& road_id, Cell cell);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t cells() const { return rows_ * cols_; }
  std::size_t road_count() const { return roads_.size(); }
  /// Roads in insertion order.
  const std::vector<std::string>& roads() const { return roads_; }
  std::optional<std::size_t> road_index(const std::string& road_id) const;
  Cell cell_of(std::size_t road_index) const { return cells_[road_index]; }
  std::size_t flat_cell(std::size_t road_index) const {
    return cells_[road_index].row * cols_ + cells_[road_index].col;
  }
  /// Number of roads sharing each flat cell.
  std::vector<std::size_t> roads_per_cell() const;

  bool operator==(const RoadGridMap&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::string> roads_;
  std::vector<Cell> cells_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gap-free sequence of grid frames X_1..X_n at a fixed interval.
/// Frame t (0-based here) covers [start + t*interval, start + (t+1)*interval).
struct FlowSeries {
  int interval_minutes = 15;
  calendar::EpochSeconds start = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Frame-major, then row-major cells.
  std::vector<double> values;
  /// 1 where a cell contains a value carried over a missing observation.
  std::vector<std::uint8_t> filled;

  std::size_t cells() const { return rows * cols; }
  std::size_t frame_count() const { return cells() == 0 ? 0 : values.size() / cells(); }
  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values).subspan(t * cells(), cells());
  }
  calendar::EpochSeconds interval_seconds() const { return interval_minutes * 60LL; }
  calendar::EpochSeconds timestamp(std::size_t t) const {
    return start + static_cast<calendar::EpochSeconds>(t) * interval_seconds();
  }
  calendar::YearMonth month_of(std::size_t t) const {
    return calendar::year_month_of(timestamp(t));
  }
  /// Index of the frame covering `ts`, if inside the series.
  std::optional<std::size_t> index_of(calendar::EpochSeconds ts) const;

  /// Throws DataError when the invariants do not hold.
  void validate() const;

  bool operator==(const FlowSeries&) const = default;
};

/// Loads `timestamp,road_id,flow` rows and assembles grid frames. Missing
/// (road, interval) observations are carried forward from the previous one
/// (or back from the first one for leading gaps) and flagged in `filled`.
FlowSeries load_csv(const std::filesystem::path& path, const RoadGridMap& map,
                    int interval_minutes = 15);
FlowSeries read_csv(std::istream& in, const RoadGridMap& map, int interval_minutes = 15);

/// Min-max scaling of flows onto [-1, 1].
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(double min, double max);

  static Normalizer fit(std::span<const double> values);

  double min() const { return min_; }
  double max() const { return max_; }
  double transform(double x) const { return 2.0 * (x - min_) / (max_ - min_) - 1.0; }
  double inverse(double z) const { return (z + 1.0) * 0.5 * (max_ - min_) + min_; }
  /// Scale factor from normalized units back to flow units.
  double span() const { return 0.5 * (max_ - min_); }

  bool operator==(const Normalizer&) const = default;

 private:
  double min_ = 0.0;
  double max_ = 1.0;
};

/// Lengths and spacings of the three input windows, in intervals.
struct WindowSpec {
  std::size_t closeness = 3;   // l_c
  std::size_t period_len = 2;  // l_p
  std::size_t trend_len = 2;   // l_q
  std::size_t period = 96;     // p: one day of 15-minute intervals
  std::size_t trend = 672;     // q: one week

  /// Throws ConfigError.
  void validate() const;
  /// Smallest 0-based target index whose windows all exist.
  std::size_t first_target() const;

  bool operator==(const WindowSpec&) const = default;
};

enum class Split : std::uint8_t { kUnassigned, kTrain, kValidation, kTest };

/// ({S_c, S_p, S_q}, X_t): frame indices of each window plus the target index.
/// Indices are 0-based and every window is ordered oldest first.
struct TrainingInstance {
  std::size_t t = 0;
  std::vector<std::size_t> closeness;
  std::vector<std::size_t> period;
  std::vector<std::size_t> trend;
  Split split = Split::kUnassigned;

  static TrainingInstance at(const WindowSpec& spec, std::size_t t);
};

/// Training instances over a normalized series. The series is shared and
/// immutable, so copies of a Dataset are cheap.
class Dataset {
 public:
  Dataset(std::shared_ptr<const FlowSeries> normalized, Normalizer normalizer, WindowSpec spec,
          std::vector<TrainingInstance> instances);

  const FlowSeries& series() const { return *series_; }
  const std::shared_ptr<const FlowSeries>& series_ptr() const { return series_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const WindowSpec& spec() const { return spec_; }
  const std::vector<TrainingInstance>& instances() const { return instances_; }
  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  const TrainingInstance& operator[](std::size_t i) const { return instances_[i]; }

  /// Stacks the given frames into a [frames, rows, cols] tensor.
  tensor::Tensor stack(std::span<const std::size_t> frames) const;
  /// A single normalized frame as [rows, cols].
  tensor::Tensor frame(std::size_t t) const;

  /// Same series and normalizer, different instances.
  Dataset with_instances(std::vector<TrainingInstance> instances) const;
  /// Keeps instances whose target index is >= min_t.
  Dataset from_target(std::size_t min_t) const;
  /// Chronological split: the last `fraction` of instances become validation.
  std::pair<Dataset, Dataset> split_validation(double fraction) const;

 private:
  std::shared_ptr<const FlowSeries> series_;
  Normalizer normalizer_;
  WindowSpec spec_;
  std::vector<TrainingInstance> instances_;
};

/// Normalized copy of a series.
FlowSeries normalize(const FlowSeries& series, const Normalizer& normalizer);

/// Every instance whose windows lie inside the series. Flows are normalized
/// with `normalizer`, or with one fitted on the whole series when absent.
Dataset build_instances(const FlowSeries& series, const WindowSpec& spec,
                        std::optional<Normalizer> normalizer = std::nullopt);

struct MonthSplit {
  Dataset train;
  Dataset test;
};

/// Instances with a target in `train_months` form the train set, those with a
/// target in `test_month` the test set. Input windows may reach into earlier
/// months. The normalizer is fitted on frames of the train months only.
MonthSplit split_by_month(const FlowSeries& series,
                          const std::vector<calendar::YearMonth>& train_months,
                          calendar::YearMonth test_month, const WindowSpec& spec);

}  // namespace deeptfp::series
