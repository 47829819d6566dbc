#include <random>
#include <set>
#include <sstream>

#include "deeptfp/series.hpp"
#include "doctest.h"

using namespace deeptfp::series;
using deeptfp::ConfigError;
using deeptfp::DataError;
using deeptfp::calendar::YearMonth;

namespace {

RoadGridMap two_road_map(bool same_cell) {
  RoadGridMap map(1, 2);
  map.assign("a", {0, 0});
  map.assign("b", {0, same_cell ? 0u : 1u});
  return map;
}

FlowSeries read(const std::string& text, const RoadGridMap& map) {
  std::istringstream in(text);
  return read_csv(in, map);
}

// Series of `n` frames on a 1x1 grid whose value is the 1-based frame index.
FlowSeries ramp(std::size_t n, deeptfp::calendar::EpochSeconds start = 0) {
  FlowSeries s;
  s.start = start;
  s.rows = s.cols = 1;
  for (std::size_t t = 1; t <= n; ++t) s.values.push_back(double(t));
  return s;
}

std::vector<std::size_t> one_based(const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  for (auto i : idx) out.push_back(i + 1);
  return out;
}

}  // namespace

TEST_SUITE("series") {

TEST_CASE("load_csv assembles frames from road flows") {
  const std::string one_interval =
      "timestamp,road_id,flow\n2016-10-01T00:00:00Z,a,5\n2016-10-01T00:00:00Z,b,7\n";
  SUBCASE("distinct cells") {
    const auto s = read(one_interval, two_road_map(false));
    CHECK(s.frame_count() == 1);
    CHECK(s.values == std::vector<double>{5, 7});
  }
  SUBCASE("shared cell sums") {
    const auto s = read(one_interval, two_road_map(true));
    CHECK(s.values[0] == 12.0);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_WITH_AS(read("", two_road_map(false)), "no observations", DataError);
    CHECK_THROWS_WITH_AS(read("timestamp,road_id,flow\n", two_road_map(false)),
                         "no observations", DataError);
  }
}

TEST_CASE("load_csv rejects bad rows with the line number") {
  const auto map = two_road_map(false);
  CHECK_THROWS_WITH_AS(read("timestamp,road_id,flow\n2016-10-01T00:00:00Z,zz,5\n", map),
                       doctest::Contains("unknown road_id 'zz' (line 2)"), DataError);
  CHECK_THROWS_WITH_AS(read("timestamp,road_id,flow\n2016-10-01T00:00:00Z,a,-3\n", map),
                       doctest::Contains("negative flow -3 (line 2)"), DataError);
  CHECK_THROWS_WITH_AS(read("timestamp,road_id,flow\n2016-10-01T00:15:00Z,a,1\n"
                            "2016-10-01T00:00:00Z,a,1\n",
                            map),
                       doctest::Contains("out-of-order"), DataError);
  CHECK_THROWS_WITH_AS(read("timestamp,road_id,flow\n2016-10-01T00:00:00Z,a,1\n"
                            "2016-10-01T00:00:00Z,a,2\n",
                            map),
                       doctest::Contains("duplicate timestamp"), DataError);
  CHECK_THROWS_AS(read("time,road,flow\n", map), DataError);
  CHECK_THROWS_AS(read("timestamp,road_id,flow\n2016-10-01T00:07:00Z,a,1\n"
                       "2016-10-01T00:15:00Z,a,1\n2016-10-01T00:00:00Z,b,1\n",
                       map),
                  DataError);
}

TEST_CASE("missing observations are carried forward and flagged") {
  const auto s = read(
      "timestamp,road_id,flow\n"
      "2016-10-01T00:00:00Z,a,5\n"
      "2016-10-01T00:15:00Z,b,8\n"
      "2016-10-01T00:30:00Z,a,6\n"
      "2016-10-01T00:30:00Z,b,9\n",
      two_road_map(false));
  CHECK(s.frame_count() == 3);
  // b is missing first (back-filled from 8), a is missing at 00:15 (carried 5).
  CHECK(s.values == std::vector<double>{5, 8, 5, 8, 6, 9});
  CHECK(s.filled == std::vector<std::uint8_t>{0, 1, 1, 0, 0, 0});
}

TEST_CASE("grid map csv") {
  std::istringstream in("road_id,row,col\nx,0,0\ny,1,2\n");
  const auto map = RoadGridMap::read_csv(in);
  CHECK(map.rows() == 2);
  CHECK(map.cols() == 3);
  CHECK(map.flat_cell(1) == 5);
  std::ostringstream out;
  map.write_csv(out);
  CHECK(out.str() == "road_id,row,col\nx,0,0\ny,1,2\n");
  std::istringstream dup("road_id,row,col\nx,0,0\nx,1,1\n");
  CHECK_THROWS_AS(RoadGridMap::read_csv(dup), DataError);
}

TEST_CASE("build_instances on n=2000 with daily period and weekly trend") {
  const WindowSpec spec{3, 2, 2, 96, 672};
  const auto ds = build_instances(ramp(2000), spec);
  REQUIRE(ds.size() == 656);
  const auto& first = ds[0];
  CHECK(first.t + 1 == 1345);
  CHECK(one_based(first.closeness) == std::vector<std::size_t>{1342, 1343, 1344});
  CHECK(one_based(first.period) == std::vector<std::size_t>{1153, 1249});
  CHECK(one_based(first.trend) == std::vector<std::size_t>{1, 673});
  CHECK(ds.instances().back().t + 1 == 2000);
}

TEST_CASE("build_instances minimal windows") {
  const auto ds = build_instances(ramp(3), WindowSpec{1, 1, 1, 1, 2});
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].t + 1 == 3);
  CHECK(one_based(ds[0].closeness) == std::vector<std::size_t>{2});
  CHECK(one_based(ds[0].period) == std::vector<std::size_t>{2});
  CHECK(one_based(ds[0].trend) == std::vector<std::size_t>{1});
}

TEST_CASE("build_instances errors") {
  const WindowSpec spec{3, 2, 2, 96, 672};
  CHECK_THROWS_AS(build_instances(ramp(1344), spec), DataError);
  CHECK_NOTHROW(build_instances(ramp(1345), spec));
  CHECK_THROWS_AS(build_instances(ramp(100), WindowSpec{1, 1, 1, 4, 4}), ConfigError);
  CHECK_THROWS_AS(build_instances(ramp(100), WindowSpec{0, 1, 1, 1, 2}), ConfigError);
}

TEST_CASE("no instance reads its own target and order is stable") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> len(1, 4), per(1, 6);
    WindowSpec spec;
    spec.closeness = len(rng);
    spec.period_len = len(rng);
    spec.trend_len = len(rng);
    spec.period = per(rng);
    spec.trend = spec.period + per(rng);
    const auto ds = build_instances(ramp(spec.first_target() + 30), spec);
    std::size_t prev = 0;
    for (const auto& inst : ds.instances()) {
      CHECK(inst.closeness.size() == spec.closeness);
      CHECK(inst.period.size() == spec.period_len);
      CHECK(inst.trend.size() == spec.trend_len);
      for (const auto* w : {&inst.closeness, &inst.period, &inst.trend})
        for (auto i : *w) CHECK(i < inst.t);
      CHECK(inst.t >= prev);
      prev = inst.t;
    }
  }
}

TEST_CASE("normalizer round trip and bounds") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(0.0, 500.0);
  std::vector<double> v(200);
  for (auto& x : v) x = dist(rng);
  const auto n = Normalizer::fit(v);
  for (double x : v) {
    CHECK(n.transform(x) >= -1.0 - 1e-15);
    CHECK(n.transform(x) <= 1.0 + 1e-15);
    CHECK(std::abs(n.inverse(n.transform(x)) - x) < 1e-12);
  }
  CHECK(n.transform(n.min()) == -1.0);
  CHECK(n.transform(n.max()) == 1.0);
  CHECK_THROWS_AS(Normalizer(3.0, 3.0), DataError);
}

TEST_CASE("split_by_month") {
  // 15-minute frames from 2016-09-01 to the end of December.
  const auto start = YearMonth{2016, 9}.start();
  const std::size_t n = (YearMonth{2017, 1}.start() - start) / 900;
  FlowSeries s = ramp(n, start);
  const WindowSpec spec;
  const YearMonth oct{2016, 10}, nov{2016, 11}, dec{2016, 12};

  const auto two = split_by_month(s, {oct, nov}, dec, spec);
  CHECK(two.test.size() == 31 * 96);
  CHECK(two.train.size() == (31 + 30) * 96);
  for (const auto& i : two.test.instances()) CHECK(s.month_of(i.t) == dec);

  const auto one = split_by_month(s, {nov}, dec, spec);
  std::set<std::size_t> two_targets;
  for (const auto& i : two.train.instances()) two_targets.insert(i.t);
  for (const auto& i : one.train.instances()) CHECK(two_targets.count(i.t) == 1);

  // The normalizer only sees training months.
  double lo = 1e300, hi = -1e300;
  for (std::size_t t = 0; t < n; ++t)
    if (s.month_of(t) == nov) lo = std::min(lo, s.values[t]), hi = std::max(hi, s.values[t]);
  CHECK(one.train.normalizer() == Normalizer(lo, hi));

  CHECK_THROWS_AS(split_by_month(s, {dec}, nov, spec), ConfigError);
  CHECK_THROWS_AS(split_by_month(s, {nov, dec}, dec, spec), ConfigError);
  CHECK_THROWS_AS(split_by_month(s, {YearMonth{2016, 5}}, dec, spec), DataError);
}

TEST_CASE("chronological validation split tags instances") {
  const auto ds = build_instances(ramp(40), WindowSpec{1, 1, 1, 1, 2});
  const auto [train, val] = ds.split_validation(0.1);
  CHECK(train.size() + val.size() == ds.size());
  CHECK(val.size() == 3);
  CHECK(train.instances().back().t < val[0].t);
  CHECK(val[0].split == Split::kValidation);
}

}  // TEST_SUITE
