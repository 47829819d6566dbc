#include <sstream>

#include "deeptfp/config.hpp"
#include "doctest.h"

using deeptfp::ConfigError;
using deeptfp::config::RunConfig;

TEST_SUITE("config") {

TEST_CASE("defaults match the documented table") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  for (const auto& k : deeptfp::config::keys()) {
    RunConfig fresh;
    if (!k.default_value.empty()) CHECK_NOTHROW(fresh.set(k.key, k.default_value));
    CHECK(deeptfp::config::key_help().find(k.key) != std::string::npos);
  }
  RunConfig reset;
  for (const auto& k : deeptfp::config::keys()) reset.set(k.key, k.default_value);
  CHECK(reset.city.rows == c.city.rows);
  CHECK(reset.deeptfp == c.deeptfp);
  CHECK(reset.train.learning_rate == c.train.learning_rate);
  CHECK(reset.train_months.empty());
}

TEST_CASE("key = value files with comments") {
  std::istringstream in(
      "# experiment\n"
      "features = 4   # fewer maps\n"
      "\n"
      "optimizer=adam\n"
      "train_months = 2016-10, 2016-11\n"
      "seed = 7\n"
      "diffusion = 0.2\n");
  RunConfig c;
  c.read(in);
  CHECK(c.deeptfp.features == 4);
  CHECK(c.train.optimizer == deeptfp::trainer::OptimizerKind::kAdam);
  REQUIRE(c.train_months.size() == 2);
  CHECK(c.train_months[1] == deeptfp::calendar::YearMonth{2016, 11});
  CHECK(c.seed == 7);
  CHECK(c.city.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.city.diffusion == 0.2);
}

TEST_CASE("unknown keys and bad values are rejected with the key name") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.set("colour", "red"), doctest::Contains("colour"), ConfigError);
  CHECK_THROWS_WITH_AS(c.set("features", "four"), doctest::Contains("features"), ConfigError);
  CHECK_THROWS_WITH_AS(c.set("optimizer", "lbfgs"), doctest::Contains("optimizer"), ConfigError);
  CHECK_THROWS_WITH_AS(c.set("start_month", "2016-13"), doctest::Contains("start_month"), ConfigError);
  std::istringstream bad_line("just words\n");
  CHECK_THROWS_WITH_AS(c.read(bad_line, "x.conf"), doctest::Contains("x.conf:1"), ConfigError);
  c.set("diffusion", "0.9");
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("diffusion"), ConfigError);
}

TEST_CASE("lstm window defaults to the three window lengths") {
  RunConfig c;
  CHECK(c.lstm_for(16, 16).window == 7);
  c.set("lstm_window", "4");
  CHECK(c.lstm_for(16, 16).window == 4);
  CHECK(c.deeptfp_for(5, 6).rows == 5);
}

}  // TEST_SUITE
