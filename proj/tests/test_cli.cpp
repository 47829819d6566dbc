#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "deeptfp/checkpoint.hpp"
#include "deeptfp/config.hpp"
#include "deeptfp/series.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
namespace series = deeptfp::series;

namespace {

const fs::path kFixture = fs::path(DEEPTFP_FIXTURES) / "tiny.conf";

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "deeptfp_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result cli(const std::string& args) {
  const auto out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = std::string("DEEPTFP_LOG_LEVEL=warn '") + DEEPTFP_CLI + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// The two-week fixture city, generated once.
fs::path fixture_city() {
  static const fs::path dir = [] {
    const auto d = work_dir() / "city";
    REQUIRE(cli("datagen --config " + q(kFixture) + " --out " + q(d)).code == 0);
    return d;
  }();
  return dir;
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("datagen writes the fixture and is byte-identical per seed") {
  const auto a = work_dir() / "gen-a", b = work_dir() / "gen-b";
  REQUIRE(cli("datagen --config " + q(kFixture) + " --seed 7 --out " + q(a)).code == 0);
  REQUIRE(cli("datagen --config " + q(kFixture) + " --seed 7 --out " + q(b)).code == 0);
  const auto flows = slurp(a / "flows.csv");
  CHECK(flows == slurp(b / "flows.csv"));
  CHECK(slurp(a / "gridmap.csv") == slurp(b / "gridmap.csv"));
  CHECK(line_count(flows) == 1 + 256 * 14 * 96);
  CHECK(flows.rfind("timestamp,road_id,flow\n", 0) == 0);
}

TEST_CASE("config errors exit 2 and name the key") {
  const auto r = cli("datagen --set diffusion=0.9 --out " + q(work_dir() / "bad"));
  CHECK(r.code == 2);
  CHECK(r.err.find("diffusion") != std::string::npos);
  CHECK(cli("datagen --set no_such_key=1 --out " + q(work_dir() / "bad")).code == 2);
  CHECK(cli("datagen --out " + q(work_dir() / "bad") + " --config /nonexistent.conf").code == 2);
  CHECK(cli("train --data x.csv").code == 2);
  CHECK(cli("experiment --data " + q(fixture_city() / "flows.csv") + " --protocol 4c --out " +
            q(work_dir() / "bad")).code == 2);
}

TEST_CASE("help documents every config key and default") {
  for (const char* sub : {"datagen", "train", "experiment"}) {
    const auto r = cli(std::string(sub) + " --help");
    CHECK(r.code == 0);
    for (const auto& k : deeptfp::config::keys())
      CHECK(r.out.find(k.key + " [" + k.default_value + "]") != std::string::npos);
  }
}

TEST_CASE("train with a missing grid map exits 3") {
  const auto lonely = work_dir() / "lonely";
  fs::create_directories(lonely);
  fs::copy_file(fixture_city() / "flows.csv", lonely / "flows.csv", fs::copy_options::overwrite_existing);
  CHECK(cli("train --data " + q(lonely / "flows.csv") + " --out-run " + q(work_dir() / "r")).code == 3);
}

TEST_CASE("train on the fixture, then predict") {
  const auto flows = fixture_city() / "flows.csv";
  const auto run = work_dir() / "run-deeptfp", again = work_dir() / "run-deeptfp-2";
  const auto started = std::chrono::steady_clock::now();
  REQUIRE(cli("train --data " + q(flows) + " --config " + q(kFixture) + " --out-run " + q(run)).code == 0);
  CHECK(std::chrono::steady_clock::now() - started < std::chrono::minutes(5));
  REQUIRE(cli("train --data " + q(flows) + " --config " + q(kFixture) + " --out-run " + q(again)).code == 0);
  for (const char* f : {"best.ckpt", "epoch-1.ckpt", "report.csv"}) CHECK(slurp(run / f) == slurp(again / f));
  CHECK(deeptfp::checkpoint::load(run / "best.ckpt").kind == "deeptfp");
  CHECK(line_count(slurp(run / "report.csv")) == 4);

  // First predictable target: l_q * q + n - 1 = 674, so --at needs index 673.
  const auto series = series::load_csv(flows, series::RoadGridMap::load_csv(fixture_city() / "gridmap.csv"));
  const auto at = [&](std::size_t i) { return deeptfp::calendar::format_iso8601(series.timestamp(i)); };
  const auto early = cli("predict --run " + q(run) + " --data " + q(flows) + " --at " + at(672));
  CHECK(early.code == 5);
  const auto ok = cli("predict --run " + q(run) + " --data " + q(flows) + " --at " + at(673));
  REQUIRE(ok.code == 0);
  CHECK(line_count(ok.out) == 257);
  CHECK(ok.out.find("\n" + at(674) + ",road-0000,") != std::string::npos);
  CHECK(cli("predict --run " + q(run) + " --data " + q(flows) + " --at " + at(673)).out == ok.out);
  const auto last = cli("predict --run " + q(run) + " --data " + q(flows) + " --at " + at(series.frame_count() - 1));
  CHECK(last.code == 0);
  CHECK(line_count(last.out) == 257);
  CHECK(cli("predict --run " + q(run) + " --data " + q(flows) + " --at 2030-01-01T00:00:00Z").code == 3);
}

TEST_CASE("untrained model predicts the fused passthrough") {
  const auto flows = fixture_city() / "flows.csv";
  const auto run = work_dir() / "run-untrained";
  REQUIRE(cli("train --data " + q(flows) + " --config " + q(kFixture) +
              " --set max_epochs=0 --set patience=0 --out-run " + q(run)).code == 0);
  const auto ckpt = deeptfp::checkpoint::load(run / "best.ckpt");
  const auto model = deeptfp::checkpoint::restore(ckpt);
  const auto& deep = dynamic_cast<const deeptfp::model::DeepTfpModel&>(*model);
  const auto s = series::load_csv(flows, series::RoadGridMap::load_csv(fixture_city() / "gridmap.csv"));
  const auto data = series::build_instances(s, ckpt.windows, ckpt.normalizer);
  const std::size_t target = 700;
  const auto fused = deep.fused(deeptfp::model::BranchWindows::at(data, target));

  const auto r = cli("predict --run " + q(run / "best.ckpt") + " --data " + q(flows) + " --at " +
                     deeptfp::calendar::format_iso8601(s.timestamp(target - 1)));
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  for (std::size_t cell = 0; std::getline(lines, line); ++cell) {
    const double flow = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(flow == doctest::Approx(ckpt.normalizer.inverse(fused.value(cell))).epsilon(1e-12));
  }
}

TEST_CASE("train --model lstm writes an lstm checkpoint") {
  const auto run = work_dir() / "run-lstm";
  REQUIRE(cli("train --model lstm --data " + q(fixture_city() / "flows.csv") + " --config " + q(kFixture) +
              " --set max_epochs=1 --set patience=1 --out-run " + q(run)).code == 0);
  CHECK(deeptfp::checkpoint::load(run / "best.ckpt").kind == "lstm");
}

TEST_CASE("experiment emits three models and repeats byte for byte") {
  const auto city = work_dir() / "small-city";
  const std::string small =
      " --set rows=4 --set cols=4 --set features=2 --set residual_units=0 --set lstm_hidden=2"
      " --set max_epochs=1 --set patience=1 --set optimizer=adam --set learning_rate=0.001";
  REQUIRE(cli("datagen --set rows=4 --set cols=4 --out " + q(city)).code == 0);
  const auto a = work_dir() / "exp-a", b = work_dir() / "exp-b";
  const std::string base = "experiment --data " + q(city / "flows.csv") + " --protocol 4b" + small + " --out ";
  REQUIRE(cli(base + q(a)).code == 0);
  REQUIRE(cli(base + q(b)).code == 0);
  const auto summary = slurp(a / "summary.csv");
  CHECK(line_count(summary) == 4);
  for (const char* m : {"\ndeeptfp,", "\nlstm,", "\npersistence,"}) CHECK(summary.find(m) != std::string::npos);
  for (const char* f : {"report.csv", "summary.csv", "comparison.svg", "config.txt", "runs/deeptfp/best.ckpt",
                        "runs/lstm/best.ckpt", "runs/deeptfp/report.csv"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  CHECK(line_count(slurp(a / "report.csv")) == 1 + 2976);
}

}  // TEST_SUITE
