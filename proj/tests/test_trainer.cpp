#include <filesystem>
#include <set>
#include <sstream>

#include "ar_fixture.hpp"
#include "deeptfp/checkpoint.hpp"
#include "deeptfp/trainer.hpp"
#include "doctest.h"
#include "model_helpers.hpp"

using namespace deeptfp::trainer;
using deeptfp::model::DeepTfpModel;
namespace series = deeptfp::series;

namespace {

std::vector<std::vector<double>> snapshot(const deeptfp::model::Forecaster& m) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : m.named_parameters()) out.push_back(testing_helpers::values(t));
  return out;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 6;
  cfg.patience = 6;
  cfg.learning_rate = 0.01;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("init_params is deterministic per seed") {
  DeepTfpModel a(testing_helpers::small_config()), b(testing_helpers::small_config());
  init_params(a, 5);
  init_params(b, 5);
  CHECK(snapshot(a) == snapshot(b));
  init_params(b, 6);
  CHECK(snapshot(a) != snapshot(b));
}

TEST_CASE("one epoch of batches partitions the dataset") {
  const auto data = testing_helpers::small_dataset(2, 2, 1, 17);
  REQUIRE(data.size() == 10);
  std::mt19937_64 rng(9);
  const auto batches = sample_batches(data, 3, rng);
  CHECK(batches.size() == 4);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  CHECK(seen.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(seen.count(i) == 1);

  std::mt19937_64 r1(4), r2(4);
  CHECK(sample_batches(data, 3, r1) == sample_batches(data, 3, r2));
  const auto whole = sample_batches(data, 50, r1);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].size() == 10);

  const auto empty = data.with_instances({});
  CHECK_THROWS_AS(sample_batches(empty, 3, rng), deeptfp::DataError);
}

TEST_CASE("zero epochs leave the model unchanged") {
  const auto data = testing_helpers::small_dataset(4, 4, 2, 60);
  DeepTfpModel model(testing_helpers::small_config());
  init_params(model, 1);
  const auto before = snapshot(model);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 0;
  cfg.patience = 0;
  const auto report = train(model, data, cfg);
  CHECK(report.epochs() == 0);
  CHECK(report.stop == StopReason::kNoEpochs);
  CHECK(snapshot(model) == before);
}

TEST_CASE("training loss decreases and the retained model is no worse than the start") {
  const auto data = testing_helpers::small_dataset(4, 4, 3, 57);
  DeepTfpModel model(testing_helpers::small_config());
  init_params(model, 2);
  const auto [train_set, validation] = data.split_validation(0.1);
  REQUIRE(train_set.size() + validation.size() == 50);
  const auto report = train(model, train_set, validation, quick_config());
  REQUIRE(report.epochs() >= 1);
  CHECK(report.val_rmse.size() == report.epochs());
  if (report.best_epoch > 0) CHECK(report.train_loss[report.best_epoch - 1] < report.train_loss[0]);
  CHECK(*std::min_element(report.train_loss.begin(), report.train_loss.end()) < report.train_loss[0]);
  CHECK(evaluate_rmse(model, validation) <= report.initial_val_rmse);
}

TEST_CASE("training is deterministic and writes the run directory") {
  const auto data = testing_helpers::small_dataset(4, 4, 4, 50);
  const auto dir = std::filesystem::temp_directory_path() / "deeptfp_trainer_test";
  std::filesystem::remove_all(dir);
  auto run = [&](const std::filesystem::path& out) {
    DeepTfpModel model(testing_helpers::small_config());
    init_params(model, 7);
    TrainConfig cfg = quick_config();
    cfg.max_epochs = 3;
    cfg.patience = 3;
    TrainOptions opts;
    opts.run_dir = out;
    const auto report = train(model, data, cfg, opts);
    std::ostringstream csv;
    report.write_csv(csv);
    return std::make_pair(snapshot(model), csv.str());
  };
  const auto a = run(dir / "a");
  const auto b = run(dir / "b");
  CHECK(a == b);
  for (const char* f : {"epoch-1.ckpt", "epoch-3.ckpt", "best.ckpt", "report.csv"})
    CHECK(std::filesystem::exists(dir / "a" / f));
  CHECK(a.second.rfind("epoch,train_loss,val_rmse\n1,", 0) == 0);
  const auto best = deeptfp::checkpoint::load(dir / "a" / "best.ckpt");
  auto restored = deeptfp::checkpoint::restore(best);
  CHECK(snapshot(*restored) == a.first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("test-month instances are refused") {
  auto data = testing_helpers::small_dataset(4, 4, 5, 50);
  auto insts = data.instances();
  insts.back().split = series::Split::kTest;
  DeepTfpModel model(testing_helpers::small_config());
  CHECK_THROWS_AS(train(model, data.with_instances(insts), quick_config()), deeptfp::DataError);
}

TEST_CASE("a diverging run aborts with learning-rate guidance") {
  const auto data = testing_helpers::small_dataset(4, 4, 6, 50);
  DeepTfpModel model(testing_helpers::small_config());
  init_params(model, 1);
  TrainConfig cfg = quick_config();
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.clip_norm = 0.0;
  cfg.learning_rate = 1e150;
  CHECK_THROWS_WITH_AS(train(model, data, cfg), doctest::Contains("learning_rate"),
                       deeptfp::TrainingError);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), deeptfp::ConfigError);
  cfg = {};
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), deeptfp::ConfigError);
  cfg = {};
  cfg.max_epochs = 5;
  CHECK_THROWS_AS(cfg.validate(), deeptfp::ConfigError);
  CHECK(parse_optimizer("adam") == OptimizerKind::kAdam);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), deeptfp::ConfigError);
}

TEST_CASE("AR(2) coefficients are recovered by the head alone") {
  const auto r = ar_fixture::run(11);
  MESSAGE("theta=(" << r.theta1 << ", " << r.theta2 << ") c=" << r.intercept << " oracle=("
                    << r.oracle1 << ", " << r.oracle2 << ")");
  CHECK(std::abs(r.theta1 - ar_fixture::kTheta1) < 1e-2);
  CHECK(std::abs(r.theta2 - ar_fixture::kTheta2) < 1e-2);
  CHECK(std::abs(r.theta1 - r.oracle1) < 1e-2);
  CHECK(std::abs(r.theta2 - r.oracle2) < 1e-2);
}

}  // TEST_SUITE
