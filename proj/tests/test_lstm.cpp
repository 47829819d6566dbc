#include <cmath>

#include "deeptfp/lstm.hpp"
#include "deeptfp/trainer.hpp"
#include "doctest.h"
#include "model_helpers.hpp"
#include "oracles.hpp"

using namespace deeptfp::lstm;
namespace tensor = deeptfp::tensor;

TEST_SUITE("lstm") {

TEST_CASE("zero cell and zero state give a zero hidden state") {
  const auto cell = LstmCell::zeros(1, 4);
  std::mt19937_64 rng(1);
  const auto x = Tensor::from_data({3, 1}, oracle::uniform_values(rng, 3));
  const auto next = lstm_step(cell, x, {Tensor::zeros({3, 4}), Tensor::zeros({3, 4})});
  for (double v : next.h.data()) CHECK(v == 0.0);
  for (double v : next.c.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(lstm_step(cell, Tensor::zeros({3, 2}), {Tensor::zeros({3, 4}), Tensor::zeros({3, 4})}),
                  deeptfp::ShapeError);
}

TEST_CASE("zero model with one frame predicts the readout bias") {
  LstmModel model({2, 3, 4, 1});
  model.readout_bias().mutable_data()[0] = 0.42;
  const std::vector<Tensor> window{Tensor::full({2, 3}, 0.5)};
  const auto out = model.forecast(window);
  CHECK(out.shape() == tensor::Shape{2, 3});
  for (double v : out.data()) CHECK(v == 0.42);
  CHECK_THROWS_AS(model.forecast(std::vector<Tensor>{}), deeptfp::ShapeError);
}

TEST_CASE("gradient through five unrolled steps") {
  std::mt19937_64 rng(7);
  auto cell = LstmCell::zeros(1, 3);
  for (std::size_t g = 0; g < 4; ++g) {
    for (double& v : cell.input_weights[g].mutable_data()) v = oracle::uniform_values(rng, 1)[0];
    for (double& v : cell.hidden_weights[g].mutable_data()) v = oracle::uniform_values(rng, 1)[0];
    for (double& v : cell.biases[g].mutable_data()) v = oracle::uniform_values(rng, 1)[0];
  }
  std::vector<Tensor> xs;
  for (int s = 0; s < 5; ++s) xs.push_back(Tensor::from_data({2, 1}, oracle::uniform_values(rng, 2)));
  const auto target = Tensor::from_data({2, 3}, oracle::uniform_values(rng, 6));
  auto unroll = [&](const LstmCell& c) {
    LstmState st{Tensor::zeros({2, 3}), Tensor::zeros({2, 3})};
    for (const auto& x : xs) st = lstm_step(c, x, st);
    return tensor::mse_loss(st.h, target);
  };
  double worst = 0.0;
  for (std::size_t g = 0; g < 4; ++g) {
    for (Tensor* slot : {&cell.input_weights[g], &cell.hidden_weights[g], &cell.biases[g]}) {
      const Tensor original = *slot;
      worst = std::max(worst, tensor::grad_check(
                                  [&](const Tensor& p) {
                                    *slot = p;
                                    auto l = unroll(cell);
                                    *slot = original;
                                    return l;
                                  },
                                  original, 1e-5));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batched targets match single predictions") {
  const auto data = testing_helpers::small_dataset(3, 3, 8, 30);
  LstmModel model({3, 3, 4, 5});
  model.initialize(2);
  const auto range = model.predict_range(data, 5, 20);
  REQUIRE(range.size() == 15);
  for (std::size_t t = 5; t < 20; ++t) {
    const auto single = testing_helpers::values(model.predict(data, t));
    for (std::size_t c = 0; c < 9; ++c) CHECK(range[t - 5][c] == doctest::Approx(single[c]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(model.predict(data, 4), deeptfp::HistoryError);
  const std::vector<std::size_t> targets{6, 9, 12};
  double manual = 0.0;
  for (auto t : targets) manual += tensor::mse_loss(model.predict(data, t), data.frame(t)).item();
  CHECK(model.batch_loss(data, targets).item() == doctest::Approx(manual / 3).epsilon(1e-12));
}

TEST_CASE("training on a sinusoid improves one-step RMSE") {
  deeptfp::series::FlowSeries s;
  s.rows = s.cols = 2;
  for (std::size_t t = 0; t < 400; ++t)
    for (std::size_t c = 0; c < 4; ++c) s.values.push_back(100 + 50 * std::sin(0.3 * double(t) + double(c)));
  const auto data = deeptfp::series::build_instances(s, {2, 1, 1, 3, 7});
  LstmModel model({2, 2, 8, 6});
  model.initialize(1);
  deeptfp::trainer::TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.patience = 20;
  cfg.optimizer = deeptfp::trainer::OptimizerKind::kAdam;
  const auto report = deeptfp::trainer::train(model, data, cfg);
  MESSAGE("untrained " << report.initial_val_rmse << " trained " << report.val_rmse[report.best_epoch - 1]);
  REQUIRE(report.best_epoch > 0);
  CHECK(report.val_rmse[report.best_epoch - 1] < report.initial_val_rmse);
}

}  // TEST_SUITE
