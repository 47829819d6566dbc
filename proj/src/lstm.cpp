#include "deeptfp/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deeptfp/error.hpp"

namespace deeptfp::lstm {

namespace {
constexpr std::array<const char*, 4> kGateNames = {"input", "forget", "output", "candidate"};
enum Gate { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };
}  // namespace

LstmCell LstmCell::zeros(std::size_t input_dim, std::size_t hidden) {
  LstmCell cell;
  for (std::size_t g = 0; g < 4; ++g) {
    cell.input_weights[g] = Tensor::zeros({input_dim, hidden}, true);
    cell.hidden_weights[g] = Tensor::zeros({hidden, hidden}, true);
    cell.biases[g] = Tensor::zeros({hidden}, true);
  }
  return cell;
}

LstmState lstm_step(const LstmCell& cell, const Tensor& x, const LstmState& prev) {
  const std::size_t hidden = cell.hidden();
  if (x.rank() != 2 || x.shape()[1] != cell.input_dim()) {
    throw ShapeError("lstm_step: x must be [batch," + std::to_string(cell.input_dim()) +
                     "], got " + tensor::shape_string(x.shape()));
  }
  const tensor::Shape state_shape{x.shape()[0], hidden};
  if (prev.h.shape() != state_shape || prev.c.shape() != state_shape) {
    throw ShapeError("lstm_step: state must be " + tensor::shape_string(state_shape));
  }
  auto pre = [&](int g) {
    return tensor::add(tensor::linear(x, cell.input_weights[g], cell.biases[g]),
                       tensor::matmul(prev.h, cell.hidden_weights[g]));
  };
  const Tensor i = tensor::sigmoid(pre(kInput));
  const Tensor f = tensor::sigmoid(pre(kForget));
  const Tensor o = tensor::sigmoid(pre(kOutput));
  const Tensor g = tensor::tanh(pre(kCandidate));
  const Tensor c = tensor::add(tensor::mul(f, prev.c), tensor::mul(i, g));
  return {tensor::mul(o, tensor::tanh(c)), c};
}

void LstmConfig::validate() const {
  if (rows == 0 || cols == 0) throw ConfigError("grid rows and cols must be positive");
  if (hidden == 0) throw ConfigError("lstm_hidden must be >= 1");
  if (window == 0) throw ConfigError("lstm_window must be >= 1");
}

LstmModel::LstmModel(LstmConfig config) : config_(config) {
  config_.validate();
  cell_ = LstmCell::zeros(1, config_.hidden);
  readout_w_ = Tensor::zeros({config_.hidden, 1}, true);
  readout_b_ = Tensor::zeros({1}, true);
}

Tensor LstmModel::forecast(std::span<const Tensor> frames) const {
  if (frames.empty()) throw ShapeError("lstm_forecast: empty window");
  const tensor::Shape grid = frames[0].shape();
  const std::size_t cells = frames[0].size();
  LstmState state{Tensor::zeros({cells, config_.hidden}), Tensor::zeros({cells, config_.hidden})};
  for (const auto& frame : frames) {
    if (frame.shape() != grid) throw ShapeError("lstm_forecast: frames differ in shape");
    state = lstm_step(cell_, tensor::reshape(frame, {cells, 1}), state);
  }
  return tensor::reshape(tensor::linear(state.h, readout_w_, readout_b_), grid);
}

std::vector<std::pair<std::string, Tensor*>> LstmModel::parameter_slots() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t g = 0; g < 4; ++g) {
    const std::string gate = kGateNames[g];
    out.emplace_back("lstm." + gate + ".input_weights", &cell_.input_weights[g]);
    out.emplace_back("lstm." + gate + ".hidden_weights", &cell_.hidden_weights[g]);
    out.emplace_back("lstm." + gate + ".bias", &cell_.biases[g]);
  }
  out.emplace_back("readout.weight", &readout_w_);
  out.emplace_back("readout.bias", &readout_b_);
  return out;
}

std::vector<std::pair<std::string, std::string>> LstmModel::hyperparameters() const {
  return {{"rows", std::to_string(config_.rows)},
          {"cols", std::to_string(config_.cols)},
          {"lstm_hidden", std::to_string(config_.hidden)},
          {"lstm_window", std::to_string(config_.window)}};
}

std::size_t LstmModel::first_target(const series::WindowSpec&) const { return config_.window; }

void LstmModel::check_targets(const series::Dataset& data,
                              std::span<const std::size_t> targets) const {
  if (data.series().rows != config_.rows || data.series().cols != config_.cols) {
    throw ShapeError("dataset grid differs from the model grid");
  }
  for (std::size_t t : targets) {
    if (t < config_.window) {
      throw HistoryError("target " + std::to_string(t) + " has fewer than " +
                         std::to_string(config_.window) + " preceding frames");
    }
    if (t >= data.series().frame_count()) {
      throw HistoryError("target " + std::to_string(t) + " lies past the end of the series");
    }
  }
}

Tensor LstmModel::forecast_targets(const series::Dataset& data,
                                   std::span<const std::size_t> targets) const {
  if (targets.empty()) throw ShapeError("lstm_forecast: empty target list");
  check_targets(data, targets);
  const auto& s = data.series();
  const std::size_t cells = s.cells();
  const std::size_t rows = cells * targets.size();
  LstmState state{Tensor::zeros({rows, config_.hidden}), Tensor::zeros({rows, config_.hidden})};
  for (std::size_t step = 0; step < config_.window; ++step) {
    std::vector<double> x;
    x.reserve(rows);
    for (std::size_t t : targets) {
      const auto f = s.frame(t - config_.window + step);
      x.insert(x.end(), f.begin(), f.end());
    }
    state = lstm_step(cell_, Tensor::from_data({rows, 1}, std::move(x)), state);
  }
  return tensor::linear(state.h, readout_w_, readout_b_);
}

std::vector<std::vector<double>> LstmModel::predict_range(const series::Dataset& data,
                                                          std::size_t t_begin,
                                                          std::size_t t_end) const {
  tensor::NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  const std::size_t cells = config_.rows * config_.cols;
  constexpr std::size_t kChunk = 128;
  for (std::size_t t0 = t_begin; t0 < t_end; t0 += kChunk) {
    std::vector<std::size_t> targets;
    for (std::size_t t = t0; t < std::min(t_end, t0 + kChunk); ++t) targets.push_back(t);
    const Tensor pred = forecast_targets(data, targets);
    const auto p = pred.data();
    for (std::size_t k = 0; k < targets.size(); ++k)
      out.emplace_back(p.begin() + k * cells, p.begin() + (k + 1) * cells);
  }
  return out;
}

Tensor LstmModel::batch_loss(const series::Dataset& data,
                             std::span<const std::size_t> targets) const {
  const Tensor pred = forecast_targets(data, targets);
  std::vector<double> actual;
  actual.reserve(pred.size());
  for (std::size_t t : targets) {
    const auto f = data.series().frame(t);
    actual.insert(actual.end(), f.begin(), f.end());
  }
  return tensor::mse_loss(pred, Tensor::from_data(pred.shape(), std::move(actual)));
}

Tensor LstmModel::predict(const series::Dataset& data, std::size_t t) const {
  check_targets(data, std::span<const std::size_t>(&t, 1));
  std::vector<Tensor> frames;
  frames.reserve(config_.window);
  for (std::size_t i = t - config_.window; i < t; ++i) frames.push_back(data.frame(i));
  return forecast(frames);
}

void LstmModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto fill = [&](Tensor& t) {
    for (double& v : t.mutable_data()) v = dist(rng);
  };
  for (std::size_t g = 0; g < 4; ++g) {
    fill(cell_.input_weights[g]);
    fill(cell_.hidden_weights[g]);
    auto b = cell_.biases[g].mutable_data();
    std::fill(b.begin(), b.end(), g == kForget ? 1.0 : 0.0);
  }
  fill(readout_w_);
  readout_b_.mutable_data()[0] = 0.0;
}

std::unique_ptr<model::Forecaster> LstmModel::clone() const {
  auto copy = std::make_unique<LstmModel>(config_);
  copy->copy_parameters_from(*this);
  return copy;
}

}  // namespace deeptfp::lstm
