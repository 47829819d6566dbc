#pragma once

// LSTM comparison model: one cell with shared weights runs over every grid
// cell's recent flow sequence, and a linear readout predicts the next value.

#include <array>
#include <utility>

#include "deeptfp/model.hpp"

namespace deeptfp::lstm {

using tensor::Tensor;

/// Gate order in every array: input, forget, output, candidate.
struct LstmCell {
  std::array<Tensor, 4> input_weights;   // [input_dim, H]
  std::array<Tensor, 4> hidden_weights;  // [H, H]
  std::array<Tensor, 4> biases;          // [H]

  static LstmCell zeros(std::size_t input_dim, std::size_t hidden);
  std::size_t hidden() const { return hidden_weights[0].shape()[0]; }
  std::size_t input_dim() const { return input_weights[0].shape()[0]; }
};

struct LstmState {
  Tensor h;  // [batch, H]
  Tensor c;  // [batch, H]
};

/// One gated update for a batch of sequences. x is [batch, input_dim].
LstmState lstm_step(const LstmCell& cell, const Tensor& x, const LstmState& prev);

struct LstmConfig {
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::size_t hidden = 8;
  std::size_t window = 7;  // L frames of history

  void validate() const;
};

class LstmModel final : public model::Forecaster {
 public:
  explicit LstmModel(LstmConfig config);

  const LstmConfig& config() const { return config_; }
  LstmCell& cell() { return cell_; }
  Tensor& readout_weight() { return readout_w_; }
  Tensor& readout_bias() { return readout_b_; }

  /// Runs the cell over `frames` (oldest first, each [rows, cols]) and reads
  /// out one [rows, cols] prediction. Throws ShapeError on an empty window.
  Tensor forecast(std::span<const Tensor> frames) const;

  /// Predictions for several targets at once as [targets * cells, 1], target-major.
  Tensor forecast_targets(const series::Dataset& data, std::span<const std::size_t> targets) const;

  std::string kind() const override { return "lstm"; }
  std::vector<std::pair<std::string, Tensor*>> parameter_slots() override;
  std::vector<std::pair<std::string, std::string>> hyperparameters() const override;
  std::size_t first_target(const series::WindowSpec& spec) const override;
  Tensor predict(const series::Dataset& data, std::size_t t) const override;
  std::vector<std::vector<double>> predict_range(const series::Dataset& data, std::size_t t_begin,
                                                 std::size_t t_end) const override;
  Tensor batch_loss(const series::Dataset& data,
                    std::span<const std::size_t> targets) const override;
  /// Zero-mean uniform weights, zero biases except the forget gate at 1.
  void initialize(std::uint64_t seed) override;
  std::unique_ptr<model::Forecaster> clone() const override;

 private:
  void check_targets(const series::Dataset& data, std::span<const std::size_t> targets) const;

  LstmConfig config_;
  LstmCell cell_;
  Tensor readout_w_;  // [H, 1]
  Tensor readout_b_;  // [1]
};

}  // namespace deeptfp::lstm
