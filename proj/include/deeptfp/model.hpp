#pragma once

// The DeepTFP network: three residual convolutional branches (closeness,
// period, trend) fused elementwise, followed by an order-n autoregressive head.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deeptfp/series.hpp"
#include "deeptfp/tensor.hpp"

namespace deeptfp::model {

using tensor::Tensor;

using NamedTensor = std::pair<std::string, Tensor>;

/// Common interface of every trainable one-step-ahead predictor.
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual std::string kind() const = 0;
  /// Handles of the learnable tensors in a fixed order with stable names.
  /// Replacing a handle swaps the parameter (used by gradient checks).
  virtual std::vector<std::pair<std::string, Tensor*>> parameter_slots() = 0;
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Hyperparameters as key/value pairs, enough to rebuild the model.
  virtual std::vector<std::pair<std::string, std::string>> hyperparameters() const = 0;

  /// Earliest 0-based target index the model can predict under the dataset's windows.
  virtual std::size_t first_target(const series::WindowSpec& spec) const = 0;
  /// Normalized [rows, cols] prediction of frame t from frames before t.
  /// Differentiable with respect to the parameters.
  virtual Tensor predict(const series::Dataset& data, std::size_t t) const = 0;
  /// Gradient-free predictions for targets t_begin..t_end-1, one vector per target.
  virtual std::vector<std::vector<double>> predict_range(const series::Dataset& data,
                                                         std::size_t t_begin,
                                                         std::size_t t_end) const;
  /// Mean over `targets` of the per-target mse_loss against the actual frame.
  virtual Tensor batch_loss(const series::Dataset& data,
                            std::span<const std::size_t> targets) const;

  /// Fresh parameter values, deterministic per seed.
  virtual void initialize(std::uint64_t seed) = 0;
  virtual std::unique_ptr<Forecaster> clone() const = 0;

  /// Copies parameter values from a model of the same shape.
  void copy_parameters_from(const Forecaster& other);
};

struct DeepTfpConfig {
  std::size_t rows = 16;
  std::size_t cols = 16;
  series::WindowSpec windows;
  std::size_t features = 8;        // F
  std::size_t residual_units = 2;  // U
  std::size_t kernel = 3;
  std::size_t ar_lags = 3;  // n

  void validate() const;
  bool operator==(const DeepTfpConfig&) const = default;
};

struct Conv {
  Tensor kernel;  // [out, in, K, K]
  Tensor bias;    // [out]

  static Conv zeros(std::size_t out, std::size_t in, std::size_t k);
  Tensor operator()(const Tensor& x) const { return tensor::conv2d(x, kernel, bias); }
};

/// x + conv2(relu(conv1(relu(x)))). With zero weights it is the identity.
struct ResidualUnit {
  Conv first;
  Conv second;

  Tensor forward(const Tensor& x) const;
};

/// Input conv (window channels -> F) with ReLU, a stack of residual units,
/// and an output conv (F -> 1).
struct Branch {
  Conv input;
  std::vector<ResidualUnit> units;
  Conv output;

  static Branch zeros(std::size_t channels, const DeepTfpConfig& config);
  std::size_t channels() const { return input.kernel.shape()[1]; }
  /// Layer/shape signature independent of the window length, e.g.
  /// "conv[L->8,k3]+relu|res[8->8,k3][8->8,k3]|conv[8->1,k3]".
  std::string signature() const;
};

/// Grid-shaped weights of the elementwise fusion.
struct FusionWeights {
  Tensor closeness;
  Tensor period;
  Tensor trend;
};

/// X_hat = c + sum_i theta_i * history_i, with history_0 the current fused
/// output and history_i the one i intervals earlier. The noise term is zero.
struct ArHead {
  std::vector<Tensor> theta;  // n tensors of shape [1]
  Tensor intercept;           // [1]

  std::size_t lags() const { return theta.size(); }
};

/// Stacked input windows of one target time.
struct BranchWindows {
  Tensor closeness;  // [l_c, H, W]
  Tensor period;     // [l_p, H, W]
  Tensor trend;      // [l_q, H, W]

  static BranchWindows at(const series::Dataset& data, std::size_t t);
};

/// [H, W] output of one branch. Throws ShapeError on a channel mismatch.
Tensor forward_branch(const Branch& branch, const Tensor& window);
/// W_c*out_c + W_p*out_p + W_q*out_q, elementwise.
Tensor fuse(const Tensor& out_c, const Tensor& out_p, const Tensor& out_q,
            const FusionWeights& weights);
/// Throws ShapeError when the history is shorter than the lag order.
Tensor ar_predict(const ArHead& head, std::span<const Tensor> history);

class DeepTfpModel final : public Forecaster {
 public:
  /// All parameters zero; call initialize() for a trainable start.
  explicit DeepTfpModel(DeepTfpConfig config);

  const DeepTfpConfig& config() const { return config_; }
  Branch& closeness() { return closeness_; }
  Branch& period() { return period_; }
  Branch& trend() { return trend_; }
  const Branch& closeness() const { return closeness_; }
  const Branch& period() const { return period_; }
  const Branch& trend() const { return trend_; }
  FusionWeights& fusion() { return fusion_; }
  ArHead& head() { return head_; }
  const FusionWeights& fusion() const { return fusion_; }
  const ArHead& head() const { return head_; }

  /// X_Con for one target time.
  Tensor fused(const BranchWindows& windows) const;
  /// Full forward pass. `lags[i]` holds the windows of target t - i.
  Tensor forward(std::span<const BranchWindows> lags) const;

  std::string kind() const override { return "deeptfp"; }
  std::vector<std::pair<std::string, Tensor*>> parameter_slots() override;
  std::vector<std::pair<std::string, std::string>> hyperparameters() const override;
  std::size_t first_target(const series::WindowSpec& spec) const override;
  Tensor predict(const series::Dataset& data, std::size_t t) const override;
  std::vector<std::vector<double>> predict_range(const series::Dataset& data, std::size_t t_begin,
                                                 std::size_t t_end) const override;
  void initialize(std::uint64_t seed) override;
  std::unique_ptr<Forecaster> clone() const override;

 private:
  DeepTfpConfig config_;
  Branch closeness_;
  Branch period_;
  Branch trend_;
  FusionWeights fusion_;
  ArHead head_;
};

}  // namespace deeptfp::model
