#pragma once

// Minibatch gradient training of a Forecaster with early stopping on a
// chronological validation split.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "deeptfp/model.hpp"
#include "deeptfp/series.hpp"

namespace deeptfp::trainer {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  double learning_rate = 0.01;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double clip_norm = 5.0;              // 0 disables clipping
  double validation_fraction = 0.1;

  /// Throws ConfigError.
  void validate() const;
};

enum class StopReason { kNoEpochs, kMaxEpochs, kPatience };
std::string to_string(StopReason reason);

struct TrainReport {
  std::vector<double> train_loss;  // mean batch loss per epoch (normalized units)
  std::vector<double> val_rmse;    // flow units
  StopReason stop = StopReason::kNoEpochs;
  std::size_t best_epoch = 0;  // 1-based, 0 when no epoch ran
  double initial_val_rmse = 0.0;
  double wall_seconds = 0.0;

  std::size_t epochs() const { return train_loss.size(); }
  /// `epoch,train_loss,val_rmse` rows. Wall time is not part of the file.
  void write_csv(std::ostream& out) const;
};

/// Fresh parameters for `model`, deterministic per seed.
void init_params(model::Forecaster& model, std::uint64_t seed);

using Batch = std::vector<std::size_t>;  // positions in the dataset's instance list

/// One epoch's shuffled partition of the dataset into batches. Throws
/// DataError on an empty dataset.
std::vector<Batch> sample_batches(const series::Dataset& data, std::size_t batch_size,
                                  std::mt19937_64& rng);

/// RMSE in flow units of one-step predictions over the dataset's instances.
double evaluate_rmse(const model::Forecaster& model, const series::Dataset& data);
/// Predictions (normalized) for each instance, in instance order.
std::vector<std::vector<double>> predict_instances(const model::Forecaster& model,
                                                   const series::Dataset& data);

struct TrainOptions {
  /// When set, `epoch-<k>.ckpt`, `best.ckpt` and `report.csv` are written here.
  std::optional<std::filesystem::path> run_dir;
  std::function<void(std::size_t epoch, double loss, double val_rmse)> on_epoch;
};

/// Trains on `train`, early-stopping on `validation`, and leaves the
/// best-validation parameters in `model`. Throws TrainingError on a
/// non-finite loss and DataError when a test-tagged instance is passed in.
TrainReport train(model::Forecaster& model, const series::Dataset& train,
                  const series::Dataset& validation, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Splits `data` chronologically by `config.validation_fraction` and trains.
TrainReport train(model::Forecaster& model, const series::Dataset& data, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace deeptfp::trainer
