#pragma once

// RMSE, the persistence baseline and the month-split experiment protocol with
// its CSV and SVG artifacts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deeptfp/lstm.hpp"
#include "deeptfp/model.hpp"
#include "deeptfp/series.hpp"
#include "deeptfp/trainer.hpp"

namespace deeptfp::eval {

/// sqrt(mean((predicted - actual)^2)). Throws DataError on empty or unequal input.
double rmse(std::span<const double> actual, std::span<const double> predicted);

/// Predicts that frame t equals frame t - 1. Has no parameters.
class PersistenceModel final : public model::Forecaster {
 public:
  PersistenceModel(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  std::string kind() const override { return "persistence"; }
  std::vector<std::pair<std::string, tensor::Tensor*>> parameter_slots() override { return {}; }
  std::vector<std::pair<std::string, std::string>> hyperparameters() const override;
  std::size_t first_target(const series::WindowSpec&) const override { return 1; }
  tensor::Tensor predict(const series::Dataset& data, std::size_t t) const override;
  void initialize(std::uint64_t) override {}
  std::unique_ptr<model::Forecaster> clone() const override;

 private:
  std::size_t rows_, cols_;
};

struct Protocol {
  std::string name;
  std::vector<calendar::YearMonth> train_months;
  calendar::YearMonth test_month;

  /// "4a": the two months before the last month of the series; "4b": the one
  /// month before it. The test month is the series' last month. Throws
  /// ConfigError on an unknown name, DataError when the series is too short.
  static Protocol preset(const std::string& name, const series::FlowSeries& series);
};

struct ExperimentSpec {
  std::string name = "experiment";
  Protocol protocol;
  model::DeepTfpConfig deeptfp;  // its windows define the dataset windows
  lstm::LstmConfig lstm;
  trainer::TrainConfig train;
  std::uint64_t seed = 1;  // parameter initialization
  std::vector<std::string> models{"deeptfp", "lstm", "persistence"};
  /// Flat cells that hold at least one road; empty means every cell.
  std::vector<std::uint8_t> cell_mask;
  /// When set, each trained model writes its run directory under run_dir/<model>.
  std::optional<std::filesystem::path> run_dir;

  /// Canonical `key=value` lines covering every setting.
  std::string canonical() const;
  /// 64-bit FNV-1a of canonical(), as 16 hex digits.
  std::string digest() const;
};

struct ModelResult {
  std::string name;
  std::vector<double> predicted;  // road-averaged flow per test interval
  std::vector<double> mse;        // mean over road cells of the squared error, per interval
  double rmse = 0.0;              // sqrt(mean(mse))
  double curve_rmse = 0.0;        // rmse(actual curve, predicted curve)
  std::optional<trainer::TrainReport> training;
};

struct EvalReport {
  std::string experiment;
  std::string config_digest;
  std::vector<calendar::EpochSeconds> timestamps;
  std::vector<double> actual;  // road-averaged flow per test interval
  std::vector<ModelResult> models;

  const ModelResult& model(const std::string& name) const;
};

/// One-step-ahead evaluation of a trained model over the test instances: every
/// prediction reads observed frames only.
ModelResult evaluate_model(const std::string& name, const model::Forecaster& model,
                           const series::Dataset& test, std::span<const std::uint8_t> cell_mask);

/// Trains every requested model on the protocol's train months and evaluates
/// it on the test month.
EvalReport run_experiment(const series::FlowSeries& series, const ExperimentSpec& spec);

/// Writes report.csv, summary.csv and comparison.svg into `dir`.
void emit_artifacts(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace deeptfp::eval
