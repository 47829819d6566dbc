#include "deeptfp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "deeptfp/checkpoint.hpp"
#include "deeptfp/error.hpp"

namespace deeptfp::trainer {

using tensor::Tensor;

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("optimizer must be sgd or adam, got '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kNoEpochs: return "no-epochs";
    case StopReason::kMaxEpochs: return "max-epochs";
    case StopReason::kPatience: return "patience";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,val_rmse\n";
  char buf[128];
  for (std::size_t e = 0; e < epochs(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e + 1, train_loss[e], val_rmse[e]);
    out << buf;
  }
}

void init_params(model::Forecaster& model, std::uint64_t seed) { model.initialize(seed); }

std::vector<Batch> sample_batches(const series::Dataset& data, std::size_t batch_size,
                                  std::mt19937_64& rng) {
  if (data.empty()) throw DataError("cannot sample batches from an empty dataset");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
  }
  return batches;
}

std::vector<std::vector<double>> predict_instances(const model::Forecaster& model,
                                                   const series::Dataset& data) {
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  std::size_t i = 0;
  while (i < data.size()) {
    std::size_t j = i + 1;
    while (j < data.size() && data[j].t == data[j - 1].t + 1) ++j;
    auto run = model.predict_range(data, data[i].t, data[j - 1].t + 1);
    for (auto& p : run) out.push_back(std::move(p));
    i = j;
  }
  return out;
}

double evaluate_rmse(const model::Forecaster& model, const series::Dataset& data) {
  if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
  const auto preds = predict_instances(model, data);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto actual = data.series().frame(data[i].t);
    for (std::size_t c = 0; c < actual.size(); ++c) {
      const double d = preds[i][c] - actual[c];
      sum += d * d;
    }
    count += actual.size();
  }
  return std::sqrt(sum / static_cast<double>(count)) * data.normalizer().span();
}

namespace {

void reject_test_instances(const series::Dataset& data, const char* which) {
  for (const auto& inst : data.instances()) {
    if (inst.split == series::Split::kTest) {
      throw DataError(std::string(which) + " set contains test-month target " +
                      std::to_string(inst.t));
    }
  }
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const std::vector<Tensor>& params)
      : config_(config), params_(params) {
    if (config.optimizer == OptimizerKind::kAdam) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
  }

  void step(double grad_scale) {
    ++steps_;
    const double lr = config_.learning_rate;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor p = params_[k];
      const auto g = p.grad();
      auto w = p.mutable_data();
      if (config_.optimizer == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grad_scale * g[i];
      } else {
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = grad_scale * g[i];
          m[i] = b1 * m[i] + (1.0 - b1) * gi;
          v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
          w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
      }
    }
  }

 private:
  const TrainConfig& config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

[[noreturn]] void abort_non_finite(std::size_t epoch, const std::string& detail,
                                   const TrainConfig& config) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%g", config.learning_rate);
  throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + " (" + detail +
                      "); try a smaller learning_rate than " + buf);
}

void save_checkpoint(const std::filesystem::path& path, const model::Forecaster& model,
                     const series::Dataset& data) {
  checkpoint::save(path, checkpoint::Checkpoint::capture(model, data.normalizer(), data.spec()));
}

}  // namespace

TrainReport train(model::Forecaster& model, const series::Dataset& train_in,
                  const series::Dataset& validation_in, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  reject_test_instances(train_in, "training");
  reject_test_instances(validation_in, "validation");
  const std::size_t min_t = model.first_target(train_in.spec());
  const series::Dataset train = train_in.from_target(min_t);
  const series::Dataset validation = validation_in.from_target(min_t);
  if (train.empty()) throw DataError("no training instances with enough history for the model");
  if (validation.empty()) throw DataError("validation split is empty");

  if (options.run_dir) std::filesystem::create_directories(*options.run_dir);

  TrainReport report;
  report.initial_val_rmse = evaluate_rmse(model, validation);
  double best = report.initial_val_rmse;
  std::unique_ptr<model::Forecaster> best_model = model.clone();
  const std::vector<Tensor> params = model.parameters();
  Optimizer optimizer(config, params);
  std::mt19937_64 rng(config.seed);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = sample_batches(train, config.batch_size, rng);
    for (const auto& batch : batches) {
      std::vector<std::size_t> targets;
      targets.reserve(batch.size());
      for (auto i : batch) targets.push_back(train[i].t);
      for (Tensor p : params) p.zero_grad();
      Tensor loss;
      try {
        loss = model.batch_loss(train, targets);
      } catch (const tensor::NumericError& e) {
        abort_non_finite(epoch, e.what(), config);
      }
      const double value = loss.item();
      if (!std::isfinite(value)) abort_non_finite(epoch, "loss " + std::to_string(value), config);
      tensor::backward(loss);
      double norm2 = 0.0;
      for (const auto& p : params)
        for (double g : p.grad()) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) abort_non_finite(epoch, "gradient norm", config);
      const double scale = (config.clip_norm > 0.0 && norm > config.clip_norm)
                               ? config.clip_norm / norm
                               : 1.0;
      optimizer.step(scale);
      loss_sum += value;
    }
    const double mean_loss = loss_sum / static_cast<double>(batches.size());
    const double val = evaluate_rmse(model, validation);
    report.train_loss.push_back(mean_loss);
    report.val_rmse.push_back(val);
    if (options.run_dir) {
      save_checkpoint(*options.run_dir / ("epoch-" + std::to_string(epoch) + ".ckpt"), model, train);
    }
    if (options.on_epoch) options.on_epoch(epoch, mean_loss, val);
    if (val < best) {
      best = val;
      report.best_epoch = epoch;
      best_model->copy_parameters_from(model);
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      report.stop = StopReason::kPatience;
      break;
    }
    report.stop = StopReason::kMaxEpochs;
  }

  model.copy_parameters_from(*best_model);
  if (options.run_dir) {
    save_checkpoint(*options.run_dir / "best.ckpt", model, train);
    std::ofstream out(*options.run_dir / "report.csv", std::ios::binary);
    report.write_csv(out);
    if (!out) throw DataError("cannot write " + (*options.run_dir / "report.csv").string());
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrainReport train(model::Forecaster& model, const series::Dataset& data, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  reject_test_instances(data, "training");
  const auto [train_set, validation] = data.split_validation(config.validation_fraction);
  return train(model, train_set, validation, config, options);
}

}  // namespace deeptfp::trainer
