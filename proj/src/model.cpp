#include "deeptfp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deeptfp/error.hpp"

namespace deeptfp::model {

using tensor::Shape;

// ---------------------------------------------------------------------------
// Forecaster

std::vector<NamedTensor> Forecaster::named_parameters() const {
  std::vector<NamedTensor> out;
  for (auto& [name, slot] : const_cast<Forecaster*>(this)->parameter_slots())
    out.emplace_back(name, *slot);
  return out;
}

std::vector<Tensor> Forecaster::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::vector<double>> Forecaster::predict_range(const series::Dataset& data,
                                                           std::size_t t_begin,
                                                           std::size_t t_end) const {
  tensor::NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(t_end > t_begin ? t_end - t_begin : 0);
  for (std::size_t t = t_begin; t < t_end; ++t) {
    const auto p = predict(data, t);
    out.emplace_back(p.data().begin(), p.data().end());
  }
  return out;
}

Tensor Forecaster::batch_loss(const series::Dataset& data,
                              std::span<const std::size_t> targets) const {
  if (targets.empty()) throw ShapeError("batch_loss: empty batch");
  Tensor total;
  for (std::size_t t : targets) {
    const Tensor l = tensor::mse_loss(predict(data, t), data.frame(t));
    total = total.defined() ? tensor::add(total, l) : l;
  }
  return tensor::scale(total, 1.0 / static_cast<double>(targets.size()));
}

void Forecaster::copy_parameters_from(const Forecaster& other) {
  auto mine = named_parameters();
  const auto theirs = other.named_parameters();
  if (mine.size() != theirs.size()) throw ShapeError("parameter count mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first != theirs[i].first || mine[i].second.shape() != theirs[i].second.shape()) {
      throw ShapeError("parameter '" + mine[i].first + "' does not match '" + theirs[i].first +
                       "'");
    }
    auto dst = mine[i].second.mutable_data();
    std::copy(theirs[i].second.data().begin(), theirs[i].second.data().end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------
// Building blocks

void DeepTfpConfig::validate() const {
  windows.validate();
  if (rows == 0 || cols == 0) throw ConfigError("grid rows and cols must be positive");
  if (features == 0) throw ConfigError("features must be >= 1");
  if (kernel % 2 == 0) throw ConfigError("kernel must be odd");
  if (ar_lags == 0) throw ConfigError("ar_lags must be >= 1");
}

Conv Conv::zeros(std::size_t out, std::size_t in, std::size_t k) {
  return {Tensor::zeros({out, in, k, k}, true), Tensor::zeros({out}, true)};
}

Tensor ResidualUnit::forward(const Tensor& x) const {
  return tensor::add(x, second(tensor::relu(first(tensor::relu(x)))));
}

Branch Branch::zeros(std::size_t channels, const DeepTfpConfig& config) {
  Branch b;
  b.input = Conv::zeros(config.features, channels, config.kernel);
  for (std::size_t u = 0; u < config.residual_units; ++u) {
    b.units.push_back({Conv::zeros(config.features, config.features, config.kernel),
                       Conv::zeros(config.features, config.features, config.kernel)});
  }
  b.output = Conv::zeros(1, config.features, config.kernel);
  return b;
}

std::string Branch::signature() const {
  auto conv = [](const Conv& c, bool abstract_input) {
    const auto& s = c.kernel.shape();
    return "[" + (abstract_input ? std::string("L") : std::to_string(s[1])) + "->" +
           std::to_string(s[0]) + ",k" + std::to_string(s[2]) + "]";
  };
  std::string sig = "conv" + conv(input, true) + "+relu";
  for (const auto& u : units) sig += "|res" + conv(u.first, false) + conv(u.second, false);
  sig += "|conv" + conv(output, false);
  return sig;
}

BranchWindows BranchWindows::at(const series::Dataset& data, std::size_t t) {
  const auto inst = series::TrainingInstance::at(data.spec(), t);
  return {data.stack(inst.closeness), data.stack(inst.period), data.stack(inst.trend)};
}

Tensor forward_branch(const Branch& branch, const Tensor& window) {
  if (window.rank() != 3) {
    throw ShapeError("forward_branch: window must be [channels,H,W], got " +
                     tensor::shape_string(window.shape()));
  }
  if (window.shape()[0] != branch.channels()) {
    throw ShapeError("forward_branch: branch expects " + std::to_string(branch.channels()) +
                     " channels, window has " + std::to_string(window.shape()[0]));
  }
  Tensor h = tensor::relu(branch.input(window));
  for (const auto& unit : branch.units) h = unit.forward(h);
  const Tensor out = branch.output(h);
  return tensor::reshape(out, {window.shape()[1], window.shape()[2]});
}

Tensor fuse(const Tensor& out_c, const Tensor& out_p, const Tensor& out_q,
            const FusionWeights& w) {
  for (const Tensor* t : {&out_p, &out_q, &w.closeness, &w.period, &w.trend}) {
    if (t->shape() != out_c.shape()) {
      throw ShapeError("fuse: shape mismatch " + tensor::shape_string(t->shape()) + " vs " +
                       tensor::shape_string(out_c.shape()));
    }
  }
  return tensor::add(tensor::add(tensor::mul(w.closeness, out_c), tensor::mul(w.period, out_p)),
                     tensor::mul(w.trend, out_q));
}

Tensor ar_predict(const ArHead& head, std::span<const Tensor> history) {
  if (head.lags() == 0) throw ShapeError("ar_predict: head has no lags");
  if (history.size() < head.lags()) {
    throw ShapeError("ar_predict: need " + std::to_string(head.lags()) +
                     " history values, got " + std::to_string(history.size()));
  }
  Tensor acc = tensor::mul(history[0], head.theta[0]);
  for (std::size_t i = 1; i < head.lags(); ++i) {
    if (history[i].shape() != history[0].shape()) {
      throw ShapeError("ar_predict: history shapes differ");
    }
    acc = tensor::add(acc, tensor::mul(history[i], head.theta[i]));
  }
  return tensor::add(acc, head.intercept);
}

// ---------------------------------------------------------------------------
// DeepTfpModel

DeepTfpModel::DeepTfpModel(DeepTfpConfig config) : config_(config) {
  config_.validate();
  closeness_ = Branch::zeros(config_.windows.closeness, config_);
  period_ = Branch::zeros(config_.windows.period_len, config_);
  trend_ = Branch::zeros(config_.windows.trend_len, config_);
  const Shape grid{config_.rows, config_.cols};
  fusion_ = {Tensor::zeros(grid, true), Tensor::zeros(grid, true), Tensor::zeros(grid, true)};
  for (std::size_t i = 0; i < config_.ar_lags; ++i) head_.theta.push_back(Tensor::zeros({1}, true));
  head_.intercept = Tensor::zeros({1}, true);
}

Tensor DeepTfpModel::fused(const BranchWindows& w) const {
  return fuse(forward_branch(closeness_, w.closeness), forward_branch(period_, w.period),
              forward_branch(trend_, w.trend), fusion_);
}

Tensor DeepTfpModel::forward(std::span<const BranchWindows> lags) const {
  if (lags.size() < head_.lags()) {
    throw ShapeError("DeepTfpModel::forward: need windows for " + std::to_string(head_.lags()) +
                     " lags, got " + std::to_string(lags.size()));
  }
  std::vector<Tensor> history;
  history.reserve(head_.lags());
  for (std::size_t i = 0; i < head_.lags(); ++i) history.push_back(fused(lags[i]));
  return ar_predict(head_, history);
}

std::vector<std::pair<std::string, Tensor*>> DeepTfpModel::parameter_slots() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_conv = [&](const std::string& prefix, Conv& c) {
    out.emplace_back(prefix + ".kernel", &c.kernel);
    out.emplace_back(prefix + ".bias", &c.bias);
  };
  auto add_branch = [&](const std::string& name, Branch& b) {
    add_conv(name + ".input", b.input);
    for (std::size_t u = 0; u < b.units.size(); ++u) {
      add_conv(name + ".unit" + std::to_string(u) + ".first", b.units[u].first);
      add_conv(name + ".unit" + std::to_string(u) + ".second", b.units[u].second);
    }
    add_conv(name + ".output", b.output);
  };
  add_branch("closeness", closeness_);
  add_branch("period", period_);
  add_branch("trend", trend_);
  out.emplace_back("fusion.closeness", &fusion_.closeness);
  out.emplace_back("fusion.period", &fusion_.period);
  out.emplace_back("fusion.trend", &fusion_.trend);
  for (std::size_t i = 0; i < head_.lags(); ++i)
    out.emplace_back("ar.theta" + std::to_string(i + 1), &head_.theta[i]);
  out.emplace_back("ar.intercept", &head_.intercept);
  return out;
}

std::vector<std::pair<std::string, std::string>> DeepTfpModel::hyperparameters() const {
  const auto& w = config_.windows;
  return {{"rows", std::to_string(config_.rows)},
          {"cols", std::to_string(config_.cols)},
          {"l_c", std::to_string(w.closeness)},
          {"l_p", std::to_string(w.period_len)},
          {"l_q", std::to_string(w.trend_len)},
          {"p", std::to_string(w.period)},
          {"q", std::to_string(w.trend)},
          {"features", std::to_string(config_.features)},
          {"residual_units", std::to_string(config_.residual_units)},
          {"kernel", std::to_string(config_.kernel)},
          {"ar_lags", std::to_string(config_.ar_lags)}};
}

std::size_t DeepTfpModel::first_target(const series::WindowSpec& spec) const {
  return spec.first_target() + config_.ar_lags - 1;
}

namespace {

void check_compatible(const DeepTfpConfig& config, const series::Dataset& data) {
  if (!(data.spec() == config.windows)) {
    throw ConfigError("dataset windows differ from the model's window configuration");
  }
  if (data.series().rows != config.rows || data.series().cols != config.cols) {
    throw ShapeError("dataset grid differs from the model grid");
  }
}

}  // namespace

Tensor DeepTfpModel::predict(const series::Dataset& data, std::size_t t) const {
  check_compatible(config_, data);
  if (t < first_target(data.spec())) {
    throw HistoryError("target " + std::to_string(t) + " precedes the first predictable index " +
                       std::to_string(first_target(data.spec())));
  }
  std::vector<BranchWindows> lags;
  for (std::size_t i = 0; i < head_.lags(); ++i) lags.push_back(BranchWindows::at(data, t - i));
  return forward(lags);
}

std::vector<std::vector<double>> DeepTfpModel::predict_range(const series::Dataset& data,
                                                             std::size_t t_begin,
                                                             std::size_t t_end) const {
  check_compatible(config_, data);
  if (t_end <= t_begin) return {};
  if (t_begin < first_target(data.spec())) {
    throw HistoryError("target " + std::to_string(t_begin) +
                       " precedes the first predictable index");
  }
  tensor::NoGradGuard no_grad;
  // Each fused output feeds n consecutive predictions; compute it once.
  const std::size_t lag_span = head_.lags() - 1;
  std::vector<Tensor> fused_cache;
  for (std::size_t t = t_begin - lag_span; t < t_end; ++t)
    fused_cache.push_back(fused(BranchWindows::at(data, t)));
  std::vector<std::vector<double>> out;
  out.reserve(t_end - t_begin);
  std::vector<Tensor> history(head_.lags());
  for (std::size_t t = t_begin; t < t_end; ++t) {
    const std::size_t newest = t - (t_begin - lag_span);
    for (std::size_t i = 0; i < head_.lags(); ++i) history[i] = fused_cache[newest - i];
    const auto p = ar_predict(head_, history);
    out.emplace_back(p.data().begin(), p.data().end());
  }
  return out;
}

void DeepTfpModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](Tensor& kernel) {
    const auto& s = kernel.shape();
    const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in),
                                                std::sqrt(6.0 / fan_in));
    for (double& v : kernel.mutable_data()) v = dist(rng);
  };
  auto zero = [](Tensor& t) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0); };
  for (Branch* b : {&closeness_, &period_, &trend_}) {
    fill_uniform(b->input.kernel);
    zero(b->input.bias);
    for (auto& u : b->units) {
      fill_uniform(u.first.kernel);
      zero(u.first.bias);
      zero(u.second.kernel);
      zero(u.second.bias);
    }
    fill_uniform(b->output.kernel);
    zero(b->output.bias);
  }
  for (Tensor* w : {&fusion_.closeness, &fusion_.period, &fusion_.trend}) {
    std::fill(w->mutable_data().begin(), w->mutable_data().end(), 1.0 / 3.0);
  }
  for (std::size_t i = 0; i < head_.lags(); ++i) head_.theta[i].mutable_data()[0] = i == 0 ? 1.0 : 0.0;
  zero(head_.intercept);
}

std::unique_ptr<Forecaster> DeepTfpModel::clone() const {
  auto copy = std::make_unique<DeepTfpModel>(config_);
  copy->copy_parameters_from(*this);
  return copy;
}

}  // namespace deeptfp::model
