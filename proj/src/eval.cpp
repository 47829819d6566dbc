#include "deeptfp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "deeptfp/error.hpp"

namespace deeptfp::eval {

double rmse(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.size() != predicted.size()) {
    throw DataError("rmse: length mismatch (" + std::to_string(actual.size()) + " vs " +
                    std::to_string(predicted.size()) + ")");
  }
  if (actual.empty()) throw DataError("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = predicted[i] - actual[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(actual.size()));
}

std::vector<std::pair<std::string, std::string>> PersistenceModel::hyperparameters() const {
  return {{"rows", std::to_string(rows_)}, {"cols", std::to_string(cols_)}};
}

tensor::Tensor PersistenceModel::predict(const series::Dataset& data, std::size_t t) const {
  if (t < 1) throw HistoryError("persistence needs one preceding frame");
  return data.frame(t - 1);
}

std::unique_ptr<model::Forecaster> PersistenceModel::clone() const {
  return std::make_unique<PersistenceModel>(rows_, cols_);
}

Protocol Protocol::preset(const std::string& name, const series::FlowSeries& series) {
  if (name != "4a" && name != "4b") {
    throw ConfigError("protocol must be 4a or 4b, got '" + name + "'");
  }
  if (series.frame_count() == 0) throw DataError("empty series");
  const auto last = series.month_of(series.frame_count() - 1);
  std::vector<calendar::YearMonth> months;
  for (auto m = series.month_of(0); m < last; m = m.next()) months.push_back(m);
  const std::size_t need = name == "4a" ? 2 : 1;
  if (months.size() < need) {
    throw DataError("protocol " + name + " needs " + std::to_string(need) +
                    " month(s) before the test month " + last.str());
  }
  return {name, std::vector<calendar::YearMonth>(months.end() - need, months.end()), last};
}

std::string ExperimentSpec::canonical() const {
  std::ostringstream out;
  out << "name=" << name << '\n' << "protocol=" << protocol.name << '\n' << "train_months=";
  for (std::size_t i = 0; i < protocol.train_months.size(); ++i)
    out << (i ? "," : "") << protocol.train_months[i].str();
  out << '\n' << "test_month=" << protocol.test_month.str() << '\n';
  for (const auto& [k, v] : model::DeepTfpModel(deeptfp).hyperparameters())
    out << "deeptfp." << k << '=' << v << '\n';
  for (const auto& [k, v] : lstm::LstmModel(lstm).hyperparameters())
    out << "lstm." << k << '=' << v << '\n';
  char lr[64], clip[64], vf[64];
  std::snprintf(lr, sizeof lr, "%.17g", train.learning_rate);
  std::snprintf(clip, sizeof clip, "%.17g", train.clip_norm);
  std::snprintf(vf, sizeof vf, "%.17g", train.validation_fraction);
  out << "batch_size=" << train.batch_size << '\n'
      << "max_epochs=" << train.max_epochs << '\n'
      << "learning_rate=" << lr << '\n'
      << "patience=" << train.patience << '\n'
      << "train_seed=" << train.seed << '\n'
      << "optimizer=" << trainer::to_string(train.optimizer) << '\n'
      << "clip_norm=" << clip << '\n'
      << "val_fraction=" << vf << '\n'
      << "seed=" << seed << '\n'
      << "models=";
  for (std::size_t i = 0; i < models.size(); ++i) out << (i ? "," : "") << models[i];
  out << '\n' << "masked_cells=" << std::count(cell_mask.begin(), cell_mask.end(), 0) << '\n';
  return out.str();
}

std::string ExperimentSpec::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const ModelResult& EvalReport::model(const std::string& name) const {
  for (const auto& m : models)
    if (m.name == name) return m;
  throw Error("no result for model '" + name + "'");
}

namespace {

std::vector<std::uint8_t> full_mask(std::span<const std::uint8_t> mask, std::size_t cells) {
  if (mask.empty()) return std::vector<std::uint8_t>(cells, 1);
  if (mask.size() != cells) throw ShapeError("cell mask size differs from the grid");
  if (std::find(mask.begin(), mask.end(), 1) == mask.end()) throw DataError("cell mask is empty");
  return {mask.begin(), mask.end()};
}

std::vector<double> actual_curve(const series::Dataset& test, const std::vector<std::uint8_t>& mask) {
  const auto& norm = test.normalizer();
  const double n = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
  std::vector<double> curve;
  for (const auto& inst : test.instances()) {
    const auto f = test.series().frame(inst.t);
    double s = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c)
      if (mask[c]) s += norm.inverse(f[c]);
    curve.push_back(s / n);
  }
  return curve;
}

std::unique_ptr<model::Forecaster> make_model(const std::string& name, const ExperimentSpec& spec,
                                              const series::FlowSeries& series) {
  if (name == "deeptfp") {
    auto m = std::make_unique<model::DeepTfpModel>(spec.deeptfp);
    m->initialize(spec.seed);
    return m;
  }
  if (name == "lstm") {
    auto m = std::make_unique<lstm::LstmModel>(spec.lstm);
    m->initialize(spec.seed);
    return m;
  }
  if (name == "persistence") return std::make_unique<PersistenceModel>(series.rows, series.cols);
  throw ConfigError("unknown model '" + name + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

}  // namespace

ModelResult evaluate_model(const std::string& name, const model::Forecaster& model,
                           const series::Dataset& test, std::span<const std::uint8_t> cell_mask) {
  if (test.empty()) throw DataError("no test instances");
  const auto mask = full_mask(cell_mask, test.series().cells());
  const double n = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
  const auto& norm = test.normalizer();
  const auto preds = trainer::predict_instances(model, test);
  ModelResult r;
  r.name = name;
  double mse_sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto actual = test.series().frame(test[i].t);
    double curve = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < actual.size(); ++c) {
      if (!mask[c]) continue;
      const double p = norm.inverse(preds[i][c]);
      const double d = p - norm.inverse(actual[c]);
      curve += p;
      sq += d * d;
    }
    r.predicted.push_back(curve / n);
    r.mse.push_back(sq / n);
    mse_sum += sq / n;
  }
  r.rmse = std::sqrt(mse_sum / static_cast<double>(test.size()));
  r.curve_rmse = rmse(actual_curve(test, mask), r.predicted);
  return r;
}

EvalReport run_experiment(const series::FlowSeries& series, const ExperimentSpec& spec) {
  spec.train.validate();
  if (spec.models.empty()) throw ConfigError("models must name at least one model");
  const auto split = series::split_by_month(series, spec.protocol.train_months,
                                            spec.protocol.test_month, spec.deeptfp.windows);
  const auto mask = full_mask(spec.cell_mask, series.cells());

  EvalReport report;
  report.experiment = spec.name;
  report.config_digest = spec.digest();
  for (const auto& inst : split.test.instances()) report.timestamps.push_back(series.timestamp(inst.t));
  report.actual = actual_curve(split.test, mask);

  for (const auto& name : spec.models) {
    auto m = make_model(name, spec, series);
    const std::size_t first = m->first_target(split.test.spec());
    if (split.test[0].t < first) {
      throw HistoryError(name + " needs " + std::to_string(first) +
                         " frames of history before the test month");
    }
    std::optional<trainer::TrainReport> training;
    if (!m->parameter_slots().empty()) {
      trainer::TrainOptions opts;
      if (spec.run_dir) opts.run_dir = *spec.run_dir / name;
      training = trainer::train(*m, split.train, spec.train, opts);
    }
    auto result = evaluate_model(name, *m, split.test, mask);
    result.training = std::move(training);
    report.models.push_back(std::move(result));
  }
  return report;
}

void emit_artifacts(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t rows = report.timestamps.size();
  for (const auto& m : report.models) {
    if (m.predicted.size() != rows || m.mse.size() != rows || report.actual.size() != rows) {
      throw DataError("report series lengths differ");
    }
  }

  {
    auto out = open_out(dir / "report.csv");
    out << "timestamp,actual";
    for (const auto& m : report.models) out << ',' << m.name;
    for (const auto& m : report.models) out << ',' << m.name << "_mse";
    out << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
      out << calendar::format_iso8601(report.timestamps[i]) << ',' << fmt(report.actual[i]);
      for (const auto& m : report.models) out << ',' << fmt(m.predicted[i]);
      for (const auto& m : report.models) out << ',' << fmt(m.mse[i]);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "model,rmse,curve_rmse\n";
    for (const auto& m : report.models) out << m.name << ',' << fmt(m.rmse) << ',' << fmt(m.curve_rmse) << '\n';
  }
  {
    constexpr double kWidth = 1200, kHeight = 480, kLeft = 60, kRight = 20, kTop = 40, kBottom = 40;
    double top = 0.0;
    for (double v : report.actual) top = std::max(top, v);
    for (const auto& m : report.models)
      for (double v : m.predicted) top = std::max(top, v);
    top = top > 0 ? top * 1.05 : 1.0;
    const double span = rows > 1 ? static_cast<double>(rows - 1) : 1.0;
    auto polyline = [&](const std::vector<double>& ys, const char* colour, const std::string& id) {
      std::string pts;
      char buf[48];
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const double x = kLeft + (kWidth - kLeft - kRight) * static_cast<double>(i) / span;
        const double y = kTop + (kHeight - kTop - kBottom) * (1.0 - ys[i] / top);
        std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", x, y);
        pts += buf;
      }
      return "  <polyline id=\"" + id + "\" fill=\"none\" stroke=\"" + colour +
             "\" stroke-width=\"1\" points=\"" + pts + "\"/>\n";
    };
    const char* palette[] = {"#d62728", "#1f77b4", "#7f7f7f", "#2ca02c", "#9467bd"};
    auto out = open_out(dir / "comparison.svg");
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
        << "  <title>" << report.experiment << ": road-averaged flow, actual vs predicted</title>\n"
        << "  <desc>config " << report.config_digest << "</desc>\n"
        << "  <rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" fill=\"white\"/>\n"
        << "  <line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
        << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n"
        << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
        << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    char label[64];
    std::snprintf(label, sizeof label, "%.1f", top);
    out << "  <text x=\"4\" y=\"" << kTop + 4 << "\" font-size=\"12\">" << label << "</text>\n"
        << "  <text x=\"4\" y=\"" << kHeight - kBottom << "\" font-size=\"12\">0</text>\n";
    if (rows > 0) {
      out << "  <text x=\"" << kLeft << "\" y=\"" << kHeight - 12 << "\" font-size=\"12\">"
          << calendar::format_iso8601(report.timestamps.front()) << "</text>\n"
          << "  <text x=\"" << kWidth - kRight - 150 << "\" y=\"" << kHeight - 12
          << "\" font-size=\"12\">" << calendar::format_iso8601(report.timestamps.back())
          << "</text>\n";
    }
    out << polyline(report.actual, "#000000", "actual");
    for (std::size_t i = 0; i < report.models.size(); ++i) {
      out << polyline(report.models[i].predicted, palette[i % 5], report.models[i].name);
    }
    double lx = kLeft + 10;
    out << "  <text x=\"" << lx << "\" y=\"24\" font-size=\"13\" fill=\"#000000\">actual</text>\n";
    for (std::size_t i = 0; i < report.models.size(); ++i) {
      lx += 110;
      out << "  <text x=\"" << lx << "\" y=\"24\" font-size=\"13\" fill=\"" << palette[i % 5] << "\">"
          << report.models[i].name << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw DataError("error writing comparison.svg");
  }
}

}  // namespace deeptfp::eval
