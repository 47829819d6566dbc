// Command-line entry point: datagen, train, predict and experiment.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deeptfp/checkpoint.hpp"
#include "deeptfp/config.hpp"
#include "deeptfp/datagen.hpp"
#include "deeptfp/error.hpp"
#include "deeptfp/eval.hpp"
#include "deeptfp/lstm.hpp"
#include "deeptfp/model.hpp"
#include "deeptfp/series.hpp"
#include "deeptfp/trainer.hpp"

namespace fs = std::filesystem;
using namespace deeptfp;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kTraining = 4, kHistory = 5 };

enum class LogLevel { kError, kWarn, kInfo, kDebug };

LogLevel log_level() {
  const char* env = std::getenv("DEEPTFP_LOG_LEVEL");
  const std::string v = env ? env : "info";
  if (v == "error") return LogLevel::kError;
  if (v == "warn") return LogLevel::kWarn;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& message) {
  if (level > log_level()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

/// Options shared by every subcommand that reads a run configuration.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    cmd.add_option("--set", overrides, "override one key, as key=value (repeatable)");
    cmd.add_option("--seed", seed, "seed for data generation and training");
    cmd.footer("Precedence: config file < --set < --seed.\n" + config::key_help());
  }

  config::RunConfig resolve() const {
    config::RunConfig cfg;
    if (!config_path.empty()) cfg.load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    cfg.validate();
    return cfg;
  }
};

struct Data {
  series::RoadGridMap map;
  series::FlowSeries series;
};

Data load_data(const std::string& flows, const std::string& gridmap, int interval_minutes) {
  const fs::path map_path = gridmap.empty() ? fs::path(flows).parent_path() / "gridmap.csv" : fs::path(gridmap);
  Data d;
  d.map = series::RoadGridMap::load_csv(map_path);
  if (!fs::exists(flows)) throw DataError("cannot open flows '" + flows + "'");
  d.series = series::load_csv(flows, d.map, interval_minutes);
  log(LogLevel::kInfo, "loaded " + std::to_string(d.series.frame_count()) + " intervals of " +
                           std::to_string(d.map.road_count()) + " roads on a " +
                           std::to_string(d.series.rows) + "x" + std::to_string(d.series.cols) + " grid");
  return d;
}

std::vector<std::uint8_t> road_cells(const series::RoadGridMap& map) {
  std::vector<std::uint8_t> mask;
  for (auto n : map.roads_per_cell()) mask.push_back(n > 0 ? 1 : 0);
  return mask;
}

/// Instances whose target falls in one of `months`, scaled by a normalizer
/// fitted on those months. Every month when `months` is empty.
series::Dataset training_set(const series::FlowSeries& s, const series::WindowSpec& windows,
                             const std::vector<calendar::YearMonth>& months) {
  if (months.empty()) return series::build_instances(s, windows);
  auto in_months = [&](std::size_t t) {
    return std::find(months.begin(), months.end(), s.month_of(t)) != months.end();
  };
  std::vector<double> seen;
  for (std::size_t t = 0; t < s.frame_count(); ++t)
    if (in_months(t)) seen.insert(seen.end(), s.frame(t).begin(), s.frame(t).end());
  if (seen.empty()) throw DataError("the data holds no interval of the configured train_months");
  const auto all = series::build_instances(s, windows, series::Normalizer::fit(seen));
  std::vector<series::TrainingInstance> kept;
  for (const auto& inst : all.instances())
    if (in_months(inst.t)) kept.push_back(inst);
  return all.with_instances(std::move(kept));
}

std::unique_ptr<model::Forecaster> make_model(const std::string& kind, const config::RunConfig& cfg,
                                              std::size_t rows, std::size_t cols) {
  if (kind == "deeptfp") return std::make_unique<model::DeepTfpModel>(cfg.deeptfp_for(rows, cols));
  return std::make_unique<lstm::LstmModel>(cfg.lstm_for(rows, cols));
}

void write_bytes(const fs::path& path, const std::string& text) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot write " + path.string());
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

int run_datagen(const ConfigFlags& flags, const std::string& out) {
  const auto cfg = flags.resolve();
  const auto city = datagen::generate(cfg.city);
  fs::create_directories(out);
  datagen::export_csv(city.series, city.map, out);
  log(LogLevel::kInfo, "wrote " + std::to_string(city.series.frame_count()) + " intervals of " +
                           std::to_string(city.map.road_count()) + " roads to " + out);
  return kOk;
}

int run_train(const ConfigFlags& flags, const std::string& data_path, const std::string& gridmap,
              const std::string& kind, const std::string& run_dir) {
  const auto cfg = flags.resolve();
  const auto data = load_data(data_path, gridmap, cfg.city.interval_minutes);
  auto model = make_model(kind, cfg, data.series.rows, data.series.cols);
  const auto dataset = training_set(data.series, cfg.deeptfp.windows, cfg.train_months);
  trainer::init_params(*model, cfg.seed);
  fs::create_directories(run_dir);
  trainer::TrainOptions options;
  options.run_dir = run_dir;
  options.on_epoch = [](std::size_t epoch, double loss, double val) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu loss %.6g val_rmse %.6g", epoch, loss, val);
    log(LogLevel::kInfo, line);
  };
  const auto report = trainer::train(*model, dataset, cfg.train, options);
  log(LogLevel::kInfo, "stopped (" + trainer::to_string(report.stop) + ") with best epoch " +
                           std::to_string(report.best_epoch));
  return kOk;
}

int run_predict(const std::string& run_dir, const std::string& data_path, const std::string& gridmap,
                const std::string& at, int interval_minutes) {
  const fs::path run(run_dir);
  const auto ckpt = checkpoint::load(fs::is_directory(run) ? run / "best.ckpt" : run);
  const auto model = checkpoint::restore(ckpt);
  const auto data = load_data(data_path, gridmap, interval_minutes);
  const auto index = data.series.index_of(calendar::parse_iso8601(at));
  if (!index) throw DataError("timestamp " + at + " lies outside the data");

  // Observed frames up to --at, then a placeholder for the predicted interval
  // which no model reads.
  auto observed = data.series;
  const std::size_t target = *index + 1;
  observed.values.resize(target * observed.cells());
  observed.filled.resize(observed.values.size());
  observed.values.resize((target + 1) * observed.cells(), 0.0);
  observed.filled.resize(observed.values.size(), 1);
  const auto normalized = std::make_shared<const series::FlowSeries>(series::normalize(observed, ckpt.normalizer));
  const series::Dataset dataset(normalized, ckpt.normalizer, ckpt.windows, {});
  if (target < model->first_target(ckpt.windows)) {
    throw HistoryError("predicting after " + at + " needs " + std::to_string(model->first_target(ckpt.windows)) +
                       " observed intervals, the data has " + std::to_string(target));
  }
  const auto frame = model->predict_range(dataset, target, target + 1).front();

  const auto shared = data.map.roads_per_cell();
  const std::string stamp = calendar::format_iso8601(observed.timestamp(target));
  std::string out = "timestamp,road_id,flow\n";
  char value[64];
  for (std::size_t r = 0; r < data.map.road_count(); ++r) {
    const std::size_t cell = data.map.flat_cell(r);
    std::snprintf(value, sizeof value, "%.17g",
                  ckpt.normalizer.inverse(frame[cell]) / static_cast<double>(shared[cell]));
    out += stamp + "," + data.map.roads()[r] + "," + value + "\n";
  }
  std::fwrite(out.data(), 1, out.size(), stdout);
  return kOk;
}

int run_experiment(const ConfigFlags& flags, const std::string& data_path, const std::string& gridmap,
                   const std::string& protocol, const std::string& out) {
  const auto cfg = flags.resolve();
  const auto data = load_data(data_path, gridmap, cfg.city.interval_minutes);
  eval::ExperimentSpec spec;
  spec.name = "protocol-" + protocol;
  spec.protocol = eval::Protocol::preset(protocol, data.series);
  spec.deeptfp = cfg.deeptfp_for(data.series.rows, data.series.cols);
  spec.lstm = cfg.lstm_for(data.series.rows, data.series.cols);
  spec.train = cfg.train;
  spec.seed = cfg.seed;
  spec.cell_mask = road_cells(data.map);
  spec.run_dir = fs::path(out) / "runs";
  fs::create_directories(out);
  const auto report = eval::run_experiment(data.series, spec);
  eval::emit_artifacts(report, out);
  write_bytes(fs::path(out) / "config.txt", spec.canonical());
  for (const auto& m : report.models) {
    char line[160];
    std::snprintf(line, sizeof line, "%-12s rmse %.6f curve_rmse %.6f", m.name.c_str(), m.rmse, m.curve_rmse);
    std::cout << line << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  tensor::tune_allocator();
  CLI::App app("DeepTFP traffic flow prediction");
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, exp_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("datagen", "Generate a synthetic city as gridmap.csv and flows.csv");
  gen_flags.attach(*gen);
  gen->add_option("--out", gen_out, "output directory")->required();

  std::string train_data, train_map, train_model = "deeptfp", train_run;
  auto* tr = app.add_subcommand("train", "Train a model and write its run directory");
  train_flags.attach(*tr);
  tr->add_option("--data", train_data, "flows.csv (timestamp,road_id,flow)")->required();
  tr->add_option("--gridmap", train_map, "gridmap.csv (default: next to --data)");
  tr->add_option("--model", train_model, "deeptfp or lstm")->check(CLI::IsMember({"deeptfp", "lstm"}));
  tr->add_option("--out-run", train_run, "run directory for checkpoints and report.csv")->required();

  std::string pred_run, pred_data, pred_map, pred_at;
  int pred_interval = 15;
  auto* pr = app.add_subcommand("predict", "Print the predicted flow of each road for the interval after --at");
  pr->add_option("--run", pred_run, "run directory (uses best.ckpt) or checkpoint file")->required();
  pr->add_option("--data", pred_data, "flows.csv with the observed history")->required();
  pr->add_option("--gridmap", pred_map, "gridmap.csv (default: next to --data)");
  pr->add_option("--at", pred_at, "timestamp of the last observed interval, e.g. 2016-12-01T08:00:00Z")->required();
  pr->add_option("--interval-minutes", pred_interval, "interval length of the data");

  std::string exp_data, exp_map, exp_protocol, exp_out;
  auto* ex = app.add_subcommand("experiment", "Train deeptfp and lstm, evaluate them with persistence on the last month");
  exp_flags.attach(*ex);
  ex->add_option("--data", exp_data, "flows.csv (timestamp,road_id,flow)")->required();
  ex->add_option("--gridmap", exp_map, "gridmap.csv (default: next to --data)");
  ex->add_option("--protocol", exp_protocol, "4a (two training months) or 4b (one)")->required();
  ex->add_option("--out", exp_out, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*gen) return run_datagen(gen_flags, gen_out);
    if (*tr) return run_train(train_flags, train_data, train_map, train_model, train_run);
    if (*pr) return run_predict(pred_run, pred_data, pred_map, pred_at, pred_interval);
    if (*ex) return run_experiment(exp_flags, exp_data, exp_map, exp_protocol, exp_out);
  } catch (const ConfigError& e) {
    log(LogLevel::kError, std::string("config: ") + e.what());
    return kConfig;
  } catch (const HistoryError& e) {
    log(LogLevel::kError, std::string("history: ") + e.what());
    return kHistory;
  } catch (const TrainingError& e) {
    log(LogLevel::kError, std::string("training: ") + e.what());
    return kTraining;
  } catch (const DataError& e) {
    log(LogLevel::kError, std::string("data: ") + e.what());
    return kData;
  } catch (const ShapeError& e) {
    log(LogLevel::kError, std::string("data: ") + e.what());
    return kData;
  } catch (const std::exception& e) {
    log(LogLevel::kError, e.what());
    return kFailure;
  }
  return kFailure;
}
