#include "deeptfp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "deeptfp/error.hpp"

namespace deeptfp::config {

namespace {

[[noreturn]] void bad(std::string_view key, std::string_view value, const std::string& why) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) +
                    "': " + why);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a non-negative integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a number");
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  KeyInfo info;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> apply;
};

template <class Member>
Entry size_key(std::string key, std::string def, std::string doc, Member member) {
  return {{std::move(key), std::move(def), std::move(doc)},
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_size(k, v); }};
}

template <class Member>
Entry double_key(std::string key, std::string def, std::string doc, Member member) {
  return {{std::move(key), std::move(def), std::move(doc)},
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_double(k, v);
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    // Synthetic city
    t.push_back(size_key("rows", "16", "grid rows of the synthetic city",
                         [](RunConfig& c) -> std::size_t& { return c.city.rows; }));
    t.push_back(size_key("cols", "16", "grid columns of the synthetic city",
                         [](RunConfig& c) -> std::size_t& { return c.city.cols; }));
    t.push_back(size_key("roads", "0", "number of roads, 0 for one per cell",
                         [](RunConfig& c) -> std::size_t& { return c.city.roads; }));
    t.push_back({{"start_month", "2016-09", "first generated month (YYYY-MM)"},
                 [](RunConfig& c, std::string_view, std::string_view v) {
                   c.city.start = calendar::YearMonth::parse(v);
                 }});
    t.push_back(size_key("months", "4", "number of generated months",
                         [](RunConfig& c) -> std::size_t& { return c.city.months; }));
    t.push_back(size_key("days", "0", "number of generated days, 0 for whole months",
                         [](RunConfig& c) -> std::size_t& { return c.city.days; }));
    t.push_back({{"interval_minutes", "15", "minutes per interval"},
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   const auto m = to_size(k, v);
                   if (m == 0 || m > 1440) bad(k, v, "must lie in 1..1440");
                   c.city.interval_minutes = static_cast<int>(m);
                 }});
    t.push_back(double_key("base_flow", "100", "mean flow level per cell",
                           [](RunConfig& c) -> double& { return c.city.base_flow; }));
    t.push_back(double_key("daily_amplitude", "1", "strength of the daily profile",
                           [](RunConfig& c) -> double& { return c.city.daily_amplitude; }));
    t.push_back(double_key("weekend_damping", "0.3", "fractional flow reduction on weekends",
                           [](RunConfig& c) -> double& { return c.city.weekend_damping; }));
    t.push_back(double_key("diffusion", "0.1", "neighbour smoothing coefficient in [0, 0.25]",
                           [](RunConfig& c) -> double& { return c.city.diffusion; }));
    t.push_back(double_key("incident_rate", "0.0005", "incident probability per cell and interval",
                           [](RunConfig& c) -> double& { return c.city.incident_rate; }));
    t.push_back(double_key("incident_magnitude", "0.5", "fraction of flow lost during an incident",
                           [](RunConfig& c) -> double& { return c.city.incident_magnitude; }));
    t.push_back(double_key("incident_duration", "4", "mean incident length in intervals",
                           [](RunConfig& c) -> double& { return c.city.incident_duration; }));
    t.push_back(double_key("noise", "0.05", "relative observation noise",
                           [](RunConfig& c) -> double& { return c.city.noise; }));
    // Windows and model
    t.push_back(size_key("l_c", "3", "closeness window length",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.windows.closeness; }));
    t.push_back(size_key("l_p", "2", "period window length",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.windows.period_len; }));
    t.push_back(size_key("l_q", "2", "trend window length",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.windows.trend_len; }));
    t.push_back(size_key("p", "96", "period spacing in intervals",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.windows.period; }));
    t.push_back(size_key("q", "672", "trend spacing in intervals",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.windows.trend; }));
    t.push_back(size_key("features", "8", "convolution feature maps F",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.features; }));
    t.push_back(size_key("residual_units", "2", "residual units per branch U",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.residual_units; }));
    t.push_back(size_key("kernel", "3", "odd convolution kernel size",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.kernel; }));
    t.push_back(size_key("ar_lags", "3", "autoregressive order n",
                         [](RunConfig& c) -> std::size_t& { return c.deeptfp.ar_lags; }));
    t.push_back(size_key("lstm_hidden", "8", "LSTM hidden size",
                         [](RunConfig& c) -> std::size_t& { return c.lstm_hidden; }));
    t.push_back(size_key("lstm_window", "0", "LSTM input frames, 0 for l_c + l_p + l_q",
                         [](RunConfig& c) -> std::size_t& { return c.lstm_window; }));
    // Training
    t.push_back(size_key("batch_size", "32", "instances per minibatch",
                         [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
    t.push_back(size_key("max_epochs", "200", "epoch budget",
                         [](RunConfig& c) -> std::size_t& { return c.train.max_epochs; }));
    t.push_back(double_key("learning_rate", "0.01", "optimizer step size",
                           [](RunConfig& c) -> double& { return c.train.learning_rate; }));
    t.push_back(size_key("patience", "10", "epochs without validation improvement before stopping",
                         [](RunConfig& c) -> std::size_t& { return c.train.patience; }));
    t.push_back({{"optimizer", "sgd", "sgd or adam"},
                 [](RunConfig& c, std::string_view, std::string_view v) {
                   c.train.optimizer = trainer::parse_optimizer(std::string(v));
                 }});
    t.push_back(double_key("clip_norm", "5", "global gradient norm limit, 0 to disable",
                           [](RunConfig& c) -> double& { return c.train.clip_norm; }));
    t.push_back(double_key("val_fraction", "0.1", "trailing share of training instances used for validation",
                           [](RunConfig& c) -> double& { return c.train.validation_fraction; }));
    t.push_back({{"train_months", "", "comma-separated YYYY-MM training months, empty for all"},
                 [](RunConfig& c, std::string_view, std::string_view v) {
                   c.train_months.clear();
                   std::size_t pos = 0;
                   while (pos <= v.size() && !v.empty()) {
                     const auto comma = v.find(',', pos);
                     const auto item = trim(v.substr(pos, comma == std::string_view::npos
                                                              ? std::string_view::npos
                                                              : comma - pos));
                     c.train_months.push_back(calendar::YearMonth::parse(item));
                     if (comma == std::string_view::npos) break;
                     pos = comma + 1;
                   }
                 }});
    t.push_back({{"seed", "1", "seed for generation, initialization and batch order"},
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   c.seed = to_u64(k, v);
                   c.city.seed = c.seed;
                   c.train.seed = c.seed;
                 }});
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& e : entries()) {
    if (e.info.key == key) {
      try {
        e.apply(*this, key, trim(value));
      } catch (const ConfigError& err) {
        const std::string msg = err.what();
        if (msg.find("'" + std::string(key) + "'") != std::string::npos) throw;
        throw ConfigError("key '" + std::string(key) + "': " + msg);
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::read(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      set(trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  read(in, path.string());
}

void RunConfig::validate() const {
  city.validate();
  train.validate();
  deeptfp.validate();
  lstm_for(1, 1).validate();
}

model::DeepTfpConfig RunConfig::deeptfp_for(std::size_t rows, std::size_t cols) const {
  model::DeepTfpConfig c = deeptfp;
  c.rows = rows;
  c.cols = cols;
  return c;
}

lstm::LstmConfig RunConfig::lstm_for(std::size_t rows, std::size_t cols) const {
  const auto& w = deeptfp.windows;
  return {rows, cols, lstm_hidden,
          lstm_window == 0 ? w.closeness + w.period_len + w.trend_len : lstm_window};
}

const std::vector<KeyInfo>& keys() {
  static const std::vector<KeyInfo> out = [] {
    std::vector<KeyInfo> k;
    for (const auto& e : entries()) k.push_back(e.info);
    return k;
  }();
  return out;
}

std::string key_help() {
  std::ostringstream out;
  out << "Config keys (key = value; default in brackets):\n";
  for (const auto& k : keys()) {
    std::string head = "  " + k.key + " [" + k.default_value + "]";
    if (head.size() < 32) head.resize(32, ' ');
    out << head << ' ' << k.description << '\n';
  }
  return out.str();
}

}  // namespace deeptfp::config
