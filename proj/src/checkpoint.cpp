#include "deeptfp/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "deeptfp/error.hpp"
#include "deeptfp/lstm.hpp"

namespace deeptfp::checkpoint {

namespace {

constexpr const char* kMagic = "deeptfp-checkpoint 1";

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& token) {
  double v = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto fmt = std::chars_format::hex;
  bool negative = false;
  if (begin != end && *begin == '-') negative = true, ++begin;
  if (end - begin >= 2 && begin[0] == '0' && (begin[1] == 'x' || begin[1] == 'X')) begin += 2;
  const auto [ptr, ec] = std::from_chars(begin, end, v, fmt);
  if (ec != std::errc() || ptr != end) throw DataError("checkpoint: bad number '" + token + "'");
  return negative ? -v : v;
}

std::size_t parse_size(const std::string& token) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw DataError("checkpoint: bad count '" + token + "'");
  }
  return v;
}

std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::size_t hyper(const Checkpoint& c, const std::string& key) {
  return parse_size(c.hyperparameter(key));
}

}  // namespace

Checkpoint Checkpoint::capture(const model::Forecaster& model, const series::Normalizer& normalizer,
                               const series::WindowSpec& windows) {
  Checkpoint c;
  c.kind = model.kind();
  c.hyperparameters = model.hyperparameters();
  c.normalizer = normalizer;
  c.windows = windows;
  for (const auto& [name, t] : model.named_parameters()) c.tensors.emplace_back(name, t.clone(false));
  return c;
}

std::string Checkpoint::hyperparameter(const std::string& key) const {
  for (const auto& [k, v] : hyperparameters)
    if (k == key) return v;
  throw DataError("checkpoint: missing hyperparameter '" + key + "'");
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (kind != other.kind || hyperparameters != other.hyperparameters ||
      !(normalizer == other.normalizer) || !(windows == other.windows) ||
      tensors.size() != other.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = other.tensors[i];
    if (a.first != b.first || a.second.shape() != b.second.shape()) return false;
    if (!std::equal(a.second.data().begin(), a.second.data().end(), b.second.data().begin())) {
      return false;
    }
  }
  return true;
}

void write(std::ostream& out, const Checkpoint& c) {
  out << kMagic << '\n';
  out << "kind " << c.kind << '\n';
  for (const auto& [k, v] : c.hyperparameters) out << "hyper " << k << ' ' << v << '\n';
  out << "normalizer " << hex(c.normalizer.min()) << ' ' << hex(c.normalizer.max()) << '\n';
  const auto& w = c.windows;
  out << "windows " << w.closeness << ' ' << w.period_len << ' ' << w.trend_len << ' ' << w.period
      << ' ' << w.trend << '\n';
  for (const auto& [name, t] : c.tensors) {
    out << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    for (double v : t.data()) out << hex(v) << '\n';
  }
  out << "end\n";
}

Checkpoint read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw DataError("checkpoint: unrecognized header");
  Checkpoint c;
  bool ended = false, have_norm = false, have_windows = false;
  while (!ended && std::getline(in, line)) {
    const auto w = words(line);
    if (w.empty()) continue;
    if (w[0] == "kind" && w.size() == 2) {
      c.kind = w[1];
    } else if (w[0] == "hyper" && w.size() == 3) {
      c.hyperparameters.emplace_back(w[1], w[2]);
    } else if (w[0] == "normalizer" && w.size() == 3) {
      c.normalizer = series::Normalizer(parse_hex(w[1]), parse_hex(w[2]));
      have_norm = true;
    } else if (w[0] == "windows" && w.size() == 6) {
      c.windows = {parse_size(w[1]), parse_size(w[2]), parse_size(w[3]), parse_size(w[4]),
                   parse_size(w[5])};
      have_windows = true;
    } else if (w[0] == "tensor" && w.size() >= 3) {
      const std::size_t rank = parse_size(w[2]);
      if (w.size() != 3 + rank) throw DataError("checkpoint: bad tensor line '" + line + "'");
      tensor::Shape shape;
      for (std::size_t i = 0; i < rank; ++i) shape.push_back(parse_size(w[3 + i]));
      std::vector<double> data(tensor::shape_size(shape));
      for (double& v : data) {
        if (!std::getline(in, line)) throw DataError("checkpoint: truncated tensor '" + w[1] + "'");
        v = parse_hex(line);
      }
      c.tensors.emplace_back(w[1], tensor::Tensor::from_data(shape, std::move(data), true));
    } else if (w[0] == "end" && w.size() == 1) {
      ended = true;
    } else {
      throw DataError("checkpoint: unexpected line '" + line + "'");
    }
  }
  if (!ended || c.kind.empty() || !have_norm || !have_windows) {
    throw DataError("checkpoint: incomplete file");
  }
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write(out, ckpt);
  if (!out) throw DataError("error writing checkpoint " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read(in);
}

std::unique_ptr<model::Forecaster> restore(const Checkpoint& c) {
  std::unique_ptr<model::Forecaster> m;
  if (c.kind == "deeptfp") {
    model::DeepTfpConfig cfg;
    cfg.rows = hyper(c, "rows");
    cfg.cols = hyper(c, "cols");
    cfg.windows = {hyper(c, "l_c"), hyper(c, "l_p"), hyper(c, "l_q"), hyper(c, "p"), hyper(c, "q")};
    cfg.features = hyper(c, "features");
    cfg.residual_units = hyper(c, "residual_units");
    cfg.kernel = hyper(c, "kernel");
    cfg.ar_lags = hyper(c, "ar_lags");
    m = std::make_unique<model::DeepTfpModel>(cfg);
  } else if (c.kind == "lstm") {
    lstm::LstmConfig cfg;
    cfg.rows = hyper(c, "rows");
    cfg.cols = hyper(c, "cols");
    cfg.hidden = hyper(c, "lstm_hidden");
    cfg.window = hyper(c, "lstm_window");
    m = std::make_unique<lstm::LstmModel>(cfg);
  } else {
    throw DataError("checkpoint: unknown model kind '" + c.kind + "'");
  }
  auto slots = m->parameter_slots();
  if (slots.size() != c.tensors.size()) throw DataError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& [name, t] = c.tensors[i];
    if (slots[i].first != name || slots[i].second->shape() != t.shape()) {
      throw DataError("checkpoint: parameter '" + name + "' does not fit the model");
    }
    auto dst = slots[i].second->mutable_data();
    std::copy(t.data().begin(), t.data().end(), dst.begin());
  }
  return m;
}

}  // namespace deeptfp::checkpoint
