#pragma once

// Line-oriented `key = value` run configuration shared by every subcommand.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "deeptfp/calendar.hpp"
#include "deeptfp/datagen.hpp"
#include "deeptfp/lstm.hpp"
#include "deeptfp/model.hpp"
#include "deeptfp/trainer.hpp"

namespace deeptfp::config {

struct RunConfig {
  datagen::CityConfig city;
  model::DeepTfpConfig deeptfp;  // rows and cols follow the data
  std::size_t lstm_hidden = 8;
  std::size_t lstm_window = 0;  // 0 means l_c + l_p + l_q
  trainer::TrainConfig train;
  std::uint64_t seed = 1;
  std::vector<calendar::YearMonth> train_months;  // empty means every month

  /// Sets one key from its textual value. Throws ConfigError naming the key.
  void set(std::string_view key, std::string_view value);
  /// Reads `key = value` lines; `#` starts a comment. Throws ConfigError.
  void read(std::istream& in, const std::string& source = "config");
  void load(const std::filesystem::path& path);
  /// Throws ConfigError when any section is invalid.
  void validate() const;

  model::DeepTfpConfig deeptfp_for(std::size_t rows, std::size_t cols) const;
  lstm::LstmConfig lstm_for(std::size_t rows, std::size_t cols) const;
};

struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string description;
};

/// Every accepted key with its default, in documentation order.
const std::vector<KeyInfo>& keys();
/// Formatted key table for --help output.
std::string key_help();

}  // namespace deeptfp::config
