#pragma once

// Text checkpoints: model kind, hyperparameters, normalizer, windows and every
// named parameter tensor, with values written as hexadecimal floats.

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "deeptfp/model.hpp"
#include "deeptfp/series.hpp"

namespace deeptfp::checkpoint {

struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> hyperparameters;
  series::Normalizer normalizer;
  series::WindowSpec windows;
  std::vector<model::NamedTensor> tensors;

  /// Snapshot of a model's parameters (copied) with the dataset's scaling.
  static Checkpoint capture(const model::Forecaster& model, const series::Normalizer& normalizer,
                            const series::WindowSpec& windows);
  std::string hyperparameter(const std::string& key) const;
  bool operator==(const Checkpoint& other) const;
};

void write(std::ostream& out, const Checkpoint& ckpt);
/// Throws DataError on a malformed or unsupported file.
Checkpoint read(std::istream& in);
void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

/// Rebuilds the tagged model kind and loads the stored parameter values.
std::unique_ptr<model::Forecaster> restore(const Checkpoint& ckpt);

}  // namespace deeptfp::checkpoint
