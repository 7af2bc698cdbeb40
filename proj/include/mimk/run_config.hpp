// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mimk/data.hpp"
#include "mimk/model.hpp"
#include "mimk/trainer.hpp"

namespace mimk {

/// Everything a run needs: model, optimization, data source.
struct RunConfig {
  std::string preset = "desk";
  ModelConfig model;
  TrainRunConfig train;
  DataSource source = DataSource::kPhantom;
  std::filesystem::path data_dir;
  std::size_t n_phantoms = 200;

  /// Phantom manifest or the sorted PNG directory, split with the run seed.
  DatasetManifest manifest() const;
};

/// Named starting points: "desk" (tiny Swin on 64^2 phantoms), "desk-vit"
/// (the ViT counterpart at the same output stride), "tiny" (16^2 images for
/// quick checks) and "paper" (192^2, patch 1, six stages, stride 32).
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Flat "key = value" lines; '#' starts a comment. The preset key, if any,
/// is applied first, then the remaining keys in file order. Unknown keys,
/// duplicates and malformed values raise UsageError naming the key.
RunConfig parse_run_config(std::istream& is);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one key = value entry.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its resolved value, one per line, in a fixed order.
/// Parsing the output yields the same configuration.
std::string format_run_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace mimk
