// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mimk/run_config.hpp"
#include "mimk/trainer.hpp"

namespace mimk {

/// Writes images/phantom_NNN.png, kspace/kspace_NNN.png and manifest.tsv
/// (one "images/phantom_NNN.png<TAB>split" line per phantom).
void run_phantom(std::size_t n, std::size_t size, std::uint64_t seed,
                 const std::filesystem::path& out_dir, std::ostream& log);

/// Trains into cfg.train.out_dir: config.txt (resolved), manifest.tsv,
/// metrics.csv, loss.svg, ssim.svg, grad_norm.svg, train.log, checkpoints/
/// and samples/.
TrainResult run_train(const RunConfig& cfg, std::ostream& log);

enum class Predictor { kModel, kIdentity, kZero };

struct EvalOptions {
  std::filesystem::path checkpoint;     // required for Predictor::kModel
  Predictor predictor = Predictor::kModel;
  std::string split = "val";            // train | val | all
  std::optional<std::string> mask_spec;  // overrides the configured mask
};

struct EvalRow {
  std::size_t item = 0;
  std::string path;
  double ssim = 0.0;
  double rmse = 0.0;
  double l1 = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;
  EvalRow stddev;  // population standard deviation
};

/// Scores every item of the chosen split and writes eval.csv into
/// cfg.train.out_dir. Missing or incompatible checkpoints raise UsageError.
EvalReport run_eval(const RunConfig& cfg, const EvalOptions& options, std::ostream& out);

struct AblationResult {
  std::vector<MetricsRow> none;
  std::vector<MetricsRow> flip_crop;
};

/// Trains with augment = none and augment = flip_crop under one seed in
/// out_dir/none and out_dir/flip_crop, then writes ablation.csv
/// (epoch,ssim_none,ssim_aug) and ablation.svg.
AblationResult run_ablation(const RunConfig& cfg, std::ostream& log);

/// Plots metrics.csv columns to an SVG file.
void run_plot(const std::filesystem::path& csv, const std::vector<std::string>& columns,
              const std::filesystem::path& out_svg);

}  // namespace mimk
