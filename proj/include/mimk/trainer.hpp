// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mimk/data.hpp"
#include "mimk/masking.hpp"
#include "mimk/metrics.hpp"
#include "mimk/model.hpp"

namespace mimk {

struct OptimState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

OptimState make_optim_state(const ParamList& params);

/// One AdamW update using the gradients stored on `params`. Weight decay is
/// decoupled: p -= lr * wd * p, then the bias-corrected adaptive step.
/// Parameters without a gradient are treated as having a zero gradient.
void adamw_step(const ParamList& params, OptimState& state);

struct ScheduleConfig {
  std::size_t epochs = 100;
  std::size_t warmup_epochs = 5;
  double base_lr = 1e-3;
  double min_lr = 1e-5;
};

/// Linear warmup from 0 to base_lr over the warmup epochs, then cosine decay
/// to min_lr at fraction 1.
double lr_at(double epoch_fraction, const ScheduleConfig& cfg);

enum class MaskKind { kPatch, kLine };
enum class MaskMode { kToken, kPixel };

struct TrainRunConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 1;
  double base_lr = 1e-3;
  double min_lr = 1e-5;
  std::size_t warmup_epochs = 5;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::kMaskedOnly;

  MaskKind mask = MaskKind::kPatch;
  double mask_ratio = 0.5;
  MaskMode mask_mode = MaskMode::kToken;
  std::size_t line_acceleration = 4;
  double line_center_fraction = 0.08;

  AugmentPolicy augment = AugmentPolicy::kNone;
  ItemOptions items;

  std::size_t checkpoint_every = 10;
  std::size_t keep_checkpoints = 3;
  std::size_t sample_every = 10;
  std::filesystem::path out_dir;  // empty: no files written

  void validate() const;
  ScheduleConfig schedule() const { return {epochs, warmup_epochs, base_lr, min_lr}; }
};

/// Model input and loss weights derived from a target and a mask draw.
struct MaskedSample {
  Image input;
  std::optional<PatchMask> token_mask;  // set in token mode
  std::vector<double> loss_weights;     // 1 on hidden pixels
};

MaskedSample make_masked_sample(const Image& target, const ModelConfig& model,
                                const TrainRunConfig& run, std::uint64_t mask_seed);

/// Prediction clamped to [0,1]. In masked-only mode visible pixels are taken
/// from the target, since the loss never constrains them.
Image reconstruction(const Tensor& pred, const Image& target, const MaskedSample& sample,
                     LossMode mode);

Image tensor_image(const Tensor& t);

struct ItemScore {
  std::size_t index = 0;
  double loss = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  double l1 = 0.0;
};

/// Gradient-free evaluation with the fixed per-item evaluation masks.
std::vector<ItemScore> evaluate(const SimMimModel& model, const TrainRunConfig& run,
                                const DatasetManifest& data, const std::vector<std::size_t>& items,
                                const std::vector<Image>* cache = nullptr);

std::uint64_t eval_mask_seed(std::uint64_t run_seed, std::size_t item);

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<double> step_losses;
  std::vector<double> step_grad_norms;
  std::vector<std::filesystem::path> checkpoints;
  double best_val_ssim = -1.0;
};

/// Called after each epoch with the freshly appended row.
using EpochCallback = std::function<void(const MetricsRow&)>;

TrainResult train(SimMimModel& model, const TrainRunConfig& run, const DatasetManifest& data,
                  const EpochCallback& on_epoch = {});

/// True when, over the last `window` rows, validation loss moved by less than
/// 1% (relative) while training loss moved by more than 5%.
bool detect_stagnation(const std::vector<MetricsRow>& rows, std::size_t window);

/// Header lines "name f32 d0 d1 ..." and a blank line, then little-endian
/// float32 payloads in header order.
void save_checkpoint(const ParamList& params, const std::filesystem::path& path);

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into matching parameters; every parameter must
/// be present with the same shape.
void restore_parameters(const ParamList& params, const std::vector<CheckpointEntry>& entries);

/// Side-by-side strip with 4-pixel white separators.
Image side_by_side(const std::vector<Image>& panels);

}  // namespace mimk
