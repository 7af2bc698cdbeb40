// SPDX-License-Identifier: Apache-2.0
#include "mimk/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "mimk/errors.hpp"
#include "mimk/ops.hpp"
#include "mimk/rng.hpp"

namespace mimk {

namespace fs = std::filesystem;

OptimState make_optim_state(const ParamList& params) {
  OptimState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(const ParamList& params, OptimState& state) {
  if (state.first_moment.size() != params.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) continue;
    for (double g : params[i].tensor.grad()) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient in '" + params[i].name + "' at step " +
                            std::to_string(state.step + 1));
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto values = p.mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != values.size()) {
      throw ShapeError("optimizer moments do not match parameter '" + params[i].name + "'");
    }
    const auto grad = p.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      values[j] -= state.lr * state.weight_decay * values[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      values[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_at(double epoch_fraction, const ScheduleConfig& cfg) {
  const double f = std::clamp(epoch_fraction, 0.0, 1.0);
  const double epochs = static_cast<double>(cfg.epochs);
  const double warm = static_cast<double>(cfg.warmup_epochs);
  const double t = f * epochs;
  if (warm > 0.0 && t < warm) return cfg.base_lr * t / warm;
  const double span = epochs - warm;
  const double progress = span > 0.0 ? (t - warm) / span : 1.0;
  return cfg.min_lr +
         (cfg.base_lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainRunConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (warmup_epochs >= epochs) throw ContractError("warmup_epochs must be smaller than epochs");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw ContractError("mask_ratio must lie in [0,1]");
  if (!(base_lr > 0.0) || min_lr < 0.0) throw ContractError("learning rates must be positive");
}

MaskedSample make_masked_sample(const Image& target, const ModelConfig& model,
                                const TrainRunConfig& run, std::uint64_t mask_seed) {
  MaskedSample s;
  s.input = target;
  if (run.mask == MaskKind::kLine) {
    // Zeroing k-space rows equals blanking the rows of the rendered magnitude.
    const LineMask lm = cartesian_line_mask(target.height, run.line_acceleration,
                                            run.line_center_fraction);
    s.loss_weights.assign(target.size(), 1.0);
    for (auto r : lm.kept_rows) {
      std::fill_n(s.loss_weights.begin() + static_cast<std::ptrdiff_t>(r * target.width),
                  target.width, 0.0);
    }
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (s.loss_weights[i] != 0.0) s.input.pixels[i] = 0.0;
    }
    return s;
  }
  const std::size_t grid = model.image_size / model.patch_size;
  PatchMask mask = random_patch_mask(grid, grid, run.mask_ratio, mask_seed);
  s.loss_weights = mask.pixel_weights(target.height, target.width);
  if (run.mask_mode == MaskMode::kToken) {
    s.token_mask = std::move(mask);
  } else {
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (s.loss_weights[i] != 0.0) s.input.pixels[i] = 0.0;
    }
  }
  return s;
}

Image tensor_image(const Tensor& t) {
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  return Image(h, w, std::vector<double>(t.data().begin(), t.data().begin() + h * w));
}

Image reconstruction(const Tensor& pred, const Image& target, const MaskedSample& sample,
                     LossMode mode) {
  Image out = tensor_image(pred);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mode == LossMode::kMaskedOnly && sample.loss_weights[i] == 0.0) {
      out.pixels[i] = target.pixels[i];
    } else {
      out.pixels[i] = std::clamp(out.pixels[i], 0.0, 1.0);
    }
  }
  return out;
}

std::uint64_t eval_mask_seed(std::uint64_t run_seed, std::size_t item) {
  return derive_seed(run_seed, 0xE7A1, item);
}

std::vector<ItemScore> evaluate(const SimMimModel& model, const TrainRunConfig& run,
                                const DatasetManifest& data, const std::vector<std::size_t>& items,
                                const std::vector<Image>* cache) {
  std::vector<ItemScore> scores;
  scores.reserve(items.size());
  for (auto idx : items) {
    const Image target = cache ? (*cache)[idx] : load_item(data.items.at(idx), run.items);
    const MaskedSample sample =
        make_masked_sample(target, model.config(), run, eval_mask_seed(run.seed, idx));
    const Tensor pred =
        model.forward(sample.input, sample.token_mask ? &*sample.token_mask : nullptr);
    ItemScore s;
    s.index = idx;
    s.loss = masked_l1_loss(pred, target, sample.loss_weights, run.loss_mode).item();
    const Image recon = reconstruction(pred, target, sample, run.loss_mode);
    s.ssim = ssim(recon, target);
    s.rmse = rmse(recon, target);
    s.l1 = mean_abs_error(recon, target);
    scores.push_back(s);
  }
  return scores;
}

namespace {

struct Means {
  double loss = 0.0;
  double ssim = 0.0;
};

Means means(const std::vector<ItemScore>& scores) {
  Means m;
  if (scores.empty()) return m;
  for (const auto& s : scores) {
    m.loss += s.loss;
    m.ssim += s.ssim;
  }
  m.loss /= static_cast<double>(scores.size());
  m.ssim /= static_cast<double>(scores.size());
  return m;
}

std::string epoch_tag(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", epoch);
  return buf;
}

}  // namespace

TrainResult train(SimMimModel& model, const TrainRunConfig& run, const DatasetManifest& data,
                  const EpochCallback& on_epoch) {
  run.validate();
  const auto train_idx = data.indices(Split::kTrain);
  const auto val_idx = data.indices(Split::kVal);
  if (train_idx.empty()) throw ContractError("training split is empty");

  std::vector<Image> cache;
  cache.reserve(data.items.size());
  for (const auto& item : data.items) cache.push_back(load_item(item, run.items));

  const ParamList params = model.parameters();
  OptimState state = make_optim_state(params);
  state.weight_decay = run.weight_decay;
  const ScheduleConfig schedule = run.schedule();
  const std::size_t steps_per_epoch = (train_idx.size() + run.batch_size - 1) / run.batch_size;
  const double total_steps = static_cast<double>(run.epochs * steps_per_epoch);

  if (!run.out_dir.empty()) {
    fs::create_directories(run.out_dir / "checkpoints");
    if (run.sample_every > 0) fs::create_directories(run.out_dir / "samples");
  }

  TrainResult result;
  std::vector<fs::path> periodic;
  const double inv_batch = 1.0 / static_cast<double>(run.batch_size);
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < run.epochs; ++epoch) {
    const auto order = epoch_order(data, epoch);
    double loss_sum = 0.0, norm_sum = 0.0, lr = 0.0;
    std::size_t samples = 0, steps = 0;
    for (std::size_t start = 0; start < order.size(); start += run.batch_size) {
      for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
        t.mutable_grad();
      }
      const std::size_t stop = std::min(order.size(), start + run.batch_size);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        Image target = cache[idx];
        if (run.augment != AugmentPolicy::kNone) {
          target = augment(target, run.augment, derive_seed(run.seed, 0xA06 + epoch, idx));
        }
        const MaskedSample sample = make_masked_sample(
            target, model.config(), run, derive_seed(run.seed, 0x3A5C + epoch, idx));
        Tape tape;
        const Tensor pred =
            model.forward(sample.input, sample.token_mask ? &*sample.token_mask : nullptr);
        const Tensor loss = masked_l1_loss(pred, target, sample.loss_weights, run.loss_mode);
        if (!std::isfinite(loss.item())) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                              ", step " + std::to_string(global_step + 1));
        }
        batch_loss += loss.item();
        tape.backward(scale(loss, inv_batch));
      }
      const double norm = grad_norm(params);
      lr = lr_at(static_cast<double>(global_step) / total_steps, schedule);
      state.lr = lr;
      adamw_step(params, state);
      ++global_step;
      const double mean_loss = batch_loss / static_cast<double>(stop - start);
      result.step_losses.push_back(mean_loss);
      result.step_grad_norms.push_back(norm);
      loss_sum += batch_loss;
      norm_sum += norm;
      samples += stop - start;
      ++steps;
    }

    const Means tr = means(evaluate(model, run, data, train_idx, &cache));
    const Means va = val_idx.empty() ? tr : means(evaluate(model, run, data, val_idx, &cache));
    MetricsRow row{epoch + 1,
                   loss_sum / static_cast<double>(samples),
                   va.loss,
                   tr.ssim,
                   va.ssim,
                   norm_sum / static_cast<double>(steps),
                   lr};
    result.rows.push_back(row);

    if (!run.out_dir.empty()) {
      const fs::path ckdir = run.out_dir / "checkpoints";
      if (va.ssim > result.best_val_ssim) {
        result.best_val_ssim = va.ssim;
        save_checkpoint(params, ckdir / "best.ckpt");
        if (std::find(result.checkpoints.begin(), result.checkpoints.end(), ckdir / "best.ckpt") ==
            result.checkpoints.end()) {
          result.checkpoints.push_back(ckdir / "best.ckpt");
        }
      }
      const bool last = epoch + 1 == run.epochs;
      if ((run.checkpoint_every > 0 && (epoch + 1) % run.checkpoint_every == 0) || last) {
        const fs::path path = ckdir / ("epoch_" + epoch_tag(epoch + 1) + ".ckpt");
        save_checkpoint(params, path);
        periodic.push_back(path);
        result.checkpoints.push_back(path);
        while (periodic.size() > std::max<std::size_t>(1, run.keep_checkpoints)) {
          fs::remove(periodic.front());
          std::erase(result.checkpoints, periodic.front());
          periodic.erase(periodic.begin());
        }
      }
      if (run.sample_every > 0 && ((epoch + 1) % run.sample_every == 0 || last)) {
        const std::size_t idx = val_idx.empty() ? train_idx.front() : val_idx.front();
        const Image& target = cache[idx];
        const MaskedSample sample =
            make_masked_sample(target, model.config(), run, eval_mask_seed(run.seed, idx));
        const Tensor pred =
            model.forward(sample.input, sample.token_mask ? &*sample.token_mask : nullptr);
        Image shown = sample.input;
        for (std::size_t i = 0; i < shown.size(); ++i) {
          if (sample.loss_weights[i] != 0.0) shown.pixels[i] = 0.0;
        }
        save_grayscale_png(run.out_dir / "samples" / ("epoch_" + epoch_tag(epoch + 1) + ".png"),
                           side_by_side({shown, reconstruction(pred, target, sample, run.loss_mode),
                                         target}));
      }
    }
    if (on_epoch) on_epoch(row);
  }
  return result;
}

bool detect_stagnation(const std::vector<MetricsRow>& rows, std::size_t window) {
  if (window < 2) throw ContractError("stagnation window must be >= 2");
  if (rows.size() < window) {
    throw ContractError("stagnation check needs " + std::to_string(window) + " rows, got " +
                        std::to_string(rows.size()));
  }
  const MetricsRow& first = rows[rows.size() - window];
  const MetricsRow& last = rows.back();
  auto rel = [](double a, double b) {
    return std::abs(b - a) / std::max(std::abs(a), 1e-12);
  };
  return rel(first.val_loss, last.val_loss) < 0.01 && rel(first.train_loss, last.train_loss) > 0.05;
}

void save_checkpoint(const ParamList& params, const fs::path& path) {
  std::ostringstream header;
  for (const auto& p : params) {
    if (p.name.empty() || p.name.find_first_of(" \t\n") != std::string::npos) {
      throw ContractError("checkpoint parameter names must be non-empty without whitespace");
    }
    header << p.name << " f32";
    for (auto d : p.tensor.shape()) header << ' ' << d;
    header << '\n';
  }
  header << '\n';
  std::string bytes = header.str();
  for (const auto& p : params) {
    for (double v : p.tensor.data()) {
      const auto word = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((word >> (8 * b)) & 0xFF));
    }
  }
  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

std::vector<CheckpointEntry> load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<CheckpointEntry> entries;
  std::size_t pos = 0;
  bool terminated = false;
  while (pos < bytes.size()) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) {
      terminated = true;
      break;
    }
    std::istringstream ls(line);
    CheckpointEntry e;
    std::string dtype;
    if (!(ls >> e.name >> dtype) || dtype != "f32") {
      throw FormatError("bad checkpoint header line '" + line + "'");
    }
    std::size_t d = 0;
    while (ls >> d) {
      if (d == 0) throw FormatError("zero dimension in checkpoint header '" + line + "'");
      e.shape.push_back(d);
    }
    if (!ls.eof() || e.shape.empty()) throw FormatError("bad checkpoint dimensions '" + line + "'");
    entries.push_back(std::move(e));
  }
  if (!terminated) throw FormatError("checkpoint header is not terminated by a blank line");
  std::size_t expected = 0;
  for (const auto& e : entries) expected += shape_numel(e.shape) * 4;
  if (bytes.size() - pos != expected) {
    throw FormatError("checkpoint payload has " + std::to_string(bytes.size() - pos) +
                      " bytes, header declares " + std::to_string(expected));
  }
  for (auto& e : entries) {
    e.values.resize(shape_numel(e.shape));
    for (auto& v : e.values) {
      std::uint32_t word = 0;
      for (int b = 0; b < 4; ++b) {
        word |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
      }
      v = std::bit_cast<float>(word);
      pos += 4;
    }
  }
  return entries;
}

void restore_parameters(const ParamList& params, const std::vector<CheckpointEntry>& entries) {
  for (const auto& p : params) {
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const CheckpointEntry& e) { return e.name == p.name; });
    if (it == entries.end()) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    if (it->shape != p.tensor.shape()) {
      throw ShapeError("checkpoint shape " + shape_str(it->shape) + " for '" + p.name +
                       "' does not match model shape " + shape_str(p.tensor.shape()));
    }
  }
  if (entries.size() != params.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(entries.size()) +
                     " tensors, model has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const CheckpointEntry& e) { return e.name == p.name; });
    Tensor t = p.tensor;
    std::copy(it->values.begin(), it->values.end(), t.mutable_data().begin());
  }
}

Image side_by_side(const std::vector<Image>& panels) {
  if (panels.empty()) throw ContractError("side_by_side needs at least one panel");
  constexpr std::size_t kGap = 4;
  const std::size_t h = panels.front().height;
  std::size_t w = kGap * (panels.size() - 1);
  for (const auto& p : panels) {
    if (p.height != h) throw ShapeError("side_by_side panels differ in height");
    w += p.width;
  }
  Image out(h, w, 1.0);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < p.width; ++x) out(y, x0 + x) = p(y, x);
    }
    x0 += p.width + kGap;
  }
  return out;
}

}  // namespace mimk
