// SPDX-License-Identifier: Apache-2.0
#include "mimk/model.hpp"

#include <cmath>

#include "mimk/errors.hpp"
#include "mimk/ops.hpp"

namespace mimk {

namespace {

// features [H', W', D] -> [H' * W', D]
Tensor flatten_grid(const Tensor& features) {
  if (features.rank() != 3) {
    throw ContractError("prediction head expects features [H',W',D], got " +
                        shape_str(features.shape()));
  }
  return reshape(features, {features.dim(0) * features.dim(1), features.dim(2)});
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, std::size_t grid_h, std::size_t grid_w, std::size_t factor) {
  const std::size_t f2 = factor * factor;
  if (x.rank() != 2 || x.dim(0) != grid_h * grid_w || factor == 0 || x.dim(1) % f2 != 0) {
    throw ShapeError("pixel_shuffle: " + shape_str(x.shape()) + " does not fit a " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid at factor " +
                     std::to_string(factor));
  }
  const std::size_t c = x.dim(1) / f2;
  const std::size_t h = grid_h * factor, w = grid_w * factor;
  std::vector<std::size_t> src(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const std::size_t token = (y / factor) * grid_w + xx / factor;
        const std::size_t feat = ch * f2 + (y % factor) * factor + xx % factor;
        src[(ch * h + y) * w + xx] = token * x.dim(1) + feat;
      }
    }
  }
  return gather(x, {c, h, w}, std::move(src));
}

Tensor pixel_unshuffle(const Tensor& img, std::size_t factor) {
  if (img.rank() != 3 || factor == 0 || img.dim(1) % factor != 0 || img.dim(2) % factor != 0) {
    throw ShapeError("pixel_unshuffle: " + shape_str(img.shape()) + " not divisible by " +
                     std::to_string(factor));
  }
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const std::size_t gh = h / factor, gw = w / factor, f2 = factor * factor;
  std::vector<std::size_t> src(img.numel());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t token = (y / factor) * gw + x / factor;
        const std::size_t feat = ch * f2 + (y % factor) * factor + x % factor;
        src[token * c * f2 + feat] = (ch * h + y) * w + x;
      }
    }
  }
  return gather(img, {gh * gw, c * f2}, std::move(src));
}

LinearHead::LinearHead(const HeadConfig& cfg, SplitMix64& rng, bool with_bias)
    : cfg_(cfg),
      proj_(cfg.in_dim, cfg.upsample_factor * cfg.upsample_factor * cfg.out_channels, rng,
            with_bias) {
  if (cfg.upsample_factor < 1) throw ContractError("head upsample factor must be >= 1");
}

Tensor LinearHead::forward(const Tensor& features) const {
  if (features.rank() != 3 || features.dim(2) != cfg_.in_dim) {
    throw ContractError("linear head expects [H',W'," + std::to_string(cfg_.in_dim) + "], got " +
                        shape_str(features.shape()));
  }
  return pixel_shuffle(proj_.forward(flatten_grid(features)), features.dim(0), features.dim(1),
                       cfg_.upsample_factor);
}

void LinearHead::collect(const std::string& prefix, ParamList& out) const {
  proj_.collect(prefix + ".proj", out);
}

ConvHead::ConvHead(const HeadConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
  if (cfg.upsample_factor < 1) throw ContractError("head upsample factor must be >= 1");
  const std::size_t d = cfg.in_dim;
  const std::size_t out = cfg.upsample_factor * cfg.upsample_factor * cfg.out_channels;
  w1_ = init_weight({d, d, 3, 3}, rng);
  b1_ = init_zeros({d});
  w2_ = init_weight({out, d, 3, 3}, rng);
  b2_ = init_zeros({out});
}

Tensor ConvHead::forward(const Tensor& features) const {
  if (features.rank() != 3 || features.dim(2) != cfg_.in_dim) {
    throw ContractError("conv head expects [H',W'," + std::to_string(cfg_.in_dim) + "], got " +
                        shape_str(features.shape()));
  }
  const std::size_t gh = features.dim(0), gw = features.dim(1);
  Tensor x = permute(features, {2, 0, 1});
  x = gelu(add_channelwise(conv2d(pad2d(x, 1), w1_), b1_));
  x = add_channelwise(conv2d(pad2d(x, 1), w2_), b2_);
  Tensor per_position = permute(x, {1, 2, 0});
  return pixel_shuffle(reshape(per_position, {gh * gw, per_position.dim(2)}), gh, gw,
                       cfg_.upsample_factor);
}

void ConvHead::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".conv1.weight", w1_});
  out.push_back({prefix + ".conv1.bias", b1_});
  out.push_back({prefix + ".conv2.weight", w2_});
  out.push_back({prefix + ".conv2.bias", b2_});
}

Tensor masked_l1_loss(const Tensor& pred, const Image& target,
                      const std::vector<double>& pixel_weights, LossMode mode) {
  if (pred.numel() != target.size() || pred.dim(pred.rank() - 1) != target.width) {
    throw ShapeError("masked_l1_loss: prediction " + shape_str(pred.shape()) +
                     " does not match target " + std::to_string(target.height) + "x" +
                     std::to_string(target.width));
  }
  if (mode == LossMode::kFull) {
    const std::vector<double> ones(target.size(), 1.0);
    return weighted_l1(pred, target.pixels, ones);
  }
  double total = 0.0;
  for (double w : pixel_weights) total += w;
  if (pixel_weights.size() != target.size()) throw ShapeError("masked_l1_loss: weight map size");
  if (total <= 0.0) throw ContractError("masked_l1_loss: masked_only mode with nothing masked");
  return weighted_l1(pred, target.pixels, pixel_weights);
}

Tensor masked_l1_loss(const Tensor& pred, const Image& target, const PatchMask& mask,
                      LossMode mode) {
  return masked_l1_loss(pred, target, mask.pixel_weights(target.height, target.width), mode);
}

ViTConfig ModelConfig::vit() const {
  ViTConfig v;
  v.depth = depths.empty() ? 0 : depths.front();
  v.heads = heads.empty() ? 1 : heads.front();
  v.embed_dim = embed_dim;
  v.mlp_ratio = mlp_ratio;
  v.patch = {image_size, patch_size, in_channels, embed_dim};
  v.position_embedding = position_embedding;
  return v;
}

SwinConfig ModelConfig::swin() const {
  SwinConfig s;
  s.stage_depths = depths;
  s.heads_per_stage = heads;
  s.window_size = window_size;
  s.embed_dim = embed_dim;
  s.mlp_ratio = mlp_ratio;
  s.patch = {image_size, patch_size, in_channels, embed_dim};
  s.encoder_stride = encoder_stride;
  s.position_embedding = position_embedding;
  return s;
}

std::size_t ModelConfig::stride() const {
  return encoder == EncoderKind::kViT ? patch_size : encoder_stride;
}

void ModelConfig::validate() const {
  if (encoder == EncoderKind::kViT) {
    if (depths.size() != 1 || heads.size() != 1) {
      throw ContractError("ViT takes a single depth and head count");
    }
    vit().validate();
  } else {
    swin().validate();
  }
}

Tensor image_tensor(const Image& img) {
  return Tensor({1, img.height, img.width}, img.pixels);
}

Tensor standardize_input(const Image& img, const PatchMask* mask) {
  const std::vector<double> hidden =
      mask ? mask->pixel_weights(img.height, img.width) : std::vector<double>(img.size(), 0.0);
  double n = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (hidden[i] != 0.0) continue;
    n += 1.0;
    sum += img.pixels[i];
  }
  const double mean = n > 0.0 ? sum / n : 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (hidden[i] == 0.0) var += (img.pixels[i] - mean) * (img.pixels[i] - mean);
  }
  const double sd = n > 0.0 ? std::sqrt(var / n) : 0.0;
  const double inv = sd > 1e-6 ? 1.0 / sd : 1.0;
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = (img.pixels[i] - mean) * inv;
  return Tensor({1, img.height, img.width}, std::move(out));
}

SimMimModel::SimMimModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  SplitMix64 rng(derive_seed(cfg.seed, 0x313u));
  std::size_t feature_dim = cfg.embed_dim;
  if (cfg.encoder == EncoderKind::kViT) {
    vit_ = std::make_unique<ViTEncoder>(cfg.vit(), rng);
  } else {
    swin_ = std::make_unique<SwinEncoder>(cfg.swin(), rng);
    feature_dim = cfg.swin().final_dim();
  }
  mask_token_ = init_weight({cfg.embed_dim}, rng);
  const HeadConfig head{feature_dim, cfg.stride(), cfg.in_channels};
  if (cfg.head == HeadKind::kLinear) {
    linear_head_ = LinearHead(head, rng);
  } else {
    conv_head_ = ConvHead(head, rng);
  }
}

Tensor SimMimModel::encode(const Image& input, const PatchMask* mask) const {
  if (input.height != cfg_.image_size || input.width != cfg_.image_size) {
    throw ContractError("model expects " + std::to_string(cfg_.image_size) + "x" +
                        std::to_string(cfg_.image_size) + " images, got " +
                        std::to_string(input.height) + "x" + std::to_string(input.width));
  }
  const Tensor img = cfg_.input_norm ? standardize_input(input, mask) : image_tensor(input);
  return vit_ ? vit_->forward(img, mask, mask_token_) : swin_->forward(img, mask, mask_token_);
}

Tensor SimMimModel::forward(const Image& input, const PatchMask* mask) const {
  Tensor features = encode(input, mask);
  return cfg_.head == HeadKind::kLinear ? linear_head_.forward(features)
                                        : conv_head_.forward(features);
}

ParamList SimMimModel::parameters() const {
  ParamList out;
  if (vit_) {
    vit_->collect("encoder", out);
  } else {
    swin_->collect("encoder", out);
  }
  out.push_back({"mask_token", mask_token_});
  if (cfg_.head == HeadKind::kLinear) {
    linear_head_.collect("head", out);
  } else {
    conv_head_.collect("head", out);
  }
  return out;
}

}  // namespace mimk
