// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mimk/encoders.hpp"
#include "mimk/image.hpp"
#include "mimk/masking.hpp"

namespace mimk {

enum class EncoderKind { kViT, kSwin };
enum class HeadKind { kLinear, kConv };
enum class LossMode { kMaskedOnly, kFull };

struct HeadConfig {
  std::size_t in_dim = 64;
  std::size_t upsample_factor = 8;  // equals the encoder stride
  std::size_t out_channels = 1;
};

/// tokens [H' * W', f^2 * C] -> image [C, H' f, W' f]; channel-major within a
/// token, then (row, col) inside its f x f block.
Tensor pixel_shuffle(const Tensor& x, std::size_t grid_h, std::size_t grid_w, std::size_t factor);
/// Inverse of pixel_shuffle: [C, H, W] -> [(H/f) * (W/f), f^2 * C].
Tensor pixel_unshuffle(const Tensor& img, std::size_t factor);

/// SimMIM's prediction head: per-position linear map to f^2 values, then
/// pixel shuffle. No nonlinearity.
class LinearHead {
 public:
  LinearHead() = default;
  LinearHead(const HeadConfig& cfg, SplitMix64& rng, bool with_bias = true);

  /// features [H', W', D] -> [C, H' f, W' f]
  Tensor forward(const Tensor& features) const;
  void collect(const std::string& prefix, ParamList& out) const;
  Linear& projection() { return proj_; }

 private:
  HeadConfig cfg_;
  Linear proj_;
};

/// Alternative decoder: two padded 3x3 convolutions with gelu between, then
/// pixel shuffle.
class ConvHead {
 public:
  ConvHead() = default;
  ConvHead(const HeadConfig& cfg, SplitMix64& rng);

  Tensor forward(const Tensor& features) const;
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  HeadConfig cfg_;
  Tensor w1_, b1_, w2_, b2_;
};

/// mean |pred - target| over masked patches (kMaskedOnly) or every pixel
/// (kFull). pred is [1, H, W].
Tensor masked_l1_loss(const Tensor& pred, const Image& target, const PatchMask& mask,
                      LossMode mode);
/// Same with an explicit 0/1 pixel weight map (used for line masks).
Tensor masked_l1_loss(const Tensor& pred, const Image& target,
                      const std::vector<double>& pixel_weights, LossMode mode);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::kSwin;
  std::size_t image_size = 64;
  std::size_t patch_size = 4;
  std::size_t window_size = 4;
  std::size_t embed_dim = 32;
  std::vector<std::size_t> depths{2, 2};
  std::vector<std::size_t> heads{2, 4};
  std::size_t encoder_stride = 8;
  double mlp_ratio = 2.0;
  HeadKind head = HeadKind::kLinear;
  std::size_t in_channels = 1;
  bool position_embedding = true;
  bool input_norm = true;  // standardize the input with its visible-pixel statistics
  std::uint64_t seed = 0;

  ViTConfig vit() const;
  SwinConfig swin() const;
  /// Output stride of the encoder (patch size for ViT).
  std::size_t stride() const;
  void validate() const;
};

/// Encoder + learned mask token + prediction head.
class SimMimModel {
 public:
  explicit SimMimModel(const ModelConfig& cfg);

  /// input image -> prediction [1, H, W]. With a mask, masked patch tokens
  /// are replaced by the mask token.
  Tensor forward(const Image& input, const PatchMask* mask = nullptr) const;
  /// Encoder features [H', W', D'].
  Tensor encode(const Image& input, const PatchMask* mask = nullptr) const;

  ParamList parameters() const;
  const ModelConfig& config() const { return cfg_; }
  /// Side of the patch grid the mask is defined on.
  std::size_t mask_grid() const { return cfg_.image_size / cfg_.patch_size; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ViTEncoder> vit_;
  std::unique_ptr<SwinEncoder> swin_;
  Tensor mask_token_;
  LinearHead linear_head_;
  ConvHead conv_head_;
};

Tensor image_tensor(const Image& img);

/// [1, H, W] input with mean 0 and unit standard deviation over the pixels
/// the encoder can see (all pixels without a mask). Hidden pixels are mapped
/// with the same affine map so no statistic depends on them.
Tensor standardize_input(const Image& img, const PatchMask* mask);

}  // namespace mimk
