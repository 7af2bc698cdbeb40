// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mimk/layers.hpp"
#include "mimk/masking.hpp"
#include "mimk/tensor.hpp"

namespace mimk {

/// Additive value placed on attention logits between tokens that must not
/// see each other.
inline constexpr double kForbiddenLogit = -1e9;

struct PatchEmbedConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 4;
  std::size_t in_channels = 1;
  std::size_t embed_dim = 32;

  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid() * grid(); }
};

struct ViTConfig {
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t embed_dim = 32;
  double mlp_ratio = 2.0;
  PatchEmbedConfig patch;
  bool position_embedding = true;

  void validate() const;
};

struct SwinConfig {
  std::vector<std::size_t> stage_depths{2, 2};
  std::vector<std::size_t> heads_per_stage{2, 4};
  std::size_t window_size = 4;
  std::size_t embed_dim = 32;
  double mlp_ratio = 2.0;
  PatchEmbedConfig patch;
  std::size_t encoder_stride = 8;
  bool position_embedding = false;  // learned absolute embedding on the patch grid

  /// Checks head divisibility, window divisibility of every stage grid and
  /// that patch_size * 2^(stages-1) equals encoder_stride.
  void validate() const;
  std::size_t final_grid() const;
  std::size_t final_dim() const;
};

/// Linear projection of non-overlapping patches. With a mask, masked tokens
/// are replaced by the mask token before the optional position embedding is
/// added.
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(const PatchEmbedConfig& cfg, bool position_embedding, SplitMix64& rng);

  /// img [C, H, W] -> [N, D]
  Tensor forward(const Tensor& img, const PatchMask* mask = nullptr,
                 const Tensor& mask_token = {}) const;
  void collect(const std::string& prefix, ParamList& out) const;

  const PatchEmbedConfig& config() const { return cfg_; }
  Linear& projection() { return proj_; }
  Tensor& position() { return pos_; }

 private:
  PatchEmbedConfig cfg_;
  Linear proj_;
  Tensor pos_;  // [N, D], undefined on the Swin path
};

/// tokens [H, W, D] -> [nW, window^2, D], windows in row-major order.
Tensor window_partition(const Tensor& tokens, std::size_t window);
/// Inverse of window_partition for an H x W grid.
Tensor window_reverse(const Tensor& windows, std::size_t height, std::size_t width);
/// out[y, x] = in[(y + shift) mod H, (x + shift) mod W]; a negative shift
/// undoes a positive one.
Tensor cyclic_shift(const Tensor& tokens, std::ptrdiff_t shift);

/// Additive attention mask [nW, window^2, window^2] for the shifted frame:
/// 0 where two tokens of a window came from the same side of the cyclic wrap,
/// kForbiddenLogit otherwise. All zeros when shift == 0.
std::vector<double> shifted_window_mask(std::size_t height, std::size_t width,
                                        std::size_t window, std::size_t shift);

/// Multi-head self-attention with a fused qkv projection.
class WindowAttention {
 public:
  WindowAttention() = default;
  WindowAttention(std::size_t dim, std::size_t heads, SplitMix64& rng);

  /// tokens [H, W, D]: cyclic shift by -shift, attention inside each
  /// window (masked across wrap boundaries), inverse shift.
  Tensor forward(const Tensor& tokens, std::size_t window, std::size_t shift) const;
  /// tokens [N, D]: one global window, no mask.
  Tensor forward_global(const Tensor& tokens) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::size_t heads() const { return heads_; }
  Linear& qkv() { return qkv_; }
  Linear& proj() { return proj_; }

 private:
  Tensor attend(const Tensor& windows, std::size_t n_windows, std::size_t tokens_per_window,
                std::span<const double> mask) const;

  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear qkv_;
  Linear proj_;
};

/// Free-function form of WindowAttention::forward; rejects shift >= window.
Tensor shifted_window_attention(const Tensor& tokens, std::size_t window, std::size_t shift,
                                const WindowAttention& attn);

/// Concatenates each 2x2 neighbourhood (order: (0,0), (1,0), (0,1), (1,1))
/// into 4D features and projects to 2D without bias.
class PatchMerging {
 public:
  PatchMerging() = default;
  PatchMerging(std::size_t dim, SplitMix64& rng);

  /// tokens [H, W, D] -> [H/2, W/2, 2D]
  Tensor forward(const Tensor& tokens) const;
  void collect(const std::string& prefix, ParamList& out) const;
  Linear& reduction() { return reduction_; }

 private:
  Linear reduction_;
};

/// Pre-norm transformer block; `window == 0` means global attention over a
/// [N, D] token list (ViT), otherwise shifted-window attention on [H, W, D].
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, double mlp_ratio, std::size_t window,
                   std::size_t shift, SplitMix64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t shift() const { return shift_; }

 private:
  LayerNorm norm1_;
  WindowAttention attn_;
  LayerNorm norm2_;
  Mlp mlp_;
  std::size_t window_ = 0;
  std::size_t shift_ = 0;
};

class ViTEncoder {
 public:
  ViTEncoder() = default;
  ViTEncoder(const ViTConfig& cfg, SplitMix64& rng);

  /// Transformer stack + final norm; tokens [N, D] -> [N, D].
  Tensor forward_tokens(const Tensor& tokens) const;
  /// img [C, H, W] -> features [g, g, D].
  Tensor forward(const Tensor& img, const PatchMask* mask, const Tensor& mask_token) const;
  void collect(const std::string& prefix, ParamList& out) const;

  const ViTConfig& config() const { return cfg_; }
  PatchEmbed& embed() { return embed_; }

 private:
  ViTConfig cfg_;
  PatchEmbed embed_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm norm_;
};

/// Equivalent of vit_forward(tokens, cfg) on an existing encoder.
inline Tensor vit_forward(const Tensor& tokens, const ViTEncoder& encoder) {
  return encoder.forward_tokens(tokens);
}

class SwinEncoder {
 public:
  SwinEncoder() = default;
  SwinEncoder(const SwinConfig& cfg, SplitMix64& rng);

  /// img [C, H, W] -> features [H / stride, W / stride, final_dim].
  Tensor forward(const Tensor& img, const PatchMask* mask, const Tensor& mask_token) const;
  /// Stages, merges and final norm on already embedded tokens [g, g, D].
  Tensor forward_tokens(const Tensor& tokens) const;
  void collect(const std::string& prefix, ParamList& out) const;

  const SwinConfig& config() const { return cfg_; }

 private:
  SwinConfig cfg_;
  PatchEmbed embed_;
  std::vector<std::vector<TransformerBlock>> stages_;
  std::vector<PatchMerging> merges_;
  LayerNorm norm_;
};

}  // namespace mimk
