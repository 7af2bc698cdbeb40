// SPDX-License-Identifier: Apache-2.0
#include "mimk/encoders.hpp"

#include <cmath>
#include <string>

#include "mimk/errors.hpp"
#include "mimk/ops.hpp"

namespace mimk {

namespace {

std::string dims(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

// Row map of the fused roll + partition: entry r is the source token index
// (y * W + x) of row r in the [nW * window^2] windowed layout.
std::vector<std::size_t> partition_rows(std::size_t h, std::size_t w, std::size_t window,
                                        std::size_t shift) {
  const std::size_t wins_x = w / window, t = window * window;
  std::vector<std::size_t> rows(h * w);
  for (std::size_t wy = 0; wy < h / window; ++wy) {
    for (std::size_t wx = 0; wx < wins_x; ++wx) {
      for (std::size_t ty = 0; ty < window; ++ty) {
        for (std::size_t tx = 0; tx < window; ++tx) {
          const std::size_t sy = (wy * window + ty + shift) % h;
          const std::size_t sx = (wx * window + tx + shift) % w;
          rows[(wy * wins_x + wx) * t + ty * window + tx] = sy * w + sx;
        }
      }
    }
  }
  return rows;
}

std::vector<std::size_t> expand_rows(const std::vector<std::size_t>& rows, std::size_t d) {
  std::vector<std::size_t> src(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) src[r * d + c] = rows[r] * d + c;
  }
  return src;
}

std::vector<std::size_t> invert(const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> inv(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) inv[rows[r]] = r;
  return inv;
}

void require_grid(const Tensor& tokens, const char* op) {
  if (tokens.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [H,W,D] tokens, got " +
                     shape_str(tokens.shape()));
  }
}

Tensor linear_any(const Linear& layer, const Tensor& x) {
  if (x.rank() == 2) return layer.forward(x);
  const std::size_t d = x.shape().back();
  Shape out_shape = x.shape();
  Tensor y = layer.forward(reshape(x, {x.numel() / d, d}));
  out_shape.back() = y.dim(1);
  return reshape(y, std::move(out_shape));
}

}  // namespace

void PatchEmbedConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ContractError("image size " + std::to_string(image_size) +
                        " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (in_channels == 0 || embed_dim == 0) {
    throw ContractError("patch embedding needs positive channels and embedding dimension");
  }
}

void ViTConfig::validate() const {
  patch.validate();
  if (patch.embed_dim != embed_dim) throw ContractError("ViT embed_dim disagrees with patch config");
  if (heads == 0 || embed_dim % heads != 0) {
    throw ContractError("ViT embed_dim " + std::to_string(embed_dim) +
                        " not divisible by heads " + std::to_string(heads));
  }
}

void SwinConfig::validate() const {
  patch.validate();
  if (patch.embed_dim != embed_dim) {
    throw ContractError("Swin embed_dim disagrees with patch config");
  }
  if (stage_depths.empty() || stage_depths.size() != heads_per_stage.size()) {
    throw ContractError("Swin needs one head count per stage (" +
                        std::to_string(stage_depths.size()) + " depths, " +
                        std::to_string(heads_per_stage.size()) + " head counts)");
  }
  if (window_size == 0) throw ContractError("Swin window size must be positive");
  std::size_t grid = patch.grid();
  std::size_t dim = embed_dim;
  for (std::size_t s = 0; s < stage_depths.size(); ++s) {
    const std::string stage = "stage " + std::to_string(s);
    if (s > 0) {
      if (grid % 2 != 0) throw ContractError(stage + ": odd grid " + dims(grid, grid) + " cannot merge");
      grid /= 2;
      dim *= 2;
    }
    if (grid % window_size != 0) {
      throw ContractError(stage + ": token grid " + dims(grid, grid) +
                          " is not divisible by window " + std::to_string(window_size));
    }
    if (heads_per_stage[s] == 0 || dim % heads_per_stage[s] != 0) {
      throw ContractError(stage + ": dim " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads_per_stage[s]) + " heads");
    }
  }
  const std::size_t stride = patch.patch_size << (stage_depths.size() - 1);
  if (stride != encoder_stride) {
    throw ContractError("patch size " + std::to_string(patch.patch_size) + " with " +
                        std::to_string(stage_depths.size()) + " stages downsamples by " +
                        std::to_string(stride) + ", but encoder_stride is " +
                        std::to_string(encoder_stride));
  }
}

std::size_t SwinConfig::final_grid() const { return patch.grid() >> (stage_depths.size() - 1); }

std::size_t SwinConfig::final_dim() const { return embed_dim << (stage_depths.size() - 1); }

PatchEmbed::PatchEmbed(const PatchEmbedConfig& cfg, bool position_embedding, SplitMix64& rng)
    : cfg_(cfg),
      proj_(cfg.in_channels * cfg.patch_size * cfg.patch_size, cfg.embed_dim, rng) {
  cfg_.validate();
  if (position_embedding) pos_ = init_weight({cfg.num_tokens(), cfg.embed_dim}, rng);
}

Tensor PatchEmbed::forward(const Tensor& img, const PatchMask* mask,
                           const Tensor& mask_token) const {
  const std::size_t c = cfg_.in_channels, s = cfg_.image_size, p = cfg_.patch_size;
  if (img.rank() != 3 || img.dim(0) != c || img.dim(1) != s || img.dim(2) != s) {
    throw ContractError("patch_embed: expected image [" + std::to_string(c) + "," +
                        std::to_string(s) + "," + std::to_string(s) + "], got " +
                        shape_str(img.shape()));
  }
  const std::size_t g = cfg_.grid(), feat = c * p * p;
  std::vector<std::size_t> src(g * g * feat);
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t a = 0; a < p; ++a) {
          for (std::size_t b = 0; b < p; ++b) {
            src[(gy * g + gx) * feat + (ch * p + a) * p + b] =
                (ch * s + gy * p + a) * s + gx * p + b;
          }
        }
      }
    }
  }
  Tensor tokens = proj_.forward(gather(img, {g * g, feat}, std::move(src)));
  if (mask != nullptr) tokens = apply_mask_tokens(tokens, *mask, mask_token);
  if (pos_.defined()) tokens = add(tokens, pos_);
  return tokens;
}

void PatchEmbed::collect(const std::string& prefix, ParamList& out) const {
  proj_.collect(prefix + ".proj", out);
  if (pos_.defined()) out.push_back({prefix + ".pos_embed", pos_});
}

Tensor window_partition(const Tensor& tokens, std::size_t window) {
  require_grid(tokens, "window_partition");
  const std::size_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ContractError("window_partition: grid " + dims(h, w) + " not divisible by window " +
                        std::to_string(window));
  }
  const std::size_t t = window * window;
  return gather(tokens, {h * w / t, t, d}, expand_rows(partition_rows(h, w, window, 0), d));
}

Tensor window_reverse(const Tensor& windows, std::size_t height, std::size_t width) {
  if (windows.rank() != 3) throw ShapeError("window_reverse: expected [nW, T, D]");
  const std::size_t t = windows.dim(1), d = windows.dim(2);
  const auto window = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(t))));
  if (window * window != t || height % window != 0 || width % window != 0 ||
      windows.dim(0) * t != height * width) {
    throw ShapeError("window_reverse: " + shape_str(windows.shape()) + " does not tile " +
                     dims(height, width));
  }
  return gather(windows, {height, width, d},
                expand_rows(invert(partition_rows(height, width, window, 0)), d));
}

Tensor cyclic_shift(const Tensor& tokens, std::ptrdiff_t shift) {
  require_grid(tokens, "cyclic_shift");
  const std::size_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  std::vector<std::size_t> rows(h * w);
  for (std::ptrdiff_t y = 0; y < hh; ++y) {
    for (std::ptrdiff_t x = 0; x < ww; ++x) {
      const auto sy = static_cast<std::size_t>(((y + shift) % hh + hh) % hh);
      const auto sx = static_cast<std::size_t>(((x + shift) % ww + ww) % ww);
      rows[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = sy * w + sx;
    }
  }
  return gather(tokens, {h, w, d}, expand_rows(rows, d));
}

std::vector<double> shifted_window_mask(std::size_t height, std::size_t width,
                                        std::size_t window, std::size_t shift) {
  const std::size_t t = window * window;
  const std::size_t n_windows = (height / window) * (width / window);
  std::vector<double> mask(n_windows * t * t, 0.0);
  if (shift == 0) return mask;
  // Slices of the shifted frame: [0, n-window), [n-window, n-shift), [n-shift, n).
  auto region = [&](std::size_t v, std::size_t n) -> std::size_t {
    if (v < n - window) return 0;
    return v < n - shift ? 1 : 2;
  };
  std::vector<std::size_t> label(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      label[y * width + x] = region(y, height) * 3 + region(x, width);
    }
  }
  const auto rows = partition_rows(height, width, window, 0);
  for (std::size_t win = 0; win < n_windows; ++win) {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        if (label[rows[win * t + i]] != label[rows[win * t + j]]) {
          mask[(win * t + i) * t + j] = kForbiddenLogit;
        }
      }
    }
  }
  return mask;
}

WindowAttention::WindowAttention(std::size_t dim, std::size_t heads, SplitMix64& rng)
    : dim_(dim), heads_(heads), qkv_(dim, 3 * dim, rng), proj_(dim, dim, rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ContractError("attention dim " + std::to_string(dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
}

Tensor WindowAttention::attend(const Tensor& windows, std::size_t n_windows,
                               std::size_t tokens_per_window, std::span<const double> mask) const {
  const std::size_t d = dim_, hd = d / heads_, t = tokens_per_window;
  Tensor qkv = qkv_.forward(windows);
  auto split = [&](std::size_t part) {
    std::vector<std::size_t> src(n_windows * t * d);
    for (std::size_t b = 0; b < n_windows; ++b) {
      for (std::size_t h = 0; h < heads_; ++h) {
        for (std::size_t i = 0; i < t; ++i) {
          for (std::size_t c = 0; c < hd; ++c) {
            src[((b * heads_ + h) * t + i) * hd + c] = (b * t + i) * 3 * d + part * d + h * hd + c;
          }
        }
      }
    }
    return gather(qkv, {n_windows * heads_, t, hd}, std::move(src));
  };
  Tensor o = attention(split(0), split(1), split(2), 1.0 / std::sqrt(static_cast<double>(hd)),
                       mask, heads_);
  std::vector<std::size_t> src(n_windows * t * d);
  for (std::size_t b = 0; b < n_windows; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t c = 0; c < hd; ++c) {
          src[(b * t + i) * d + h * hd + c] = ((b * heads_ + h) * t + i) * hd + c;
        }
      }
    }
  }
  return proj_.forward(gather(o, {n_windows * t, d}, std::move(src)));
}

Tensor WindowAttention::forward(const Tensor& tokens, std::size_t window, std::size_t shift) const {
  require_grid(tokens, "window attention");
  const std::size_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
  if (d != dim_) throw ShapeError("window attention: token dim " + std::to_string(d) + " != " + std::to_string(dim_));
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ContractError("window attention: grid " + dims(h, w) + " not divisible by window " +
                        std::to_string(window));
  }
  if (shift >= window) {
    throw ContractError("shift " + std::to_string(shift) + " must be smaller than window " +
                        std::to_string(window));
  }
  const std::size_t t = window * window, n_windows = h * w / t;
  const auto rows = partition_rows(h, w, window, shift);
  Tensor windows = gather(tokens, {h * w, d}, expand_rows(rows, d));
  std::vector<double> mask;
  if (shift > 0) mask = shifted_window_mask(h, w, window, shift);
  Tensor out = attend(windows, n_windows, t, mask);
  return gather(out, {h, w, d}, expand_rows(invert(rows), d));
}

Tensor WindowAttention::forward_global(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(1) != dim_) {
    throw ShapeError("global attention: expected [N," + std::to_string(dim_) + "], got " +
                     shape_str(tokens.shape()));
  }
  return attend(tokens, 1, tokens.dim(0), {});
}

void WindowAttention::collect(const std::string& prefix, ParamList& out) const {
  qkv_.collect(prefix + ".qkv", out);
  proj_.collect(prefix + ".proj", out);
}

Tensor shifted_window_attention(const Tensor& tokens, std::size_t window, std::size_t shift,
                                const WindowAttention& attn) {
  return attn.forward(tokens, window, shift);
}

PatchMerging::PatchMerging(std::size_t dim, SplitMix64& rng)
    : reduction_(4 * dim, 2 * dim, rng, /*with_bias=*/false) {}

Tensor PatchMerging::forward(const Tensor& tokens) const {
  require_grid(tokens, "patch_merging");
  const std::size_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ContractError("patch_merging: grid " + dims(h, w) + " has an odd side");
  }
  const std::size_t ho = h / 2, wo = w / 2;
  constexpr std::size_t offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::size_t> src(ho * wo * 4 * d);
  for (std::size_t i = 0; i < ho; ++i) {
    for (std::size_t j = 0; j < wo; ++j) {
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t y = 2 * i + offsets[q][0], x = 2 * j + offsets[q][1];
        for (std::size_t c = 0; c < d; ++c) {
          src[((i * wo + j) * 4 + q) * d + c] = (y * w + x) * d + c;
        }
      }
    }
  }
  Tensor merged = reduction_.forward(gather(tokens, {ho * wo, 4 * d}, std::move(src)));
  return reshape(merged, {ho, wo, 2 * d});
}

void PatchMerging::collect(const std::string& prefix, ParamList& out) const {
  reduction_.collect(prefix + ".reduction", out);
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, double mlp_ratio,
                                   std::size_t window, std::size_t shift, SplitMix64& rng)
    : norm1_(dim),
      attn_(dim, heads, rng),
      norm2_(dim),
      mlp_(dim, static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(dim))), rng),
      window_(window),
      shift_(shift) {}

Tensor TransformerBlock::forward(const Tensor& x) const {
  Tensor a;
  if (window_ == 0) {
    a = attn_.forward_global(norm1_.forward(x));
  } else {
    require_grid(x, "swin block");
    // A window covering the whole grid has nothing to shift across.
    const std::size_t shift = (x.dim(0) <= window_ && x.dim(1) <= window_) ? 0 : shift_;
    a = attn_.forward(norm1_.forward(x), window_, shift);
  }
  Tensor y = add(x, a);
  return add(y, linear_any(mlp_.fc2, gelu(linear_any(mlp_.fc1, norm2_.forward(y)))));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) const {
  norm1_.collect(prefix + ".norm1", out);
  attn_.collect(prefix + ".attn", out);
  norm2_.collect(prefix + ".norm2", out);
  mlp_.collect(prefix + ".mlp", out);
}

ViTEncoder::ViTEncoder(const ViTConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
  cfg_.validate();
  embed_ = PatchEmbed(cfg.patch, cfg.position_embedding, rng);
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    blocks_.emplace_back(cfg.embed_dim, cfg.heads, cfg.mlp_ratio, 0, 0, rng);
  }
  norm_ = LayerNorm(cfg.embed_dim);
}

Tensor ViTEncoder::forward_tokens(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(1) != cfg_.embed_dim) {
    throw ShapeError("vit_forward: expected [N," + std::to_string(cfg_.embed_dim) + "], got " +
                     shape_str(tokens.shape()));
  }
  if (blocks_.empty()) return tokens;
  Tensor x = tokens;
  for (const auto& block : blocks_) x = block.forward(x);
  return norm_.forward(x);
}

Tensor ViTEncoder::forward(const Tensor& img, const PatchMask* mask,
                           const Tensor& mask_token) const {
  const std::size_t g = cfg_.patch.grid();
  Tensor x = forward_tokens(embed_.forward(img, mask, mask_token));
  return reshape(x, {g, g, cfg_.embed_dim});
}

void ViTEncoder::collect(const std::string& prefix, ParamList& out) const {
  embed_.collect(prefix + ".patch_embed", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].collect(prefix + ".blocks." + std::to_string(b), out);
  }
  if (!blocks_.empty()) norm_.collect(prefix + ".norm", out);
}

SwinEncoder::SwinEncoder(const SwinConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
  cfg_.validate();
  embed_ = PatchEmbed(cfg.patch, cfg.position_embedding, rng);
  std::size_t dim = cfg.embed_dim;
  for (std::size_t s = 0; s < cfg.stage_depths.size(); ++s) {
    if (s > 0) {
      merges_.emplace_back(dim, rng);
      dim *= 2;
    }
    std::vector<TransformerBlock> blocks;
    for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
      const std::size_t shift = (b % 2 == 1) ? cfg.window_size / 2 : 0;
      blocks.emplace_back(dim, cfg.heads_per_stage[s], cfg.mlp_ratio, cfg.window_size, shift, rng);
    }
    stages_.push_back(std::move(blocks));
  }
  norm_ = LayerNorm(dim);
}

Tensor SwinEncoder::forward_tokens(const Tensor& tokens) const {
  Tensor x = tokens;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) x = merges_[s - 1].forward(x);
    for (const auto& block : stages_[s]) x = block.forward(x);
  }
  return norm_.forward(x);
}

Tensor SwinEncoder::forward(const Tensor& img, const PatchMask* mask,
                            const Tensor& mask_token) const {
  const std::size_t g = cfg_.patch.grid();
  Tensor tokens = embed_.forward(img, mask, mask_token);
  return forward_tokens(reshape(tokens, {g, g, cfg_.embed_dim}));
}

void SwinEncoder::collect(const std::string& prefix, ParamList& out) const {
  embed_.collect(prefix + ".patch_embed", out);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) merges_[s - 1].collect(prefix + ".merge." + std::to_string(s), out);
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].collect(prefix + ".stages." + std::to_string(s) + "." + std::to_string(b), out);
    }
  }
  norm_.collect(prefix + ".norm", out);
}

}  // namespace mimk
