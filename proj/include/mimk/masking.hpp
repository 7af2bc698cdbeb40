// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mimk/kspace.hpp"
#include "mimk/tensor.hpp"

namespace mimk {

/// Which patches are hidden from the encoder (flag 1 = masked).
struct PatchMask {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<std::uint8_t> flags;
  double ratio = 0.0;
  std::uint64_t seed = 0;

  std::size_t masked_count() const;
  bool masked(std::size_t row, std::size_t col) const { return flags[row * grid_w + col] != 0; }

  /// Per-pixel 0/1 weights for an image tiled exactly by the patch grid.
  std::vector<double> pixel_weights(std::size_t height, std::size_t width) const;
};

/// Exactly round(ratio * N) masked patches: the first entries of a seeded
/// Fisher-Yates shuffle of the patch indices.
PatchMask random_patch_mask(std::size_t grid_h, std::size_t grid_w, double ratio,
                            std::uint64_t seed);

/// Substitutes the learned `mask_token` [D] for every masked row of
/// tokens [N, D]; gradients flow into the token.
Tensor apply_mask_tokens(const Tensor& tokens, const PatchMask& mask, const Tensor& mask_token);

/// Cartesian undersampling along k-space rows.
struct LineMask {
  std::size_t height = 0;
  std::set<std::size_t> kept_rows;
  std::size_t acceleration = 1;
  double center_fraction = 0.0;
};

/// Keeps floor(height * center_fraction) contiguous rows around height / 2 and
/// every row index divisible by `acceleration`.
LineMask cartesian_line_mask(std::size_t height, std::size_t acceleration, double center_fraction);

/// Zeroes the rows a LineMask drops; kept rows are copied unchanged.
ComplexGrid apply_line_mask(const ComplexGrid& k, const LineMask& mask);

/// One-line textual mask descriptions used in run manifests:
///   patch ratio=0.5 seed=7 grid=12x12
///   line h=192 acc=4 cf=0.08
struct PatchMaskSpec {
  double ratio = 0.5;
  std::uint64_t seed = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};
struct LineMaskSpec {
  std::size_t height = 0;
  std::size_t acceleration = 4;
  double center_fraction = 0.08;
};
using MaskSpec = std::variant<PatchMaskSpec, LineMaskSpec>;

std::string format_mask_spec(const MaskSpec& spec);
MaskSpec parse_mask_spec(const std::string& line);

}  // namespace mimk
