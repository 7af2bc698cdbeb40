// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdint>
#include <numeric>

#include "mimk/encoders.hpp"
#include "mimk/errors.hpp"
#include "mimk/gradcheck.hpp"
#include "mimk/ops.hpp"
#include "test_util.hpp"

namespace mimk {
namespace {

using test::random_tensor;

PatchEmbedConfig patch_cfg(std::size_t image, std::size_t patch, std::size_t dim) {
  PatchEmbedConfig c;
  c.image_size = image;
  c.patch_size = patch;
  c.embed_dim = dim;
  return c;
}

double max_abs(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

TEST(PatchEmbedConfig, TokenCounts) {
  EXPECT_EQ(patch_cfg(192, 4, 32).num_tokens(), 2304u);
  EXPECT_EQ(patch_cfg(192, 1, 32).num_tokens(), 36864u);
  EXPECT_EQ(patch_cfg(64, 8, 32).num_tokens(), 64u);
  EXPECT_THROW(patch_cfg(30, 4, 8).validate(), ContractError);
}

TEST(PatchEmbed, ZeroImageYieldsPositionEmbedding) {
  SplitMix64 rng(1);
  const PatchEmbed embed(patch_cfg(16, 4, 8), true, rng);
  PatchEmbed copy = embed;
  const Tensor out = embed.forward(Tensor::zeros({1, 16, 16}));
  ASSERT_EQ(out.shape(), (Shape{16, 8}));
  const Tensor pos = copy.position();
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out.at(i), pos.at(i));
}

TEST(PatchEmbed, TokensProjectTheirOwnPatch) {
  SplitMix64 rng(2);
  PatchEmbed embed(patch_cfg(8, 2, 3), false, rng);
  const Tensor img = random_tensor({1, 8, 8}, rng);
  const Tensor out = embed.forward(img);
  const Tensor w = embed.projection().weight;  // [4, 3]
  for (std::size_t gy = 0; gy < 4; ++gy) {
    for (std::size_t gx = 0; gx < 4; ++gx) {
      for (std::size_t d = 0; d < 3; ++d) {
        double acc = 0.0;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t b = 0; b < 2; ++b) {
            acc += img.at((2 * gy + a) * 8 + 2 * gx + b) * w.at((a * 2 + b) * 3 + d);
          }
        }
        EXPECT_NEAR(out.at((gy * 4 + gx) * 3 + d), acc, 1e-15);
      }
    }
  }
  EXPECT_THROW(embed.forward(Tensor::zeros({1, 8, 4})), ContractError);
}

TEST(WindowPartition, CountsOrderAndInverse) {
  SplitMix64 rng(3);
  const Tensor x = random_tensor({4, 4, 2}, rng);
  const Tensor w = window_partition(x, 2);
  EXPECT_EQ(w.shape(), (Shape{4, 4, 2}));
  // window 1 covers rows 0-1, columns 2-3
  EXPECT_EQ(w.at((1 * 4 + 0) * 2), x.at((0 * 4 + 2) * 2));
  EXPECT_EQ(w.at((1 * 4 + 3) * 2 + 1), x.at((1 * 4 + 3) * 2 + 1));
  const Tensor whole = window_partition(x, 4);
  EXPECT_EQ(whole.shape(), (Shape{1, 16, 2}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(whole.at(i), x.at(i));
  for (std::size_t win : {1, 2, 4}) {
    const Tensor back = window_reverse(window_partition(x, win), 4, 4);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back.at(i), x.at(i));
  }
  const Tensor rect = random_tensor({4, 8, 3}, rng);
  const Tensor rback = window_reverse(window_partition(rect, 4), 4, 8);
  for (std::size_t i = 0; i < rect.numel(); ++i) EXPECT_EQ(rback.at(i), rect.at(i));
  EXPECT_THROW(window_partition(x, 3), ContractError);
}

TEST(CyclicShift, DefinitionAndInverse) {
  SplitMix64 rng(4);
  const Tensor x = random_tensor({4, 6, 2}, rng);
  const Tensor s = cyclic_shift(x, 1);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t c = 0; c < 6; ++c) {
      for (std::size_t d = 0; d < 2; ++d) {
        EXPECT_EQ(s.at((y * 6 + c) * 2 + d), x.at((((y + 1) % 4) * 6 + (c + 1) % 6) * 2 + d));
      }
    }
  }
  const Tensor back = cyclic_shift(s, -1);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back.at(i), x.at(i));
}

TEST(ShiftedWindowMask, MatchesRegionOracle) {
  std::size_t cases = 0;
  for (std::size_t win : {2, 4}) {
    for (std::size_t h = win; h <= 8; h += win) {
      for (std::size_t w = win; w <= 8; w += win) {
        for (std::size_t shift : {std::size_t{0}, win / 2}) {
          EXPECT_EQ(shifted_window_mask(h, w, win, shift), test::region_oracle(h, w, win, shift))
              << h << 'x' << w << " window " << win << " shift " << shift;
          ++cases;
        }
      }
    }
  }
  EXPECT_EQ(cases, 2u * (16 + 4));
}

TEST(ShiftedWindowMask, FourByFourWindowTwoShiftOne) {
  const auto m = shifted_window_mask(4, 4, 2, 1);
  // top-left window holds no wrapped tokens
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(m[i], 0.0);
  // bottom-right window: every token comes from a different corner
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m[(3 * 4 + i) * 4 + j], i == j ? 0.0 : kForbiddenLogit);
  }
}

TEST(WindowAttention, ShiftZeroIsBlockDiagonal) {
  SplitMix64 rng(5);
  const WindowAttention attn(8, 2, rng);
  const Tensor x = random_tensor({8, 8, 8}, rng, false, 2.0);
  const Tensor base = attn.forward(x, 4, 0);
  for (std::size_t trial = 0; trial < 4; ++trial) {
    Tensor moved({8, 8, 8}, std::vector<double>(x.data().begin(), x.data().end()));
    const std::size_t y = rng.below(8), c = rng.below(8);
    for (std::size_t d = 0; d < 8; ++d) moved.mutable_data()[(y * 8 + c) * 8 + d] += 3.0;
    const Tensor out = attn.forward(moved, 4, 0);
    for (std::size_t yy = 0; yy < 8; ++yy) {
      for (std::size_t cc = 0; cc < 8; ++cc) {
        const bool same_window = yy / 4 == y / 4 && cc / 4 == c / 4;
        double diff = 0.0;
        for (std::size_t d = 0; d < 8; ++d) {
          diff = std::max(diff, std::abs(out.at((yy * 8 + cc) * 8 + d) - base.at((yy * 8 + cc) * 8 + d)));
        }
        if (!same_window) {
          EXPECT_EQ(diff, 0.0);
        } else if (yy == y && cc == c) {
          EXPECT_GT(diff, 0.0);
        }
      }
    }
  }
}

TEST(WindowAttention, ShiftedCornerTokenIsIsolated) {
  SplitMix64 rng(6);
  const WindowAttention attn(4, 1, rng);
  const Tensor x = random_tensor({4, 4, 4}, rng);
  const Tensor base = attn.forward(x, 2, 1);
  Tensor moved({4, 4, 4}, std::vector<double>(x.data().begin(), x.data().end()));
  for (std::size_t d = 0; d < 4; ++d) moved.mutable_data()[d] += 1.0;
  const Tensor out = attn.forward(moved, 2, 1);
  for (std::size_t p = 1; p < 16; ++p) {
    for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(out.at(p * 4 + d), base.at(p * 4 + d)) << p;
  }
}

TEST(WindowAttention, RejectsLargeShiftAndBadDims) {
  SplitMix64 rng(7);
  const WindowAttention attn(4, 2, rng);
  const Tensor x = random_tensor({4, 4, 4}, rng);
  EXPECT_THROW(shifted_window_attention(x, 2, 2, attn), ContractError);
  EXPECT_THROW(attn.forward(x, 3, 0), ContractError);
  EXPECT_THROW(attn.forward(random_tensor({4, 4, 6}, rng), 2, 0), ShapeError);
  EXPECT_THROW(WindowAttention(6, 4, rng), ContractError);
}

TEST(WindowAttention, GlobalWindowMatchesForwardGlobal) {
  SplitMix64 rng(8);
  const WindowAttention attn(8, 2, rng);
  const Tensor x = random_tensor({4, 4, 8}, rng);
  const Tensor a = attn.forward(x, 4, 0);
  const Tensor b = attn.forward_global(reshape(x, {16, 8}));
  EXPECT_LT(max_abs(a, b), 1e-14);
}

TEST(WindowAttention, GradientsShiftedAndPlain) {
  SplitMix64 rng(9);
  WindowAttention attn(4, 2, rng);
  for (auto& v : attn.qkv().weight.mutable_data()) v *= 20.0;
  for (auto& v : attn.proj().weight.mutable_data()) v *= 20.0;
  Tensor x = random_tensor({4, 4, 4}, rng, true);
  const Tensor w = random_tensor({4, 4, 4}, rng);
  for (std::size_t shift : {0, 1}) {
    const auto r = check_gradients([&] { return sum(mul(attn.forward(x, 2, shift), w)); },
                                   {x, attn.qkv().weight, attn.proj().weight});
    EXPECT_LT(r.max_rel_error, 1e-6) << shift;
  }
}

TEST(PatchMerging, ShapeAndTopLeftIdentity) {
  SplitMix64 rng(10);
  PatchMerging merge(3, rng);
  const Tensor x = random_tensor({4, 4, 3}, rng);
  EXPECT_EQ(merge.forward(x).shape(), (Shape{2, 2, 6}));
  auto wd = merge.reduction().weight.mutable_data();  // [12, 6]
  std::fill(wd.begin(), wd.end(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) wd[c * 6 + c] = 1.0;
  const Tensor out = merge.forward(x);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      for (std::size_t c = 0; c < 6; ++c) {
        const double expected = c < 3 ? x.at(((2 * i) * 4 + 2 * j) * 3 + c) : 0.0;
        EXPECT_EQ(out.at((i * 2 + j) * 6 + c), expected);
      }
    }
  }
  EXPECT_THROW(merge.forward(random_tensor({3, 4, 3}, rng)), ContractError);
}

TEST(PatchMerging, GradientCheck) {
  SplitMix64 rng(11);
  PatchMerging merge(2, rng);
  Tensor x = random_tensor({4, 4, 2}, rng, true);
  const Tensor w = random_tensor({2, 2, 4}, rng);
  const auto r = check_gradients([&] { return sum(mul(merge.forward(x), w)); },
                                 {x, merge.reduction().weight});
  EXPECT_LT(r.max_rel_error, 1e-5);
}

ViTConfig vit_cfg(std::size_t depth, bool pos) {
  ViTConfig c;
  c.depth = depth;
  c.heads = 2;
  c.embed_dim = 8;
  c.patch = patch_cfg(16, 4, 8);
  c.position_embedding = pos;
  return c;
}

TEST(ViT, DepthZeroIsIdentityAndShapesHold) {
  SplitMix64 rng(12);
  const ViTEncoder none(vit_cfg(0, false), rng);
  const Tensor t = random_tensor({16, 8}, rng);
  const Tensor same = vit_forward(t, none);
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(same.at(i), t.at(i));
  const ViTEncoder two(vit_cfg(2, true), rng);
  EXPECT_EQ(vit_forward(t, two).shape(), (Shape{16, 8}));
  EXPECT_EQ(two.forward(random_tensor({1, 16, 16}, rng), nullptr, {}).shape(), (Shape{4, 4, 8}));
  EXPECT_THROW(vit_forward(random_tensor({16, 4}, rng), two), ShapeError);
}

TEST(ViT, PermutationEquivariantWithoutPositions) {
  SplitMix64 rng(13);
  const ViTEncoder enc(vit_cfg(2, false), rng);
  const Tensor t = random_tensor({16, 8}, rng);
  const auto perm = shuffled_indices(16, rng);
  std::vector<std::size_t> src(16 * 8);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t d = 0; d < 8; ++d) src[r * 8 + d] = perm[r] * 8 + d;
  }
  const Tensor a = gather(vit_forward(t, enc), {16, 8}, src);
  const Tensor b = vit_forward(gather(t, {16, 8}, src), enc);
  EXPECT_LT(max_abs(a, b), 1e-10);
}

SwinConfig swin_cfg(std::size_t image, std::size_t patch, std::size_t window,
                    std::vector<std::size_t> depths, std::vector<std::size_t> heads,
                    std::size_t dim, std::size_t stride) {
  SwinConfig c;
  c.stage_depths = std::move(depths);
  c.heads_per_stage = std::move(heads);
  c.window_size = window;
  c.embed_dim = dim;
  c.patch = patch_cfg(image, patch, dim);
  c.encoder_stride = stride;
  return c;
}

TEST(Swin, DeskShapeAndStride) {
  const SwinConfig c = swin_cfg(64, 4, 4, {2, 2}, {2, 4}, 16, 8);
  c.validate();
  EXPECT_EQ(c.final_grid(), 8u);
  EXPECT_EQ(c.final_dim(), 32u);
  SplitMix64 rng(14);
  const SwinEncoder enc(c, rng);
  const Tensor out = enc.forward(random_tensor({1, 64, 64}, rng), nullptr, {});
  EXPECT_EQ(out.shape(), (Shape{8, 8, 32}));
  for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Swin, ValidationNamesTheStage) {
  EXPECT_THROW(swin_cfg(64, 4, 4, {2, 2}, {2, 4}, 16, 16).validate(), ContractError);
  try {
    swin_cfg(48, 4, 4, {2, 2}, {2, 4}, 16, 8).validate();
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(swin_cfg(64, 4, 4, {2, 2}, {2}, 16, 8).validate(), ContractError);
  EXPECT_THROW(swin_cfg(64, 4, 4, {2, 2}, {3, 4}, 16, 8).validate(), ContractError);
  const SwinConfig paper = swin_cfg(192, 1, 6, {2, 2, 2, 2, 2, 2}, {1, 2, 4, 8, 16, 32}, 32, 32);
  EXPECT_NO_THROW(paper.validate());
  EXPECT_EQ(paper.patch.num_tokens(), 36864u);
  EXPECT_EQ(paper.final_grid(), 6u);
}

TEST(Swin, DeterministicForSeed) {
  const SwinConfig c = swin_cfg(16, 2, 2, {2, 2}, {1, 2}, 8, 4);
  SplitMix64 r1(15), r2(15);
  const SwinEncoder a(c, r1), b(c, r2);
  SplitMix64 rng(16);
  const Tensor img = random_tensor({1, 16, 16}, rng);
  const Tensor oa = a.forward(img, nullptr, {}), ob = b.forward(img, nullptr, {});
  for (std::size_t i = 0; i < oa.numel(); ++i) EXPECT_EQ(oa.at(i), ob.at(i));
}

TEST(Swin, FiniteOnWideInputs) {
  SplitMix64 rng(17);
  const SwinEncoder enc(swin_cfg(16, 2, 2, {2, 2}, {1, 2}, 8, 4), rng);
  const Tensor out = enc.forward(random_tensor({1, 16, 16}, rng, false, 10.0), nullptr, {});
  for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Swin, MaskTokenReachesTheOutput) {
  SplitMix64 rng(18);
  const SwinEncoder enc(swin_cfg(16, 2, 2, {2, 2}, {1, 2}, 8, 4), rng);
  const Tensor img = random_tensor({1, 16, 16}, rng);
  const PatchMask mask = random_patch_mask(8, 8, 0.5, 3);
  const Tensor t1 = random_tensor({8}, rng), t2 = random_tensor({8}, rng);
  EXPECT_GT(max_abs(enc.forward(img, &mask, t1), enc.forward(img, &mask, t2)), 0.0);
}

}  // namespace
}  // namespace mimk
