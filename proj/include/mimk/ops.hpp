// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mimk/tensor.hpp"

// Differentiable primitives. Every function records itself on the active
// Tape (if any) when one of its inputs requires a gradient.
namespace mimk {

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x [..., D] + bias [D], bias repeated over every leading index.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
/// x [C, ...] + bias [C], bias repeated over trailing positions.
Tensor add_channelwise(const Tensor& x, const Tensor& bias);

/// x [N, Din] * weight [Din, Dout] + bias [Dout]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis (population variance, eps inside the root),
/// then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Exact x * Phi(x).
Tensor gelu(const Tensor& x);

/// Valid cross-correlation: x [Cin,H,W], w [Cout,Cin,k,k] -> [Cout,H',W'],
/// H' = (H - k) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride = 1);

/// Source index that makes gather() emit a zero.
inline constexpr std::size_t kZeroIndex = std::numeric_limits<std::size_t>::max();

/// out.flat[i] = x.flat[source[i]] (or 0 for kZeroIndex). Backward scatters.
/// Reshape, permute, roll, window partition, padding and pixel shuffle are
/// all expressed through this.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> source);

Tensor reshape(const Tensor& x, Shape shape);
/// Reorders axes; output axis i is input axis perm[i].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
/// Zero padding of the last two axes of [C,H,W].
Tensor pad2d(const Tensor& x, std::size_t pad);

/// Batched scaled dot-product attention over q,k,v [B,T,Dh]. `mask`, when
/// non-empty, holds M additive [T,T] blocks; batch b uses block b / group.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                 std::span<const double> mask = {}, std::size_t mask_group = 1);

/// Rows of tokens [N,D] with flags[i] set are replaced by token [D].
Tensor replace_rows(const Tensor& tokens, const std::vector<std::uint8_t>& flags,
                    const Tensor& token);

/// sum_i w_i |pred_i - target_i| / sum_i w_i, as a [1] tensor.
Tensor weighted_l1(const Tensor& pred, std::span<const double> target,
                   std::span<const double> weights);

}  // namespace mimk
