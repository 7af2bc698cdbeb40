// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mimk/rng.hpp"
#include "mimk/tensor.hpp"

namespace mimk {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

/// Weights ~ truncated normal(0, 0.02), biases 0, norm gains 1.
Tensor init_weight(Shape shape, SplitMix64& rng, double std = 0.02);
Tensor init_zeros(Shape shape);
Tensor init_ones(Shape shape);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], undefined when bias-free

  Linear() = default;
  Linear(std::size_t in, std::size_t out, SplitMix64& rng, bool with_bias = true);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Linear -> gelu -> Linear.
struct Mlp {
  Linear fc1;
  Linear fc2;

  Mlp() = default;
  Mlp(std::size_t dim, std::size_t hidden, SplitMix64& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace mimk
