// SPDX-License-Identifier: Apache-2.0
#include "mimk/layers.hpp"

#include "mimk/ops.hpp"

namespace mimk {

Tensor init_weight(Shape shape, SplitMix64& rng, double std) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = rng.truncated_normal(std);
  return t;
}

Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor init_ones(Shape shape) { return Tensor::filled(std::move(shape), 1.0, true); }

Linear::Linear(std::size_t in, std::size_t out, SplitMix64& rng, bool with_bias)
    : weight(init_weight({in, out}, rng)) {
  if (with_bias) bias = init_zeros({out});
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t dim) : gamma(init_ones({dim})), beta(init_zeros({dim})) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Mlp::Mlp(std::size_t dim, std::size_t hidden, SplitMix64& rng)
    : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

}  // namespace mimk
