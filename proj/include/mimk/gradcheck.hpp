// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "mimk/tensor.hpp"

namespace mimk {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
};

/// Compares reverse-mode gradients of the scalar program `f` against central
/// differences (f(x+h) - f(x-h)) / 2h for every element of every tensor in
/// `inputs`. `f` must read the inputs by reference (tensors share storage),
/// since they are perturbed in place. Relative error is
/// |analytic - numeric| / max(1, |analytic|).
GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                double h = 1e-5);

}  // namespace mimk
