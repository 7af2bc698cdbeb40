// SPDX-License-Identifier: Apache-2.0
#include "mimk/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mimk/errors.hpp"

namespace mimk {

GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                double h) {
  if (!(h > 0.0 && h <= 1e-2)) throw ContractError("check_gradients: h must lie in (0, 1e-2]");
  std::vector<std::vector<double>> analytic;
  {
    for (auto& t : inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
    for (auto& t : inputs) {
      if (t.has_grad()) {
        analytic.emplace_back(t.grad().begin(), t.grad().end());
      } else {
        analytic.emplace_back(t.numel(), 0.0);
      }
    }
  }
  GradCheckResult result;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    auto values = inputs[n].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[n][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > result.max_rel_error) result = {err, n, i};
    }
  }
  return result;
}

}  // namespace mimk
