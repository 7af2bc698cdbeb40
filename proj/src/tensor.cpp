// SPDX-License-Identifier: Apache-2.0
#include "mimk/tensor.hpp"

#include <sstream>

#include "mimk/errors.hpp"

namespace mimk {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

void accumulate_grad(const std::shared_ptr<TensorImpl>& t, std::span<const double> values) {
  if (!t->requires_grad) return;
  if (t->grad.empty()) {
    t->grad.assign(values.begin(), values.end());
    return;
  }
  for (std::size_t i = 0; i < values.size(); ++i) t->grad[i] += values[i];
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  // Intermediate tensors may outlive the tape; detach them.
  for (auto& node : nodes_) node.output->tape_id.reset();
  g_active_tape = previous_;
}

Tape* Tape::active() { return g_active_tape; }

bool Tape::record(std::string_view kind, std::initializer_list<Tensor> inputs, Tensor& output,
                  BackwardFn fn) {
  bool needed = false;
  std::vector<std::size_t> ids;
  for (const auto& in : inputs) {
    if (!in.defined() || !in.requires_grad()) continue;
    needed = true;
    if (auto id = in.tape_id()) ids.push_back(*id);
  }
  if (!needed) return false;
  output.set_requires_grad(true);
  const std::size_t id = nodes_.size();
  output.impl()->tape_id = id;
  nodes_.push_back(Node{kind, std::move(ids), output.impl(), std::move(fn)});
  return true;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() loss is not connected to any parameter");
  }
  const double one = 1.0;
  accumulate_grad(loss.impl(), std::span<const double>(&one, 1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
}

}  // namespace mimk
