// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mimk {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is written
  bool requires_grad = false;
  std::optional<std::size_t> tape_id;
};

/// Dense row-major array of 64-bit reals. Copies share storage; values are
/// treated as immutable once an operation has produced them, only the
/// gradient slot (and parameter values, through the optimizer) change.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Writable view for leaf parameters (initializers and the optimizer).
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t flat) const { return impl_->data.at(flat); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  std::optional<std::size_t> tape_id() const { return impl_->tape_id; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Gradient accumulation callback of one recorded operation; receives the
/// gradient with respect to the node's output.
using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Reverse-mode tape. Constructing a Tape makes it the active tape of the
/// calling thread until it is destroyed; operations executed while no tape is
/// active record nothing, which is how evaluation runs without gradients.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  /// Appends a node when any input requires a gradient. Marks `output` as
  /// requiring grad and assigns its tape id. Returns false if nothing was
  /// recorded.
  bool record(std::string_view kind, std::initializer_list<Tensor> inputs, Tensor& output,
              BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every node once in reverse order.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  std::string_view kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& input_ids(std::size_t id) const {
    return nodes_.at(id).input_ids;
  }

 private:
  struct Node {
    std::string_view kind;
    std::vector<std::size_t> input_ids;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
};

/// Adds `values` into the gradient slot of `t`, allocating it on first use.
void accumulate_grad(const std::shared_ptr<TensorImpl>& t, std::span<const double> values);

}  // namespace mimk
