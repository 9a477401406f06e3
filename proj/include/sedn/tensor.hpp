#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sedn/common.hpp"

SEDN_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until something flows into it
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
  }
};

/// Dense row-major tensor with shared ownership. Copies alias the same
/// storage; use `clone()` for an independent copy. Values are treated as
/// immutable once an op has produced them; only parameters are updated in
/// place (by optimizers and loaders) through `mutable_data()`.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const Real> data() const { return impl_->data; }
  std::span<Real> mutable_data() { return impl_->data; }
  const Real* ptr() const { return impl_->data.data(); }
  Real item() const;
  Real operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  std::span<Real> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.clear(); }

  /// Same values, no gradient tracking.
  Tensor detach() const;
  /// Deep copy of the values (and the requires_grad flag).
  Tensor clone() const;
  /// Copy of the values under a new shape of equal element count, untracked.
  Tensor reshape(Shape shape) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode tape. Constructing a Graph makes it the active tape of the
/// current thread until it is destroyed; every op on inputs that require
/// gradients appends its backward rule. Without an active Graph nothing is
/// recorded. A Graph must not be shared across threads.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* active();

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in exact reverse
  /// order. `loss` must hold a single element.
  void backward(const Tensor& loss);

  void record(std::function<void()> backward_rule);
  std::size_t size() const { return rules_.size(); }

 private:
  std::vector<std::function<void()>> rules_;
  Graph* previous_ = nullptr;
  bool consumed_ = false;
};

/// Temporarily disables recording on this thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

namespace detail {
bool recording_suspended();
/// True when an active tape exists and any input requires gradients.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);
Tensor make_result(Shape shape, std::vector<Real> data, bool requires_grad);
}  // namespace detail

SEDN_END_NAMESPACE
