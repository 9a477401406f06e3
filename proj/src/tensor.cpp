#include "sedn/tensor.hpp"

#include <sstream>

SEDN_BEGIN_NAMESPACE

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<Real> data, bool requires_grad) : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data has " + std::to_string(data.size()) + " values but shape " + shape_string(shape) +
                     " needs " + std::to_string(shape_numel(shape)));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real(0), requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_string(this->shape()) + " to " + shape_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>(*impl_);
  impl->shape = std::move(shape);
  impl->grad.clear();
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

namespace {
thread_local Graph* g_active = nullptr;
thread_local bool g_suspended = false;
}  // namespace

Graph::Graph() : previous_(g_active) { g_active = this; }

Graph::~Graph() { g_active = previous_; }

Graph* Graph::active() { return g_suspended ? nullptr : g_active; }

void Graph::record(std::function<void()> backward_rule) { rules_.push_back(std::move(backward_rule)); }

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward() called twice on the same graph");
  if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward() needs a single-element loss");
  if (!loss.requires_grad()) throw StateError("loss does not depend on any parameter");
  consumed_ = true;
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += Real(1);
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  rules_.clear();
}

NoGradScope::NoGradScope() : previous_(g_suspended) { g_suspended = true; }
NoGradScope::~NoGradScope() { g_suspended = previous_; }

namespace detail {

bool recording_suspended() { return g_suspended; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Graph::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool should_record(std::span<const Tensor> inputs) {
  if (Graph::active() == nullptr) return false;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<Real> data, bool requires_grad) {
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace detail

SEDN_END_NAMESPACE
