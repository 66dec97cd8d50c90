#include "proxytr/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "proxytr/errors.hpp"

namespace proxytr {

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
NDArray<T>::NDArray(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
NDArray<T>::NDArray(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " does not hold " + std::to_string(data_.size()) +
                         " values");
  }
}

template <typename T>
std::size_t NDArray<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
void NDArray<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void NDArray<T>::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
bool NDArray<T>::all_finite() const noexcept {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace detail {

template <typename T>
NDArray<T>& Node<T>::ensure_grad() {
  if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = NDArray<T>(value.shape(), T(0));
  return grad;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(NDArray<T> value, bool requires_grad) : node_(std::make_shared<detail::Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return Tensor(NDArray<T>(std::move(shape), T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  return Tensor(NDArray<T>(std::move(shape), std::move(values)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(NDArray<T>(Shape{}, std::vector<T>{value}), requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_->grad.numel()) node_->grad.fill(T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  if (!node_) throw UsageError("backward() on an undefined tensor");
  if (numel() != 1) throw UsageError("backward() needs a scalar loss, got shape " + shape_to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives inputs before consumers.
  using NodePtr = detail::Node<T>*;
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodePtr n : order) {
    if (!n->leaf) n->ensure_grad().fill(T(0));
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr n = *it;
    if (n->backward) n->backward(*n);
  }
}

template class NDArray<float>;
template class NDArray<double>;
template class Tensor<float>;
template class Tensor<double>;

}  // namespace proxytr
