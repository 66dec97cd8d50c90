#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace proxytr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

/// Dense row-major storage. Carries no gradient bookkeeping.
template <typename T>
class NDArray {
 public:
  NDArray() = default;
  explicit NDArray(Shape shape, T fill = T(0));
  NDArray(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  /// Leading extent of a matrix-shaped array.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  void fill(T value);
  void reshape(Shape shape);
  bool all_finite() const noexcept;

  friend bool operator==(const NDArray&, const NDArray&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
  NDArray<T> value;
  NDArray<T> grad;  // allocated on first use
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs that require it.
  std::function<void(Node&)> backward;

  NDArray<T>& ensure_grad();
};

}  // namespace detail

/// Whether newly created ops record backward closures on this thread.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a node of a dynamically recorded computation graph.
///
/// Copies share the underlying node. A graph (every tensor reachable from a
/// loss) must be used from one thread at a time.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NDArray<T> value, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const NDArray<T>& value() const { return node_->value; }
  /// Direct write access for optimizers and test fixtures; bypasses the graph.
  NDArray<T>& mutable_value() { return node_->value; }

  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rank() const { return node_->value.rank(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t numel() const { return node_->value.numel(); }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return node_->grad.numel() == node_->value.numel() && node_->grad.numel() > 0; }
  /// Gradient accumulator; zero-filled if nothing has been accumulated yet.
  const NDArray<T>& grad() const { return node_->ensure_grad(); }
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  /// Copy of the value with no graph history.
  Tensor detach() const { return Tensor(node_->value, false); }

  const std::shared_ptr<detail::Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Builds an op result. Records `backward` only when grad mode is on and at
/// least one input requires a gradient.
template <typename T, typename Backward>
Tensor<T> record(NDArray<T> value, std::initializer_list<Tensor<T>> inputs, const char* op,
                 Backward&& backward) {
  Tensor<T> out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.leaf = false;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.node());
  node.backward = std::forward<Backward>(backward);
  return out;
}

/// Variant of record() for ops with a runtime-sized input list.
template <typename T, typename Backward>
Tensor<T> record(NDArray<T> value, const std::vector<Tensor<T>>& inputs, const char* op,
                 Backward&& backward) {
  Tensor<T> out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.leaf = false;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.node());
  node.backward = std::forward<Backward>(backward);
  return out;
}

/// Gradient sink for input `i` of a recorded node, or nullptr if that input
/// does not require a gradient.
template <typename T>
NDArray<T>* input_grad(detail::Node<T>& node, std::size_t i) {
  auto& in = *node.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

extern template class NDArray<float>;
extern template class NDArray<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace proxytr
