#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace e3 {

using shape_t = std::vector<std::size_t>;

class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(const shape_t& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const shape_t& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {
inline thread_local bool grad_mode = true;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode; }

// Disables graph recording on the current thread for its lifetime.
class no_grad_guard {
 public:
  no_grad_guard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~no_grad_guard() { detail::grad_mode = previous_; }
  no_grad_guard(const no_grad_guard&) = delete;
  no_grad_guard& operator=(const no_grad_guard&) = delete;

 private:
  bool previous_;
};

template <class T>
struct tensor_node {
  shape_t shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<tensor_node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(tensor_node&)> backprop;

  bool is_leaf() const { return !backprop; }
};

/// Dense row-major array with optional reverse-mode gradient tracking.
///
/// A tensor is a shared handle: copies alias the same storage. Parameters are
/// leaf tensors created with `requires_grad = true`; every op applied to them
/// records a node in the graph, and `backward()` on a scalar result fills the
/// `grad` buffers of all reachable leaves.
template <class T>
class basic_tensor {
 public:
  using value_type = T;
  using node_type = tensor_node<T>;

  basic_tensor() = default;
  explicit basic_tensor(std::shared_ptr<node_type> node) : node_(std::move(node)) {}

  static basic_tensor from_values(shape_t shape, std::vector<T> values, bool requires_grad = false) {
    for (auto d : shape) {
      if (d == 0) throw shape_error("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_size(shape)) {
      throw shape_error("value count " + std::to_string(values.size()) + " does not match shape " +
                        shape_str(shape));
    }
    auto node = std::make_shared<node_type>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), T(0));
    return basic_tensor(std::move(node));
  }

  static basic_tensor zeros(shape_t shape, bool requires_grad = false) {
    auto n = shape_size(shape);
    return from_values(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static basic_tensor filled(shape_t shape, T v, bool requires_grad = false) {
    auto n = shape_size(shape);
    return from_values(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static basic_tensor vector(std::vector<T> values, bool requires_grad = false) {
    shape_t shape{values.size()};
    return from_values(std::move(shape), std::move(values), requires_grad);
  }

  static basic_tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values,
                             bool requires_grad = false) {
    return from_values({rows, cols}, std::move(values), requires_grad);
  }

  static basic_tensor scalar(T v, bool requires_grad = false) {
    return from_values({}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const shape_t& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : node_->shape.back(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  const std::vector<T>& values() const { return node_->value; }

  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }

  T item() const {
    if (size() != 1) throw shape_error("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  /// Value copy without graph history.
  basic_tensor detach() const { return from_values(shape(), node_->value, false); }

  /// Reverse pass from this scalar. Leaf grads accumulate across calls;
  /// intermediate grads are reset at the start of every call.
  void backward() const {
    if (size() != 1) throw shape_error("backward() requires a scalar loss, got " + shape_str(shape()));
    if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");

    std::vector<node_type*> order;
    std::unordered_set<node_type*> seen;
    std::vector<std::pair<node_type*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        node_type* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (auto* node : order) {
      if (!node->is_leaf()) node->grad.assign(node->value.size(), T(0));
    }
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (!(*it)->is_leaf()) (*it)->backprop(**it);
    }
  }

  const std::shared_ptr<node_type>& node() const { return node_; }

 private:
  std::shared_ptr<node_type> node_;
};

using tensor = basic_tensor<float>;

namespace detail {

// Builds an op result; records the graph only if grad mode is on and some
// input requires grad.
template <class T>
basic_tensor<T> make_result(shape_t shape, std::vector<T> value,
                            std::initializer_list<basic_tensor<T>> inputs,
                            std::function<void(tensor_node<T>&)> backprop) {
  auto out = basic_tensor<T>::from_values(std::move(shape), std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) node.inputs.push_back(in.node());
  node.backprop = std::move(backprop);
  return out;
}

template <class T>
basic_tensor<T> make_result(shape_t shape, std::vector<T> value,
                            const std::vector<basic_tensor<T>>& inputs,
                            std::function<void(tensor_node<T>&)> backprop) {
  auto out = basic_tensor<T>::from_values(std::move(shape), std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) node.inputs.push_back(in.node());
  node.backprop = std::move(backprop);
  return out;
}

}  // namespace detail

}  // namespace e3
