#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "funie/errors.hpp"

namespace funie {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Whether operators currently record the graph (thread-local).
bool grad_enabled();

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Shared handle to an n-dimensional row-major array with an optional
/// gradient buffer. Copies alias the same storage; use clone() for a deep copy.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::int64_t dim(std::size_t axis) const { return shape().at(axis); }
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const { return values().size(); }

    std::span<const T> values() const;
    /// Direct write access; only meaningful for leaves (parameters, buffers).
    std::span<T> mutable_values();

    bool has_grad() const;
    std::span<const T> grad() const;
    std::span<T> mutable_grad();
    void zero_grad();

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;

    T item() const;
    /// Leaf copy of the current values that is cut from the graph.
    Tensor detach() const;
    /// Deep copy of values (and requires_grad flag) as a new leaf.
    Tensor clone() const;

    /// Reverse-mode sweep from this scalar; accumulates into leaf grads.
    void backward() const;

    // Graph construction helpers used by operator implementations.
    static Tensor make_result(Shape shape, std::vector<T> values,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node<T>&)> backward_fn);
    const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace funie
