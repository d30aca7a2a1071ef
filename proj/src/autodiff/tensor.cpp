#include "funie/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace funie {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw InvalidArgument("shape dimensions must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    if (static_cast<std::size_t>(shape_numel(shape)) != values.size()) {
        throw InvalidArgument("tensor shape " + shape_str(shape) + " does not match " +
                              std::to_string(values.size()) + " values");
    }
    node_ = std::make_shared<detail::Node<T>>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto n = static_cast<std::size_t>(shape_numel(shape));
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    if (!node_) throw StateError("undefined tensor");
    return node_->shape;
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
    if (!node_) throw StateError("undefined tensor");
    return node_->values;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
    if (!node_) throw StateError("undefined tensor");
    return node_->values;
}

template <typename T>
bool Tensor<T>::has_grad() const {
    return node_ && !node_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    if (!node_) throw StateError("undefined tensor");
    return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
    if (!node_) throw StateError("undefined tensor");
    return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
bool Tensor<T>::requires_grad() const {
    return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
    if (!node_) throw StateError("undefined tensor");
    if (!node_->is_leaf()) throw StateError("requires_grad can only be changed on leaf tensors");
    node_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
    return !node_ || node_->is_leaf();
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw InvalidArgument("item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->values[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(shape(), node_->values, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(shape(), node_->values, node_->requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values, std::vector<Tensor> inputs,
                                 std::function<void(detail::Node<T>&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values), false);
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->backward_fn = std::move(backward_fn);
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    return out;
}

template <typename T>
void Tensor<T>::backward() const {
    if (!node_) throw StateError("undefined tensor");
    if (numel() != 1) {
        throw InvalidArgument("backward() needs a scalar loss, got shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the recorded graph.
    using NodePtr = detail::Node<T>*;
    std::vector<NodePtr> order;
    std::unordered_set<NodePtr> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            NodePtr p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodePtr n = *it;
        if (!n->is_leaf() && !n->grad.empty()) n->backward_fn(*n);
    }
    // Intermediate gradients are transient; leaves keep accumulating.
    for (NodePtr n : order) {
        if (!n->is_leaf()) std::vector<T>().swap(n->grad);
    }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace funie
