#include "attrib/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "attrib/error.hpp"

namespace attrib::tg {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream s;
    s << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "," : "") << shape[i];
    s << ']';
    return s.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
        throw DimensionError("index rank " + std::to_string(idx.size()) + " for shape " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
        if (i >= shape_[axis]) throw DimensionError("index out of range for shape " + shape_str(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> idx) {
    return data_[offset(idx)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> idx) const {
    return data_[offset(idx)];
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->is_leaf = true;
    return Var<T>(std::move(n));
}

template <typename T>
void Var<T>::zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
}

template <typename T>
Tensor<T>& grad_buffer(Node<T>& node) {
    if (node.grad.empty() || node.grad.shape() != node.value.shape()) node.grad = Tensor<T>(node.value.shape(), T(0));
    return node.grad;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->is_leaf = false;
    if (g_grad_enabled)
        for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
    if (n->requires_grad) {
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.ptr());
        n->backward_fn = std::move(backward_fn);
    }
    return Var<T>(std::move(n));
}

template <typename T>
void backward(const Var<T>& loss) {
    if (!loss.defined()) throw UsageError("backward on undefined value");
    if (loss.value().numel() != 1)
        throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Post-order DFS; reversing gives a topological order from the loss.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(&loss.node(), 0);
    visited.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* n : order)
        if (!n->is_leaf) n->grad = Tensor<T>(n->value.shape(), T(0));
    grad_buffer(loss.node())[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->is_leaf || !n->backward_fn) continue;
        n->backward_fn(*n);
        // Interior gradients are not needed once propagated.
        n->grad = Tensor<T>();
    }
}

#define ATTRIB_INSTANTIATE(T)                                                                             \
    template class Tensor<T>;                                                                             \
    template class Var<T>;                                                                                \
    template Tensor<T>& grad_buffer<T>(Node<T>&);                                                         \
    template Var<T> make_op<T>(Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>);            \
    template void backward<T>(const Var<T>&);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib::tg
