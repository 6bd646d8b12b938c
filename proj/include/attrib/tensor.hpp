#pragma once

// Dense tensors and a tape-based reverse-mode differentiation engine.
//
// A Var is a handle to a graph node. Ops build new nodes whose backward
// closures accumulate into their parents' gradients; nodes that do not depend
// on any requires_grad leaf carry no closure, so inference builds no tape.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace attrib::tg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }
    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Row-major multi-index access; bounds are checked.
    T& at(std::initializer_list<std::size_t> idx);
    const T& at(std::initializer_list<std::size_t> idx) const;

    T item() const;
    void fill(T v);
    Tensor reshaped(Shape shape) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor&) const = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var leaf(Tensor<T> value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& grad() { return node_->grad; }
    void zero_grad();

    Node<T>& node() const { return *node_; }
    const std::shared_ptr<Node<T>>& ptr() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// While alive, ops on this thread record no tape (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Creates a node from parents and a backward closure. The closure is dropped
// when no parent requires gradients or a NoGradGuard is active. Ops defined
// outside the engine use this.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn);

// Grad buffer of a node, allocated as zeros on first use.
template <typename T>
Tensor<T>& grad_buffer(Node<T>& node);

// Reverse pass from a scalar. Gradients of interior nodes are reset on every
// call; leaf gradients accumulate across calls.
template <typename T>
void backward(const Var<T>& loss);

template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
};

// ---------------------------------------------------------------------------
// Ops. All are differentiable with respect to every Var argument.

// input [N,C,H,W], weight [K,C,3,3], optional bias [K]; stride 1, padding 1,
// cross-correlation (no kernel flip).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>* bias = nullptr);

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    BatchNormState() = default;
    explicit BatchNormState(std::size_t channels)
        : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

// Per-channel normalization over all axes except 1. Train mode uses batch
// statistics and updates the running estimates (unbiased variance).
template <typename T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                 bool train);

template <typename T>
Var<T> relu(const Var<T>& x);

// [N,C,H,W] -> [N,C,H/2,W/2]; H and W must be even.
template <typename T>
Var<T> avgpool2x2(const Var<T>& x);

// [N,C,H,W] -> [N,C]
template <typename T>
Var<T> global_avgpool(const Var<T>& x);

// Concatenation along axis 1; all other extents must match.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

// x [N,in], weight [out,in], optional bias [out] -> [N,out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>* bias = nullptr);

// F [B,D] -> [B,B] pairwise Euclidean distances. The backward pass uses
// sqrt(d^2 + 1e-12) in the denominator, so coincident rows get zero gradient.
template <typename T>
Var<T> l2_distance_matrix(const Var<T>& f);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> sum(const Var<T>& a);

// Mean softmax cross-entropy of logits [N,C] against integer labels.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);

}  // namespace attrib::tg
