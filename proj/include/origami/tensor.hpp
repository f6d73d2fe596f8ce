#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "origami/errors.hpp"

// Dense row-major tensors with reverse-mode autodiff.
//
// A Tensor<T> is a cheap handle onto a shared TensorImpl<T>.  Every op that
// runs while gradients are enabled records a Node holding the backward
// closure and strong references to the input impls, so the graph stays alive
// as long as its final outputs do.  Nodes reference their own output weakly;
// there are no cycles and the whole graph frees when the last handle drops.

namespace origami {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

template <class T>
struct TensorImpl;

// One recorded op.  backprop() reads the output's grad (and data, for ops
// like tanh that reuse it) and accumulates into the inputs' grads.
template <class T>
struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::weak_ptr<TensorImpl<T>> output;
    std::function<void(TensorImpl<T>&)> backprop;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first needed; same length as data after
    bool requires_grad = false;
    std::shared_ptr<Node<T>> producer;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_leaf() const { return producer == nullptr; }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

// Thread-local gradient-recording switch.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return checked().shape; }
    int ndim() const { return static_cast<int>(checked().shape.size()); }
    // Negative axes count from the back, as in dim(-1) for the last axis.
    std::int64_t dim(int axis) const;
    std::int64_t numel() const { return checked().numel(); }

    std::span<T> data() { return {checked().data.data(), checked().data.size()}; }
    std::span<const T> data() const { return {checked().data.data(), checked().data.size()}; }

    bool requires_grad() const { return checked().requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool has_grad() const { return defined() && !impl_->grad.empty(); }
    // Allocates (zeroed) on first access so callers can always read it.
    std::span<T> grad();
    std::span<const T> grad() const;
    void zero_grad();

    // Element access for tests and small glue code; row-major strides.
    T at(std::initializer_list<std::int64_t> idx) const;
    void set_at(std::initializer_list<std::int64_t> idx, T value);
    std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const;
    T item() const;

    // Reverse-mode sweep from a scalar.  Leaf grads accumulate across calls;
    // interior grads are rebuilt from scratch on every call.
    void backward() const;

    std::shared_ptr<TensorImpl<T>>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

private:
    TensorImpl<T>& checked() const {
        if (!impl_) throw ShapeError("tensor: operation on undefined tensor");
        return *impl_;
    }

    std::shared_ptr<TensorImpl<T>> impl_;
};

// Builds the output impl for an op: shape/data set by caller afterwards.
// requires_grad is inherited from the inputs only while grads are enabled.
template <class T>
Tensor<T> make_op_output(const char* op, Shape shape,
                         std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                         std::function<void(TensorImpl<T>&)> backprop);

// Accumulate src into t.grad (allocating it on demand).
template <class T>
void accumulate_grad(TensorImpl<T>& t, const T* src, std::int64_t n);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace origami
