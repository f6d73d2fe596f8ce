#include "origami/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "origami/kernels.hpp"

namespace origami {

std::int64_t numel_of(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) {
        if (d < 0) throw ShapeError("shape: negative dimension " + std::to_string(d));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t.impl()->data.begin(), t.impl()->data.end(), value);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> values, bool requires_grad) {
    if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("from_data: shape " + shape_str(shape) + " wants " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

template <class T>
std::int64_t Tensor<T>::dim(int axis) const {
    const auto& s = checked().shape;
    int n = static_cast<int>(s.size());
    int a = axis < 0 ? axis + n : axis;
    if (a < 0 || a >= n)
        throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[static_cast<std::size_t>(a)];
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    checked().requires_grad = on;
    return *this;
}

template <class T>
std::span<T> Tensor<T>::grad() {
    checked().ensure_grad();
    return {impl_->grad.data(), impl_->grad.size()};
}

template <class T>
std::span<const T> Tensor<T>::grad() const {
    checked().ensure_grad();
    return {impl_->grad.data(), impl_->grad.size()};
}

template <class T>
void Tensor<T>::zero_grad() {
    auto& t = checked();
    if (!t.grad.empty()) std::fill(t.grad.begin(), t.grad.end(), T(0));
}

template <class T>
std::int64_t Tensor<T>::flat_index(std::initializer_list<std::int64_t> idx) const {
    const auto& s = checked().shape;
    if (idx.size() != s.size())
        throw ShapeError("index: rank " + std::to_string(idx.size()) + " into " + shape_str(s));
    std::int64_t flat = 0;
    std::size_t i = 0;
    for (std::int64_t v : idx) {
        if (v < 0 || v >= s[i])
            throw ShapeError("index: component " + std::to_string(i) + "=" + std::to_string(v) +
                             " out of range for " + shape_str(s));
        flat = flat * s[i] + v;
        ++i;
    }
    return flat;
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::int64_t> idx) const {
    return checked().data[static_cast<std::size_t>(flat_index(idx))];
}

template <class T>
void Tensor<T>::set_at(std::initializer_list<std::int64_t> idx, T value) {
    checked().data[static_cast<std::size_t>(flat_index(idx))] = value;
}

template <class T>
T Tensor<T>::item() const {
    if (numel() != 1)
        throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return checked().data[0];
}

namespace {

// Post-order over producers: every node appears after all nodes that feed it.
template <class T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    if (!root) return order;
    std::unordered_set<Node<T>*> seen;
    // (node, next input to visit)
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++]->producer.get();
            if (child && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

template <class T>
void Tensor<T>::backward() const {
    auto& loss = checked();
    if (loss.numel() != 1)
        throw ShapeError("backward: root must be scalar, got " + shape_str(loss.shape));

    auto order = topo_order<T>(loss.producer.get());
    // Interior grads are scratch: reset them so repeated sweeps do not
    // double-count, while leaf grads keep accumulating.
    for (Node<T>* n : order) {
        if (auto out = n->output.lock(); out && !out->is_leaf()) out->grad.clear();
    }
    loss.ensure_grad();
    loss.grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        auto out = n->output.lock();
        if (!out || out->grad.empty()) continue;  // nothing flowed into this op
        n->backprop(*out);
    }
}

template <class T>
Tensor<T> make_op_output(const char* op, Shape shape,
                         std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                         std::function<void(TensorImpl<T>&)> backprop) {
    auto out = Tensor<T>::zeros(std::move(shape));
    bool track = grad_enabled();
    bool any = false;
    if (track)
        for (const auto& in : inputs)
            if (in->requires_grad) any = true;
    if (track && any) {
        auto node = std::make_shared<Node<T>>();
        node->op = op;
        node->inputs = std::move(inputs);
        node->output = out.impl();
        node->backprop = std::move(backprop);
        out.impl()->producer = std::move(node);
        out.impl()->requires_grad = true;
    }
    return out;
}

template <class T>
void accumulate_grad(TensorImpl<T>& t, const T* src, std::int64_t n) {
    t.ensure_grad();
    kern::axpy(T(1), src, t.grad.data(), n);
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_op_output<float>(const char*, Shape,
                                             std::vector<std::shared_ptr<TensorImpl<float>>>,
                                             std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_op_output<double>(const char*, Shape,
                                               std::vector<std::shared_ptr<TensorImpl<double>>>,
                                               std::function<void(TensorImpl<double>&)>);
template void accumulate_grad<float>(TensorImpl<float>&, const float*, std::int64_t);
template void accumulate_grad<double>(TensorImpl<double>&, const double*, std::int64_t);

}  // namespace origami
