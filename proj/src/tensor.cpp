#include "manetl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace manetl {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
bool g_finite_check = false;
std::string g_corrupted_op;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace debug {

void set_finite_check(bool enabled) { g_finite_check = enabled; }
bool finite_check_enabled() { return g_finite_check; }
void set_corrupted_backward(std::string op) { g_corrupted_op = std::move(op); }
const std::string& corrupted_backward() { return g_corrupted_op; }

}  // namespace debug

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " values but " +
                             std::to_string(data.size()) + " were supplied");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    std::vector<T> data(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
    if (!is_leaf()) {
        throw UsageError("requires_grad can only be changed on leaf tensors");
    }
    impl_->requires_grad = value;
    return *this;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw UsageError("item() on tensor of shape " + shape_string(shape()));
    }
    return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != ndim()) {
        throw DimensionError("index rank " + std::to_string(index.size()) +
                             " does not match tensor rank " + std::to_string(ndim()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= impl_->shape[axis]) {
            throw DimensionError("index " + std::to_string(i) + " out of range on axis " +
                                 std::to_string(axis));
        }
        flat = flat * impl_->shape[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
    manetl::backward(*this);
}

template <typename T>
std::vector<TensorImpl<T>*> topological_order(const Tensor<T>& root) {
    enum class Mark { Open, Done };
    std::vector<TensorImpl<T>*> order;
    std::unordered_map<TensorImpl<T>*, Mark> marks;
    // Explicit stack: deep residual graphs would otherwise risk recursion depth.
    struct Frame {
        TensorImpl<T>* impl;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    if (!root.defined()) return order;
    stack.push_back({root.impl().get(), 0});
    marks[root.impl().get()] = Mark::Open;
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& node = top.impl->node;
        if (node && top.next_input < node->inputs.size()) {
            TensorImpl<T>* child = node->inputs[top.next_input++].get();
            auto it = marks.find(child);
            if (it == marks.end()) {
                marks[child] = Mark::Open;
                stack.push_back({child, 0});
            } else if (it->second == Mark::Open) {
                throw UsageError("compute graph contains a cycle through op '" + node->op + "'");
            }
            continue;
        }
        marks[top.impl] = Mark::Done;
        order.push_back(top.impl);
        stack.pop_back();
    }
    return order;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward() needs a single-element loss, got shape " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    TensorImpl<T>* root = loss.impl().get();
    if (!root->node) {
        if (root->requires_grad) {
            if (root->grad.empty()) root->grad.assign(1, T(0));
            root->grad[0] += T(1);
        }
        return;
    }

    const std::vector<TensorImpl<T>*> order = topological_order(loss);
    // Each pass accumulates into fresh leaf buffers; earlier gradients are
    // added back at the end, so k passes give exactly k times one pass.
    std::vector<std::pair<TensorImpl<T>*, std::vector<T>>> previous;
    for (TensorImpl<T>* impl : order) {
        if (impl->node) {
            impl->grad.assign(impl->data.size(), T(0));
        } else if (impl->requires_grad && !impl->grad.empty()) {
            previous.emplace_back(impl, std::move(impl->grad));
            impl->grad.clear();
        }
    }
    root->grad[0] = T(1);

    const std::string& corrupted = debug::corrupted_backward();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* impl = *it;
        if (!impl->node) continue;
        if (!corrupted.empty() && impl->node->op == corrupted) {
            std::vector<T> skewed(impl->grad);
            for (T& g : skewed) g *= T(1.5);
            impl->node->backward(skewed);
        } else {
            impl->node->backward(impl->grad);
        }
        if (impl != root) std::vector<T>().swap(impl->grad);
    }
    for (auto& [impl, grad] : previous) {
        if (impl->grad.empty()) {
            impl->grad = std::move(grad);
            continue;
        }
        for (std::size_t i = 0; i < grad.size(); ++i) impl->grad[i] += grad[i];
    }
}

template class Tensor<float>;
template class Tensor<double>;
template std::vector<TensorImpl<float>*> topological_order(const Tensor<float>&);
template std::vector<TensorImpl<double>*> topological_order(const Tensor<double>&);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace manetl
