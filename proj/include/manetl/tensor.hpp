#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "manetl/error.hpp"

namespace manetl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct TensorImpl;

// One recorded operation in the reverse-mode graph. `backward` receives the
// gradient of the node's output and accumulates into the gradients of
// `inputs`; it only touches intermediates captured when the forward ran.
template <typename T>
struct ComputeNode {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::function<void(std::span<const T> grad_out)> backward;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty when no gradient has been accumulated
    bool requires_grad = false;
    std::shared_ptr<ComputeNode<T>> node;  // null for leaves
};

// Dense row-major tensor handle. Copies share storage and graph state, the
// same way parameters are shared between a module and its optimizer.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    // Direct write access; reserved for parameter updates and test setup.
    std::span<T> mutable_data() { return impl_->data; }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> mutable_grad() { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad();

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool value);
    bool is_leaf() const { return impl_->node == nullptr; }
    const std::shared_ptr<ComputeNode<T>>& node() const { return impl_->node; }

    T item() const;
    T at(std::initializer_list<std::size_t> index) const;

    // A fresh leaf holding a copy of the values, with no graph history.
    Tensor detach() const;

    void backward() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Ordered reverse-mode traversal: every node appears after all nodes it
// depends on. Throws UsageError if the graph contains a cycle.
template <typename T>
std::vector<TensorImpl<T>*> topological_order(const Tensor<T>& root);

// Runs reverse-mode differentiation from a single-element tensor. Leaf
// gradients accumulate across calls; intermediate gradients are rebuilt on
// every call so repeated passes over the same graph add up exactly.
template <typename T>
void backward(const Tensor<T>& loss);

// Recording is on by default; a guard disables it within a scope.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

namespace debug {

// When enabled, every op result is scanned for NaN/Inf and a NumericalError
// naming the op is thrown on the first hit.
void set_finite_check(bool enabled);
bool finite_check_enabled();

// Fault injection for the gradient checker's own tests: the backward rule of
// every node whose op name equals `op` receives a scaled output gradient.
// An empty name disables the hook.
void set_corrupted_backward(std::string op);
const std::string& corrupted_backward();

}  // namespace debug

}  // namespace manetl
