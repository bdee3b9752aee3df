#pragma once

// Internal helpers shared by the op implementations.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "manetl/tensor.hpp"

namespace manetl::detail {

template <typename T>
bool needs_grad(const Tensor<T>& t) {
    return t.defined() && t.requires_grad();
}

// Gradient buffer of an op input, allocated zero-filled on first use.
// Returns an empty span when the input does not take gradients.
template <typename T>
std::span<T> grad_sink(TensorImpl<T>& t) {
    if (!t.requires_grad) return {};
    if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), T(0));
    return t.grad;
}

template <typename T>
void check_finite(const std::string& op, std::span<const T> values) {
    for (T v : values) {
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite value produced by op '" + op + "'");
        }
    }
}

// Wraps a freshly computed result and, when recording, attaches the node
// that knows how to push gradients back into `inputs`.
template <typename T, typename Fn>
Tensor<T> make_result(const std::string& op, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs, Fn&& backward_fn) {
    if (debug::finite_check_enabled()) check_finite<T>(op, values);
    Tensor<T> out(std::move(shape), std::move(values));
    bool record = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) record = record || needs_grad(in);
    }
    if (!record) return out;
    auto node = std::make_shared<ComputeNode<T>>();
    node->op = op;
    for (auto& in : inputs) {
        if (in.defined()) node->inputs.push_back(in.impl());
    }
    node->backward = std::forward<Fn>(backward_fn);
    out.impl()->node = std::move(node);
    out.impl()->requires_grad = true;
    return out;
}

[[noreturn]] inline void dimension_error(const std::string& op, const std::string& what) {
    throw DimensionError(op + ": " + what);
}

}  // namespace manetl::detail
