#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "manetl/ops.hpp"
#include "manetl/tensor.hpp"

namespace manetl {

// Visits a named tensor. Names are dotted paths such as
// "residual.stage2.conv1.weight" and are stable across builds.
template <typename T>
using TensorVisitor = std::function<void(const std::string& name, Tensor<T>& tensor)>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
    return prefix.empty() ? leaf : prefix + "." + leaf;
}

// Fills `t` from U(-bound, bound) with bound = sqrt(6 / fan_in).
template <typename T>
void fan_in_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng);

template <typename T>
struct Conv2d {
    ConvSpec spec;
    Tensor<T> weight;  // [Cout, Cin, Kh, Kw]
    Tensor<T> bias;    // [Cout], undefined when the layer has none

    Conv2d() = default;
    Conv2d(const ConvSpec& spec, bool with_bias, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, spec); }
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

template <typename T>
struct Dense {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    Tensor<T> weight;  // [M, N]
    Tensor<T> bias;    // [M]

    Dense() = default;
    Dense(std::size_t in, std::size_t out, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x) const { return dense(x, weight, bias); }
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const { return in_features * out_features + out_features; }
};

template <typename T>
struct BatchNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormStats<T> stats;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t features);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) { return batch_norm(x, gamma, beta, stats, mode); }
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    // Running statistics: persisted in checkpoints, never optimized.
    void visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const { return 2 * gamma.numel(); }
};

}  // namespace manetl
