#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "manetl/tensor.hpp"

namespace manetl {

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

// Geometry of a 2-D convolution. Output extent per axis is
// floor((in + 2*padding - kernel) / stride) + 1.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static ConvSpec square(std::size_t in, std::size_t out, std::size_t kernel,
                           std::size_t stride = 1, std::size_t padding = 0) {
        return {in, out, kernel, kernel, stride, padding};
    }
    // Throws DimensionError when the window does not fit at least once.
    std::size_t out_h(std::size_t in_h) const;
    std::size_t out_w(std::size_t in_w) const;
    void validate() const;
};

// Output extent of a sliding window; throws DimensionError naming `axis`
// when the window never fits.
std::size_t window_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding, const char* axis);

// Running statistics of a batch-norm layer, stored as non-trainable tensors.
template <typename T>
struct BatchNormStats {
    Tensor<T> running_mean;
    Tensor<T> running_var;

    static BatchNormStats neutral(std::size_t features) {
        return {Tensor<T>::zeros({features}), Tensor<T>::full({features}, T(1))};
    }
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// input [B,Cin,H,W], weights [Cout,Cin,Kh,Kw], bias [Cout] or undefined.
// Zero-padded cross-correlation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const ConvSpec& spec);

// input [B,N], weights [M,N], bias [M] or undefined -> input * weights^T + bias.
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

// Normalizes each channel (axis 1) of a [B,N] or [B,C,H,W] tensor. Train mode
// uses batch statistics and folds them into `stats` (unbiased variance,
// momentum 0.1); eval mode uses the stored running statistics.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, Mode mode);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride);

// Padding cells never win the max.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride,
                     std::size_t padding = 0);

// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

// Row-wise softmax of [B,K] with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input);

// Inverted dropout: survivors are scaled by 1/(1-rate) in train mode; eval
// mode returns the input handle unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Concatenation along axis 1 of any number of [B,Ci,H,W] tensors.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// Channels [begin, end) of a [B,C,H,W] tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t end);

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& input);

// x [B,C,H,W] times gate [B,C], broadcast over H and W.
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& input, const Tensor<T>& gate);

// [B, ...] -> [B, prod(...)]
template <typename T>
Tensor<T> flatten(const Tensor<T>& input);

// Index of the largest value per row of a [B,K] tensor; ties go to the
// lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& input);

}  // namespace manetl
