#include <algorithm>
#include <cmath>

#include "../detail.hpp"
#include "manetl/ops.hpp"

namespace manetl {

namespace {

// Stable row softmax; returns probabilities and per-row log-sum-exp.
template <typename T>
void softmax_rows(const T* x, std::size_t rows, std::size_t cols, T* probs, T* log_norm) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = x + r * cols;
        const T peak = *std::max_element(row, row + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const T e = std::exp(row[c] - peak);
            probs[r * cols + c] = e;
            total += e;
        }
        const T inv = static_cast<T>(1.0 / total);
        for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] *= inv;
        if (log_norm) log_norm[r] = peak + static_cast<T>(std::log(total));
    }
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& input) {
    if (input.ndim() != 2 || input.dim(1) == 0) {
        detail::dimension_error("softmax", "input must be [B,K] with K >= 1, got " + shape_string(input.shape()));
    }
    const std::size_t rows = input.dim(0), cols = input.dim(1);
    std::vector<T> probs(input.numel());
    softmax_rows(input.data().data(), rows, cols, probs.data(), static_cast<T*>(nullptr));
    auto x_impl = input.impl();
    std::vector<T> saved = probs;
    return detail::make_result<T>("softmax", input.shape(), std::move(probs), {input},
                                  [=, saved = std::move(saved)](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          const T* p = saved.data() + r * cols;
                                          const T* g = gout.data() + r * cols;
                                          T dot = T(0);
                                          for (std::size_t c = 0; c < cols; ++c) dot += p[c] * g[c];
                                          for (std::size_t c = 0; c < cols; ++c) {
                                              gx[r * cols + c] += p[c] * (g[c] - dot);
                                          }
                                      }
                                  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    const char* op = "cross_entropy";
    if (logits.ndim() != 2 || logits.dim(1) == 0) {
        detail::dimension_error(op, "logits must be [B,K], got " + shape_string(logits.shape()));
    }
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (labels.size() != rows) {
        throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    if (rows == 0) throw InputError("cross_entropy: empty batch");
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
            throw InputError("cross_entropy: label " + std::to_string(labels[r]) + " at row " +
                             std::to_string(r) + " outside [0," + std::to_string(cols) + ")");
        }
    }
    std::vector<T> probs(logits.numel());
    std::vector<T> log_norm(rows);
    softmax_rows(logits.data().data(), rows, cols, probs.data(), log_norm.data());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        total += log_norm[r] - logits.data()[r * cols + static_cast<std::size_t>(labels[r])];
    }
    const T loss = static_cast<T>(total / static_cast<double>(rows));
    auto x_impl = logits.impl();
    std::vector<int> targets(labels.begin(), labels.end());
    return detail::make_result<T>(
        op, Shape{1}, std::vector<T>{loss}, {logits},
        [=, probs = std::move(probs), targets = std::move(targets)](std::span<const T> gout) {
            auto gx = detail::grad_sink(*x_impl);
            const T g = gout[0] / static_cast<T>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    const T onehot = static_cast<std::size_t>(targets[r]) == c ? T(1) : T(0);
                    gx[r * cols + c] += g * (probs[r * cols + c] - onehot);
                }
            }
        });
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& input) {
    if (input.ndim() != 2) detail::dimension_error("argmax_rows", "input must be [B,K]");
    const std::size_t rows = input.dim(0), cols = input.dim(1);
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = input.data().data() + r * cols;
        out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
    }
    return out;
}

#define MANETL_INSTANTIATE_LOSS(T)                                        \
    template Tensor<T> softmax(const Tensor<T>&);                         \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>); \
    template std::vector<int> argmax_rows(const Tensor<T>&);

MANETL_INSTANTIATE_LOSS(float)
MANETL_INSTANTIATE_LOSS(double)

}  // namespace manetl
