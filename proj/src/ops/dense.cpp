#include "../detail.hpp"
#include "../gemm.hpp"
#include "manetl/ops.hpp"

namespace manetl {

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
    const char* op = "dense";
    if (input.ndim() != 2) detail::dimension_error(op, "input must be [B,N], got " + shape_string(input.shape()));
    if (weights.ndim() != 2) detail::dimension_error(op, "weights must be [M,N], got " + shape_string(weights.shape()));
    const std::size_t batch = input.dim(0);
    const std::size_t n = input.dim(1);
    const std::size_t m = weights.dim(0);
    if (weights.dim(1) != n) {
        detail::dimension_error(op, "inner axis mismatch: input has " + std::to_string(n) +
                                        " features, weights expect " + std::to_string(weights.dim(1)));
    }
    if (bias.defined() && bias.shape() != Shape{m}) {
        detail::dimension_error(op, "bias shape " + shape_string(bias.shape()) + " must be [" +
                                        std::to_string(m) + "]");
    }
    std::vector<T> out(batch * m);
    detail::gemm<T>(false, true, batch, m, n, input.data().data(), weights.data().data(), out.data(),
                    false);
    if (bias.defined()) {
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < m; ++j) out[b * m + j] += bias.data()[j];
        }
    }
    auto x_impl = input.impl();
    auto w_impl = weights.impl();
    auto b_impl = bias.defined() ? bias.impl() : nullptr;
    return detail::make_result<T>(
        op, Shape{batch, m}, std::move(out), {input, weights, bias},
        [batch, n, m, x_impl, w_impl, b_impl](std::span<const T> gout) {
            auto gx = detail::grad_sink(*x_impl);
            if (!gx.empty()) {
                detail::gemm<T>(false, false, batch, n, m, gout.data(), w_impl->data.data(),
                                gx.data(), true);
            }
            auto gw = detail::grad_sink(*w_impl);
            if (!gw.empty()) {
                detail::gemm<T>(true, false, m, n, batch, gout.data(), x_impl->data.data(),
                                gw.data(), true);
            }
            if (b_impl) {
                auto gb = detail::grad_sink(*b_impl);
                if (!gb.empty()) {
                    for (std::size_t b = 0; b < batch; ++b) {
                        for (std::size_t j = 0; j < m; ++j) gb[j] += gout[b * m + j];
                    }
                }
            }
        });
}

template Tensor<float> dense(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dense(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace manetl
