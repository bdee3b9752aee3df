#include <cmath>

#include "../detail.hpp"
#include "manetl/ops.hpp"

namespace manetl {

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, Mode mode) {
    const char* op = "batch_norm";
    if (input.ndim() != 2 && input.ndim() != 4) {
        detail::dimension_error(op, "input must be [B,N] or [B,C,H,W], got " + shape_string(input.shape()));
    }
    const std::size_t batch = input.dim(0);
    const std::size_t channels = input.dim(1);
    const std::size_t inner = input.ndim() == 4 ? input.dim(2) * input.dim(3) : 1;
    const Shape per_channel{channels};
    if (gamma.shape() != per_channel || beta.shape() != per_channel ||
        stats.running_mean.shape() != per_channel || stats.running_var.shape() != per_channel) {
        detail::dimension_error(op, "affine and running-stat tensors must all be [" +
                                        std::to_string(channels) + "]");
    }
    if (mode == Mode::Train && batch < 2) {
        throw ConfigError("batch_norm: train mode needs a batch of at least 2, got " +
                          std::to_string(batch));
    }

    const std::size_t count = batch * inner;
    const T* x = input.data().data();
    std::vector<T> mean(channels);
    std::vector<T> inv_std(channels);
    if (mode == Mode::Train) {
        auto rm = stats.running_mean.mutable_data();
        auto rv = stats.running_var.mutable_data();
        for (std::size_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* p = x + (b * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(count);
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* p = x + (b * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = p[i] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(count);
            mean[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEpsilon));
            const double unbiased = sq / static_cast<double>(count - 1);
            rm[c] = static_cast<T>((1.0 - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * mu);
            rv[c] = static_cast<T>((1.0 - kBatchNormMomentum) * rv[c] + kBatchNormMomentum * unbiased);
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            mean[c] = stats.running_mean.data()[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.running_var.data()[c]) +
                                                        kBatchNormEpsilon));
        }
    }

    std::vector<T> normalized(input.numel());
    std::vector<T> out(input.numel());
    const T* g = gamma.data().data();
    const T* bt = beta.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const T xh = (x[base + i] - mean[c]) * inv_std[c];
                normalized[base + i] = xh;
                out[base + i] = g[c] * xh + bt[c];
            }
        }
    }

    auto x_impl = input.impl();
    auto g_impl = gamma.impl();
    auto b_impl = beta.impl();
    const bool train = mode == Mode::Train;
    return detail::make_result<T>(
        op, input.shape(), std::move(out), {input, gamma, beta},
        [=, normalized = std::move(normalized), inv_std = std::move(inv_std)](std::span<const T> gout) {
            auto gx = detail::grad_sink(*x_impl);
            auto gg = detail::grad_sink(*g_impl);
            auto gb = detail::grad_sink(*b_impl);
            const T* gam = g_impl->data.data();
            for (std::size_t c = 0; c < channels; ++c) {
                double sum_g = 0.0;
                double sum_gx = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t base = (b * channels + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) {
                        sum_g += gout[base + i];
                        sum_gx += static_cast<double>(gout[base + i]) * normalized[base + i];
                    }
                }
                if (!gg.empty()) gg[c] += static_cast<T>(sum_gx);
                if (!gb.empty()) gb[c] += static_cast<T>(sum_g);
                if (gx.empty()) continue;
                const T scale = gam[c] * inv_std[c];
                if (train) {
                    const T n = static_cast<T>(count);
                    const T mean_g = static_cast<T>(sum_g) / n;
                    const T mean_gx = static_cast<T>(sum_gx) / n;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * channels + c) * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                            gx[base + i] += scale * (gout[base + i] - mean_g - normalized[base + i] * mean_gx);
                        }
                    }
                } else {
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * channels + c) * inner;
                        for (std::size_t i = 0; i < inner; ++i) gx[base + i] += scale * gout[base + i];
                    }
                }
            }
        });
}

template Tensor<float> batch_norm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                  BatchNormStats<float>&, Mode);
template Tensor<double> batch_norm(const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, BatchNormStats<double>&, Mode);

}  // namespace manetl
