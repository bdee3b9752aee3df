#pragma once

// Reference implementations written straight from the definitions. They
// deliberately share no code with the library kernels they check.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "manetl/ops.hpp"
#include "manetl/tensor.hpp"

namespace oracle {

template <typename T>
manetl::Tensor<T> random_tensor(manetl::Shape shape, std::uint64_t seed, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<T> v(manetl::shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(u(rng));
    return manetl::Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

// Direct cross-correlation: out[b,o,y,x] = bias[o] +
// sum_c sum_ky sum_kx in[b,c,y*s+ky-p,x*s+kx-p] * w[o,c,ky,kx]
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t B, std::size_t C,
                                  std::size_t H, std::size_t W, const std::vector<double>& w,
                                  std::size_t O, std::size_t KH, std::size_t KW,
                                  const std::vector<double>& bias, std::size_t stride,
                                  std::size_t pad, std::size_t& HO, std::size_t& WO) {
    HO = (H + 2 * pad - KH) / stride + 1;
    WO = (W + 2 * pad - KW) / stride + 1;
    std::vector<double> out(B * O * HO * WO, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < HO; ++y)
                for (std::size_t x = 0; x < WO; ++x) {
                    double acc = bias.empty() ? 0.0 : bias[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < KH; ++ky)
                            for (std::size_t kx = 0; kx < KW; ++kx) {
                                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                                    continue;
                                acc += in[((b * C + c) * H + iy) * W + ix] * w[((o * C + c) * KH + ky) * KW + kx];
                            }
                    out[((b * O + o) * HO + y) * WO + x] = acc;
                }
    return out;
}

inline std::vector<double> dense(const std::vector<double>& x, std::size_t B, std::size_t N,
                                 const std::vector<double>& w, std::size_t M,
                                 const std::vector<double>& bias) {
    std::vector<double> out(B * M);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m) {
            double acc = bias[m];
            for (std::size_t n = 0; n < N; ++n) acc += x[b * N + n] * w[m * N + n];
            out[b * M + m] = acc;
        }
    return out;
}

inline std::vector<double> avg_pool(const std::vector<double>& in, std::size_t planes,
                                    std::size_t H, std::size_t W, std::size_t k, std::size_t s) {
    const std::size_t HO = (H - k) / s + 1, WO = (W - k) / s + 1;
    std::vector<double> out(planes * HO * WO);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < HO; ++y)
            for (std::size_t x = 0; x < WO; ++x) {
                double acc = 0.0;
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) acc += in[(p * H + y * s + ky) * W + x * s + kx];
                out[(p * HO + y) * WO + x] = acc / static_cast<double>(k * k);
            }
    return out;
}

template <typename T>
std::vector<double> to_double(const manetl::Tensor<T>& t) {
    return std::vector<double>(t.data().begin(), t.data().end());
}

}  // namespace oracle
