#include <limits>

#include "../detail.hpp"
#include "manetl/ops.hpp"

namespace manetl {

namespace {

template <typename T>
void require_4d(const char* op, const Tensor<T>& input) {
    if (input.ndim() != 4) {
        detail::dimension_error(op, "input must be [B,C,H,W], got " + shape_string(input.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride) {
    const char* op = "avg_pool2d";
    require_4d(op, input);
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t h = input.dim(2), w = input.dim(3);
    const std::size_t ho = window_extent(h, kernel, stride, 0, "H");
    const std::size_t wo = window_extent(w, kernel, stride, 0, "W");
    const T inv = T(1) / static_cast<T>(kernel * kernel);
    std::vector<T> out(planes * ho * wo);
    const T* x = input.data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T acc = T(0);
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const T* row = x + (p * h + oy * stride + ky) * w + ox * stride;
                    for (std::size_t kx = 0; kx < kernel; ++kx) acc += row[kx];
                }
                out[(p * ho + oy) * wo + ox] = acc * inv;
            }
        }
    }
    auto x_impl = input.impl();
    return detail::make_result<T>(
        op, Shape{input.dim(0), input.dim(1), ho, wo}, std::move(out), {input},
        [=](std::span<const T> gout) {
            auto gx = detail::grad_sink(*x_impl);
            for (std::size_t p = 0; p < planes; ++p) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const T g = gout[(p * ho + oy) * wo + ox] * inv;
                        for (std::size_t ky = 0; ky < kernel; ++ky) {
                            T* row = gx.data() + (p * h + oy * stride + ky) * w + ox * stride;
                            for (std::size_t kx = 0; kx < kernel; ++kx) row[kx] += g;
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride,
                     std::size_t padding) {
    const char* op = "max_pool2d";
    require_4d(op, input);
    if (padding >= kernel) {
        detail::dimension_error(op, "padding must be smaller than the kernel");
    }
    const std::size_t planes = input.dim(0) * input.dim(1);
    const long h = static_cast<long>(input.dim(2)), w = static_cast<long>(input.dim(3));
    const std::size_t ho = window_extent(input.dim(2), kernel, stride, padding, "H");
    const std::size_t wo = window_extent(input.dim(3), kernel, stride, padding, "W");
    std::vector<T> out(planes * ho * wo);
    std::vector<std::size_t> winner(out.size());
    const T* x = input.data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_at = 0;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                    if (iy < 0 || iy >= h) continue;
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t at = (p * static_cast<std::size_t>(h) + static_cast<std::size_t>(iy)) *
                                                   static_cast<std::size_t>(w) +
                                               static_cast<std::size_t>(ix);
                        if (x[at] > best) {
                            best = x[at];
                            best_at = at;
                        }
                    }
                }
                const std::size_t o = (p * ho + oy) * wo + ox;
                out[o] = best;
                winner[o] = best_at;
            }
        }
    }
    auto x_impl = input.impl();
    return detail::make_result<T>(
        op, Shape{input.dim(0), input.dim(1), ho, wo}, std::move(out), {input},
        [x_impl, winner = std::move(winner)](std::span<const T> gout) {
            auto gx = detail::grad_sink(*x_impl);
            for (std::size_t o = 0; o < winner.size(); ++o) gx[winner[o]] += gout[o];
        });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
    const char* op = "global_avg_pool";
    require_4d(op, input);
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t area = input.dim(2) * input.dim(3);
    if (area == 0) detail::dimension_error(op, "spatial extent must be at least 1x1");
    std::vector<T> out(planes);
    const T* x = input.data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        T acc = T(0);
        for (std::size_t i = 0; i < area; ++i) acc += x[p * area + i];
        out[p] = acc / static_cast<T>(area);
    }
    auto x_impl = input.impl();
    return detail::make_result<T>(op, Shape{input.dim(0), input.dim(1)}, std::move(out), {input},
                                  [=](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      const T inv = T(1) / static_cast<T>(area);
                                      for (std::size_t p = 0; p < planes; ++p) {
                                          const T g = gout[p] * inv;
                                          for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += g;
                                      }
                                  });
}

#define MANETL_INSTANTIATE_POOL(T)                                                           \
    template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t, std::size_t);              \
    template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t); \
    template Tensor<T> global_avg_pool(const Tensor<T>&);

MANETL_INSTANTIATE_POOL(float)
MANETL_INSTANTIATE_POOL(double)

}  // namespace manetl
