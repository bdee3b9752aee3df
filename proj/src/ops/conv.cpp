#include <algorithm>
#include <string>

#include "../detail.hpp"
#include "../gemm.hpp"
#include "manetl/ops.hpp"
#include "manetl/parallel.hpp"

namespace manetl {

std::size_t window_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding, const char* axis) {
    if (stride == 0) throw DimensionError(std::string("stride must be >= 1 on axis ") + axis);
    const std::size_t padded = in + 2 * padding;
    if (kernel == 0 || kernel > padded) {
        throw DimensionError(std::string("window of ") + std::to_string(kernel) +
                             " does not fit padded extent " + std::to_string(padded) +
                             " on axis " + axis);
    }
    return (padded - kernel) / stride + 1;
}

std::size_t ConvSpec::out_h(std::size_t in_h) const {
    return window_extent(in_h, kernel_h, stride, padding, "H");
}

std::size_t ConvSpec::out_w(std::size_t in_w) const {
    return window_extent(in_w, kernel_w, stride, padding, "W");
}

void ConvSpec::validate() const {
    if (stride == 0) throw ConfigError("conv stride must be >= 1");
    if (kernel_h == 0 || kernel_w == 0) throw ConfigError("conv kernel must be non-empty");
    if (in_channels == 0 || out_channels == 0) throw ConfigError("conv channel counts must be >= 1");
}

namespace {

struct ConvGeometry {
    std::size_t cin, h, w, cout, kh, kw, stride, pad, ho, wo;
    std::size_t patch() const { return cin * kh * kw; }
    std::size_t plane_out() const { return ho * wo; }
    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* col) {
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.plane_out();
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                    T* dst = row + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill(dst, dst + g.wo, T(0));
                        continue;
                    }
                    const T* src = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix =
                            static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w))
                                      ? T(0)
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* in) {
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.plane_out();
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    T* dst = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const T* src = row + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix =
                            static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
                        if (ix >= 0 && ix < static_cast<long>(g.w)) {
                            dst[static_cast<std::size_t>(ix)] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const ConvSpec& spec) {
    const char* op = "conv2d";
    if (input.ndim() != 4) detail::dimension_error(op, "input must be [B,C,H,W], got " + shape_string(input.shape()));
    if (input.dim(1) != spec.in_channels) {
        detail::dimension_error(op, "channel axis (1) of input is " + std::to_string(input.dim(1)) +
                                        ", spec expects " + std::to_string(spec.in_channels));
    }
    const Shape expected_w{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
    if (weights.shape() != expected_w) {
        detail::dimension_error(op, "weights shape " + shape_string(weights.shape()) +
                                        " does not match spec " + shape_string(expected_w));
    }
    if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
        detail::dimension_error(op, "bias shape " + shape_string(bias.shape()) + " must be [" +
                                        std::to_string(spec.out_channels) + "]");
    }
    const std::size_t batch = input.dim(0);
    const ConvGeometry g{spec.in_channels, input.dim(2), input.dim(3), spec.out_channels,
                         spec.kernel_h,    spec.kernel_w, spec.stride, spec.padding,
                         spec.out_h(input.dim(2)), spec.out_w(input.dim(3))};

    std::vector<T> out(batch * g.cout * g.plane_out());
    const T* x = input.data().data();
    const T* wt = weights.data().data();
    parallel_for(batch, [&](std::size_t b) {
        const T* xb = x + b * g.cin * g.h * g.w;
        T* ob = out.data() + b * g.cout * g.plane_out();
        thread_local std::vector<T> col;
        const T* cols = xb;
        if (!g.pointwise()) {
            col.resize(g.patch() * g.plane_out());
            im2col(g, xb, col.data());
            cols = col.data();
        }
        detail::gemm<T>(false, false, g.cout, g.plane_out(), g.patch(), wt, cols, ob, false);
        if (bias.defined()) {
            const T* bb = bias.data().data();
            for (std::size_t o = 0; o < g.cout; ++o) {
                T* row = ob + o * g.plane_out();
                for (std::size_t i = 0; i < g.plane_out(); ++i) row[i] += bb[o];
            }
        }
    });

    Shape out_shape{batch, g.cout, g.ho, g.wo};
    auto x_impl = input.impl();
    auto w_impl = weights.impl();
    auto b_impl = bias.defined() ? bias.impl() : nullptr;
    return detail::make_result<T>(
        op, std::move(out_shape), std::move(out), {input, weights, bias},
        [g, batch, x_impl, w_impl, b_impl](std::span<const T> gout) {
            const T* x = x_impl->data.data();
            const T* wt = w_impl->data.data();
            auto gx = detail::grad_sink(*x_impl);
            auto gw = detail::grad_sink(*w_impl);
            if (b_impl) {
                auto gb = detail::grad_sink(*b_impl);
                if (!gb.empty()) {
                    for (std::size_t b = 0; b < batch; ++b) {
                        for (std::size_t o = 0; o < g.cout; ++o) {
                            const T* row = gout.data() + (b * g.cout + o) * g.plane_out();
                            T acc = T(0);
                            for (std::size_t i = 0; i < g.plane_out(); ++i) acc += row[i];
                            gb[o] += acc;
                        }
                    }
                }
            }
            if (!gx.empty()) {
                parallel_for(batch, [&](std::size_t b) {
                    const T* gob = gout.data() + b * g.cout * g.plane_out();
                    T* gxb = gx.data() + b * g.cin * g.h * g.w;
                    if (g.pointwise()) {
                        detail::gemm<T>(true, false, g.patch(), g.plane_out(), g.cout, wt, gob, gxb, true);
                        return;
                    }
                    thread_local std::vector<T> gcol;
                    gcol.resize(g.patch() * g.plane_out());
                    detail::gemm<T>(true, false, g.patch(), g.plane_out(), g.cout, wt, gob,
                                    gcol.data(), false);
                    col2im_add(g, gcol.data(), gxb);
                });
            }
            if (!gw.empty()) {
                std::vector<T> col;
                for (std::size_t b = 0; b < batch; ++b) {
                    const T* xb = x + b * g.cin * g.h * g.w;
                    const T* cols = xb;
                    if (!g.pointwise()) {
                        col.resize(g.patch() * g.plane_out());
                        im2col(g, xb, col.data());
                        cols = col.data();
                    }
                    detail::gemm<T>(false, true, g.cout, g.patch(), g.plane_out(),
                                    gout.data() + b * g.cout * g.plane_out(), cols, gw.data(), true);
                }
            }
        });
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              const ConvSpec&);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, const ConvSpec&);

}  // namespace manetl
