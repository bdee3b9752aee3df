#include <algorithm>
#include <random>

#include "../detail.hpp"
#include "manetl/ops.hpp"

namespace manetl {

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    std::vector<T> out(input.numel());
    const T* x = input.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    auto x_impl = input.impl();
    return detail::make_result<T>("relu", input.shape(), std::move(out), {input},
                                  [x_impl](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      const T* x = x_impl->data.data();
                                      for (std::size_t i = 0; i < gx.size(); ++i) {
                                          if (x[i] > T(0)) gx[i] += gout[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (mode == Mode::Eval || rate == 0.0) return input;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<T> mask(input.numel());
    std::vector<T> out(input.numel());
    const T* x = input.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = uniform(rng) < rate ? T(0) : keep_scale;
        out[i] = x[i] * mask[i];
    }
    auto x_impl = input.impl();
    return detail::make_result<T>("dropout", input.shape(), std::move(out), {input},
                                  [x_impl, mask = std::move(mask)](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * mask[i];
                                  });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    const char* op = "concat_channels";
    if (parts.empty()) detail::dimension_error(op, "nothing to concatenate");
    const Tensor<T>& first = parts.front();
    if (first.ndim() != 4) detail::dimension_error(op, "inputs must be [B,C,H,W], got " + shape_string(first.shape()));
    const std::size_t batch = first.dim(0);
    const std::size_t area = first.dim(2) * first.dim(3);
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != 4 || p.dim(0) != batch || p.dim(2) != first.dim(2) || p.dim(3) != first.dim(3)) {
            detail::dimension_error(op, "batch/spatial extents differ: " + shape_string(first.shape()) +
                                            " vs " + shape_string(p.shape()));
        }
        total += p.dim(1);
    }
    std::vector<T> out(batch * total * area);
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t block = p.dim(1) * area;
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(p.data().data() + b * block, block, out.data() + (b * total + offset) * area);
        }
        offset += p.dim(1);
    }
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return detail::make_result<T>(
        op, Shape{batch, total, first.dim(2), first.dim(3)}, std::move(out), parts,
        [=](std::span<const T> gout) {
            for (std::size_t k = 0; k < impls.size(); ++k) {
                auto gx = detail::grad_sink(*impls[k]);
                if (gx.empty()) continue;
                const std::size_t block = impls[k]->shape[1] * area;
                for (std::size_t b = 0; b < batch; ++b) {
                    const T* src = gout.data() + (b * total + offsets[k]) * area;
                    T* dst = gx.data() + b * block;
                    for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
        });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    return concat_channels(std::vector<Tensor<T>>{a, b});
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t end) {
    const char* op = "slice_channels";
    if (input.ndim() != 4) detail::dimension_error(op, "input must be [B,C,H,W]");
    if (begin > end || end > input.dim(1)) {
        detail::dimension_error(op, "channel range [" + std::to_string(begin) + "," + std::to_string(end) +
                                        ") out of bounds for " + std::to_string(input.dim(1)) + " channels");
    }
    const std::size_t batch = input.dim(0), channels = input.dim(1);
    const std::size_t area = input.dim(2) * input.dim(3);
    const std::size_t width = end - begin;
    std::vector<T> out(batch * width * area);
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(input.data().data() + (b * channels + begin) * area, width * area,
                    out.data() + b * width * area);
    }
    auto x_impl = input.impl();
    return detail::make_result<T>(op, Shape{batch, width, input.dim(2), input.dim(3)}, std::move(out),
                                  {input}, [=](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      for (std::size_t b = 0; b < batch; ++b) {
                                          T* dst = gx.data() + (b * channels + begin) * area;
                                          const T* src = gout.data() + b * width * area;
                                          for (std::size_t i = 0; i < width * area; ++i) dst[i] += src[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        detail::dimension_error("add", "shapes differ: " + shape_string(a.shape()) + " vs " +
                                           shape_string(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto a_impl = a.impl(), b_impl = b.impl();
    return detail::make_result<T>("add", a.shape(), std::move(out), {a, b},
                                  [a_impl, b_impl](std::span<const T> gout) {
                                      for (auto* impl : {a_impl.get(), b_impl.get()}) {
                                          auto g = detail::grad_sink(*impl);
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        detail::dimension_error("mul", "shapes differ: " + shape_string(a.shape()) + " vs " +
                                           shape_string(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto a_impl = a.impl(), b_impl = b.impl();
    return detail::make_result<T>("mul", a.shape(), std::move(out), {a, b},
                                  [a_impl, b_impl](std::span<const T> gout) {
                                      auto ga = detail::grad_sink(*a_impl);
                                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * b_impl->data[i];
                                      auto gb = detail::grad_sink(*b_impl);
                                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * a_impl->data[i];
                                  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor) {
    std::vector<T> out(input.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = input.data()[i] * factor;
    auto x_impl = input.impl();
    return detail::make_result<T>("scale", input.shape(), std::move(out), {input},
                                  [x_impl, factor](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * factor;
                                  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
    T acc = T(0);
    for (T v : input.data()) acc += v;
    auto x_impl = input.impl();
    return detail::make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {input},
                                  [x_impl](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      for (T& g : gx) g += gout[0];
                                  });
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& input, const Tensor<T>& gate) {
    const char* op = "scale_channels";
    if (input.ndim() != 4) detail::dimension_error(op, "input must be [B,C,H,W]");
    if (gate.shape() != Shape{input.dim(0), input.dim(1)}) {
        detail::dimension_error(op, "gate shape " + shape_string(gate.shape()) + " must be [B,C] = [" +
                                        std::to_string(input.dim(0)) + "x" + std::to_string(input.dim(1)) + "]");
    }
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t area = input.dim(2) * input.dim(3);
    std::vector<T> out(input.numel());
    for (std::size_t p = 0; p < planes; ++p) {
        const T s = gate.data()[p];
        for (std::size_t i = 0; i < area; ++i) out[p * area + i] = input.data()[p * area + i] * s;
    }
    auto x_impl = input.impl(), g_impl = gate.impl();
    return detail::make_result<T>(op, input.shape(), std::move(out), {input, gate},
                                  [=](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      auto gg = detail::grad_sink(*g_impl);
                                      for (std::size_t p = 0; p < planes; ++p) {
                                          const T s = g_impl->data[p];
                                          T acc = T(0);
                                          for (std::size_t i = 0; i < area; ++i) {
                                              const std::size_t k = p * area + i;
                                              if (!gx.empty()) gx[k] += gout[k] * s;
                                              acc += gout[k] * x_impl->data[k];
                                          }
                                          if (!gg.empty()) gg[p] += acc;
                                      }
                                  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
    if (input.ndim() < 1) detail::dimension_error("flatten", "input needs a batch axis");
    const std::size_t batch = input.dim(0);
    const std::size_t rest = batch ? input.numel() / batch : 0;
    std::vector<T> out(input.data().begin(), input.data().end());
    auto x_impl = input.impl();
    return detail::make_result<T>("flatten", Shape{batch, rest}, std::move(out), {input},
                                  [x_impl](std::span<const T> gout) {
                                      auto gx = detail::grad_sink(*x_impl);
                                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
                                  });
}

#define MANETL_INSTANTIATE_ELEMENTWISE(T)                                                   \
    template Tensor<T> relu(const Tensor<T>&);                                             \
    template Tensor<T> dropout(const Tensor<T>&, double, Mode, Rng&);                      \
    template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                     \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);         \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> scale(const Tensor<T>&, T);                                         \
    template Tensor<T> sum(const Tensor<T>&);                                              \
    template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                 \
    template Tensor<T> flatten(const Tensor<T>&);

MANETL_INSTANTIATE_ELEMENTWISE(float)
MANETL_INSTANTIATE_ELEMENTWISE(double)

}  // namespace manetl
