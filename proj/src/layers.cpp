#include "manetl/layers.hpp"

#include <cmath>

namespace manetl {

template <typename T>
void fan_in_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (T& v : t.mutable_data()) v = static_cast<T>(u(rng));
}

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& s, bool with_bias, Rng& rng) : spec(s) {
    spec.validate();
    weight = Tensor<T>::zeros({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}, true);
    fan_in_uniform(weight, spec.in_channels * spec.kernel_h * spec.kernel_w, rng);
    if (with_bias) bias = Tensor<T>::zeros({spec.out_channels}, true);
}

template <typename T>
void Conv2d<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    fn(join_name(prefix, "weight"), weight);
    if (bias.defined()) fn(join_name(prefix, "bias"), bias);
}

template <typename T>
std::size_t Conv2d<T>::param_count() const {
    const std::size_t w = spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w;
    return w + (bias.defined() ? spec.out_channels : 0);
}

template <typename T>
Dense<T>::Dense(std::size_t in, std::size_t out, Rng& rng) : in_features(in), out_features(out) {
    weight = Tensor<T>::zeros({out, in}, true);
    fan_in_uniform(weight, in, rng);
    bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
void Dense<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    fn(join_name(prefix, "weight"), weight);
    fn(join_name(prefix, "bias"), bias);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t features)
    : gamma(Tensor<T>::full({features}, T(1), true)),
      beta(Tensor<T>::zeros({features}, true)),
      stats(BatchNormStats<T>::neutral(features)) {}

template <typename T>
void BatchNorm<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    fn(join_name(prefix, "gamma"), gamma);
    fn(join_name(prefix, "beta"), beta);
}

template <typename T>
void BatchNorm<T>::visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn) {
    fn(join_name(prefix, "running_mean"), stats.running_mean);
    fn(join_name(prefix, "running_var"), stats.running_var);
}

template void fan_in_uniform(Tensor<float>&, std::size_t, Rng&);
template void fan_in_uniform(Tensor<double>&, std::size_t, Rng&);
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Dense<float>;
template struct Dense<double>;
template struct BatchNorm<float>;
template struct BatchNorm<double>;

}  // namespace manetl
