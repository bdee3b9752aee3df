#include "manetl/backbone.hpp"

#include <algorithm>

namespace manetl {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

template <typename T>
void require_channels(const Tensor<T>& x, std::size_t expected, const char* who) {
    if (x.ndim() != 4 || x.dim(1) != expected) {
        throw ConfigError(std::string(who) + ": expected " + std::to_string(expected) +
                          " input channels, got shape " + shape_string(x.shape()));
    }
}

}  // namespace

void InceptionBlockSpec::validate() const {
    require(in_channels > 0, "inception block: in_channels must be positive");
    require(c1 > 0 && c3_reduce > 0 && c3 > 0 && c5_reduce > 0 && c5 > 0 && pool_proj > 0,
            "inception block: every path width must be positive");
}

InceptionBlockSpec InceptionBlockSpec::from_paths(std::size_t in, std::size_t c1, std::size_t c3,
                                                  std::size_t c5, std::size_t pool_proj) {
    InceptionBlockSpec s;
    s.in_channels = in;
    s.c1 = c1;
    s.c3 = c3;
    s.c5 = c5;
    s.pool_proj = pool_proj;
    s.c3_reduce = std::max<std::size_t>(1, 2 * c3 / 3);
    s.c5_reduce = std::max<std::size_t>(1, c5 / 2);
    return s;
}

InceptionBlockSpec InceptionBlockSpec::for_output(std::size_t in, std::size_t out) {
    const std::size_t c1 = std::max<std::size_t>(1, out / 4);
    const std::size_t c3 = std::max<std::size_t>(1, 3 * out / 8);
    const std::size_t c5 = std::max<std::size_t>(1, out / 8);
    require(out > c1 + c3 + c5, "inception block: output width " + std::to_string(out) +
                                    " leaves no room for the pooling path");
    return from_paths(in, c1, c3, c5, out - c1 - c3 - c5);
}

template <typename T>
InceptionBlock<T>::InceptionBlock(const InceptionBlockSpec& s, Rng& rng) : spec(s) {
    spec.validate();
    const std::size_t in = spec.in_channels;
    path1 = Conv2d<T>(ConvSpec::square(in, spec.c1, 1), true, rng);
    path3_reduce = Conv2d<T>(ConvSpec::square(in, spec.c3_reduce, 1), true, rng);
    path3 = Conv2d<T>(ConvSpec::square(spec.c3_reduce, spec.c3, 3, 1, 1), true, rng);
    path5_reduce = Conv2d<T>(ConvSpec::square(in, spec.c5_reduce, 1), true, rng);
    path5 = Conv2d<T>(ConvSpec::square(spec.c5_reduce, spec.c5, 5, 1, 2), true, rng);
    pool_proj = Conv2d<T>(ConvSpec::square(in, spec.pool_proj, 1), true, rng);
}

template <typename T>
Tensor<T> InceptionBlock<T>::forward(const Tensor<T>& x) const {
    require_channels(x, spec.in_channels, "inception block");
    Tensor<T> a = relu(path1.forward(x));
    Tensor<T> b = relu(path3.forward(relu(path3_reduce.forward(x))));
    Tensor<T> c = relu(path5.forward(relu(path5_reduce.forward(x))));
    Tensor<T> d = relu(pool_proj.forward(max_pool2d(x, 3, 1, 1)));
    return concat_channels<T>({a, b, c, d});
}

template <typename T>
void InceptionBlock<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    path1.visit_params(join_name(prefix, "path1"), fn);
    path3_reduce.visit_params(join_name(prefix, "path3_reduce"), fn);
    path3.visit_params(join_name(prefix, "path3"), fn);
    path5_reduce.visit_params(join_name(prefix, "path5_reduce"), fn);
    path5.visit_params(join_name(prefix, "path5"), fn);
    pool_proj.visit_params(join_name(prefix, "pool_proj"), fn);
}

template <typename T>
std::size_t InceptionBlock<T>::param_count() const {
    return path1.param_count() + path3_reduce.param_count() + path3.param_count() +
           path5_reduce.param_count() + path5.param_count() + pool_proj.param_count();
}

template <typename T>
ResidualBlock<T>::ResidualBlock(const ResidualBlockSpec& s, Rng& rng) : spec(s) {
    require(spec.in_channels > 0 && spec.out_channels > 0 && spec.stride > 0,
            "residual block: channels and stride must be positive");
    conv1 = Conv2d<T>(ConvSpec::square(spec.in_channels, spec.out_channels, 3, spec.stride, 1), false, rng);
    bn1 = BatchNorm<T>(spec.out_channels);
    conv2 = Conv2d<T>(ConvSpec::square(spec.out_channels, spec.out_channels, 3, 1, 1), false, rng);
    bn2 = BatchNorm<T>(spec.out_channels);
    if (spec.projection()) {
        shortcut_conv = Conv2d<T>(ConvSpec::square(spec.in_channels, spec.out_channels, 1, spec.stride), false, rng);
        shortcut_bn = BatchNorm<T>(spec.out_channels);
    }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward_preactivation(const Tensor<T>& x, Mode mode, bool with_shortcut) {
    require_channels(x, spec.in_channels, "residual block");
    Tensor<T> main = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x), mode))), mode);
    if (!with_shortcut) return main;
    Tensor<T> shortcut = spec.projection() ? shortcut_bn.forward(shortcut_conv.forward(x), mode) : x;
    return add(main, shortcut);
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode) {
    return relu(forward_preactivation(x, mode, true));
}

template <typename T>
void ResidualBlock<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    conv1.visit_params(join_name(prefix, "conv1"), fn);
    bn1.visit_params(join_name(prefix, "bn1"), fn);
    conv2.visit_params(join_name(prefix, "conv2"), fn);
    bn2.visit_params(join_name(prefix, "bn2"), fn);
    if (spec.projection()) {
        shortcut_conv.visit_params(join_name(prefix, "shortcut_conv"), fn);
        shortcut_bn.visit_params(join_name(prefix, "shortcut_bn"), fn);
    }
}

template <typename T>
void ResidualBlock<T>::visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn) {
    bn1.visit_buffers(join_name(prefix, "bn1"), fn);
    bn2.visit_buffers(join_name(prefix, "bn2"), fn);
    if (spec.projection()) shortcut_bn.visit_buffers(join_name(prefix, "shortcut_bn"), fn);
}

template <typename T>
std::size_t ResidualBlock<T>::param_count() const {
    std::size_t n = conv1.param_count() + bn1.param_count() + conv2.param_count() + bn2.param_count();
    if (spec.projection()) n += shortcut_conv.param_count() + shortcut_bn.param_count();
    return n;
}

std::size_t AuxClassifierSpec::pool_kernel() const { return std::min(tap_h, tap_w) >= 5 ? 5 : 3; }
std::size_t AuxClassifierSpec::pool_stride() const { return std::min(tap_h, tap_w) >= 5 ? 3 : 1; }
std::size_t AuxClassifierSpec::pooled_h() const { return (tap_h - pool_kernel()) / pool_stride() + 1; }
std::size_t AuxClassifierSpec::pooled_w() const { return (tap_w - pool_kernel()) / pool_stride() + 1; }

void AuxClassifierSpec::validate() const {
    require(tap_h >= 3 && tap_w >= 3, "auxiliary classifier: tap map " + std::to_string(tap_h) + "x" +
                                          std::to_string(tap_w) + " is smaller than the 3x3 pooling window");
    require(in_channels > 0 && conv_channels > 0 && hidden > 0 && num_classes > 0,
            "auxiliary classifier: widths must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "auxiliary classifier: dropout must lie in [0, 1)");
}

template <typename T>
AuxClassifier<T>::AuxClassifier(const AuxClassifierSpec& s, Rng& rng) : spec(s) {
    spec.validate();
    reduce = Conv2d<T>(ConvSpec::square(spec.in_channels, spec.conv_channels, 1), true, rng);
    fc1 = Dense<T>(spec.conv_channels * spec.pooled_h() * spec.pooled_w(), spec.hidden, rng);
    fc2 = Dense<T>(spec.hidden, spec.num_classes, rng);
}

template <typename T>
Tensor<T> AuxClassifier<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) const {
    require_channels(x, spec.in_channels, "auxiliary classifier");
    if (x.dim(2) != spec.tap_h || x.dim(3) != spec.tap_w) {
        throw ConfigError("auxiliary classifier: configured for a " + std::to_string(spec.tap_h) + "x" +
                          std::to_string(spec.tap_w) + " tap, got " + shape_string(x.shape()));
    }
    Tensor<T> h = avg_pool2d(x, spec.pool_kernel(), spec.pool_stride());
    h = flatten(relu(reduce.forward(h)));
    h = dropout(relu(fc1.forward(h)), spec.dropout, mode, rng);
    return fc2.forward(h);
}

template <typename T>
void AuxClassifier<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    reduce.visit_params(join_name(prefix, "reduce"), fn);
    fc1.visit_params(join_name(prefix, "fc1"), fn);
    fc2.visit_params(join_name(prefix, "fc2"), fn);
}

template <typename T>
std::size_t AuxClassifier<T>::param_count() const {
    return reduce.param_count() + fc1.param_count() + fc2.param_count();
}

InceptionBlockSpec inception_block_spec(const ModelConfig& config, int index) {
    const std::size_t c = config.branch_channels;
    switch (index) {
        case 1: return InceptionBlockSpec::for_output(config.stem_channels, c / 2);
        case 2: return InceptionBlockSpec::for_output(c / 2, 3 * c / 4);
        case 3: return InceptionBlockSpec::for_output(3 * c / 4, c);
        default: throw ConfigError("inception block index must be 1..3");
    }
}

ResidualBlockSpec residual_stage_spec(const ModelConfig& config, int index) {
    const std::size_t c = config.branch_channels;
    switch (index) {
        case 1: return {config.stem_channels, c / 4, 2};
        case 2: return {c / 4, c / 2, 2};
        case 3: return {c / 2, c, 1};
        default: throw ConfigError("residual stage index must be 1..3");
    }
}

AuxClassifierSpec aux_classifier_spec(const ModelConfig& config) {
    AuxClassifierSpec s;
    s.in_channels = inception_block_spec(config, 2).out_channels();
    s.tap_h = s.tap_w = config.feature_size();
    s.conv_channels = config.aux_conv_channels;
    s.hidden = config.aux_hidden;
    s.dropout = config.aux_dropout;
    s.num_classes = config.num_classes;
    return s;
}

template <typename T>
InceptionBranch<T>::InceptionBranch(const ModelConfig& config, Rng& rng) {
    config.validate();
    stem = Conv2d<T>(ConvSpec::square(1, config.stem_channels, 3, 1, 1), true, rng);
    block1 = InceptionBlock<T>(inception_block_spec(config, 1), rng);
    block2 = InceptionBlock<T>(inception_block_spec(config, 2), rng);
    block3 = InceptionBlock<T>(inception_block_spec(config, 3), rng);
    aux = AuxClassifier<T>(aux_classifier_spec(config), rng);
}

template <typename T>
BranchOutput<T> InceptionBranch<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) const {
    BranchOutput<T> out;
    Tensor<T> h = max_pool2d(relu(stem.forward(x)), 2, 2);
    h = block1.forward(h);
    h = block2.forward(max_pool2d(h, 2, 2));
    if (mode == Mode::Train) out.aux_logits.push_back(aux.forward(h, mode, rng));
    out.features = block3.forward(h);
    return out;
}

template <typename T>
void InceptionBranch<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    stem.visit_params(join_name(prefix, "stem"), fn);
    block1.visit_params(join_name(prefix, "block1"), fn);
    block2.visit_params(join_name(prefix, "block2"), fn);
    block3.visit_params(join_name(prefix, "block3"), fn);
    aux.visit_params(join_name(prefix, "aux"), fn);
}

template <typename T>
std::size_t InceptionBranch<T>::param_count() const {
    return stem.param_count() + block1.param_count() + block2.param_count() + block3.param_count() +
           aux.param_count();
}

template <typename T>
ResidualBranch<T>::ResidualBranch(const ModelConfig& config, Rng& rng) {
    config.validate();
    stem = Conv2d<T>(ConvSpec::square(1, config.stem_channels, 3, 1, 1), false, rng);
    stem_bn = BatchNorm<T>(config.stem_channels);
    stage1 = ResidualBlock<T>(residual_stage_spec(config, 1), rng);
    stage2 = ResidualBlock<T>(residual_stage_spec(config, 2), rng);
    stage3 = ResidualBlock<T>(residual_stage_spec(config, 3), rng);
}

template <typename T>
BranchOutput<T> ResidualBranch<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = relu(stem_bn.forward(stem.forward(x), mode));
    h = stage1.forward(h, mode);
    h = stage2.forward(h, mode);
    return {stage3.forward(h, mode), {}};
}

template <typename T>
void ResidualBranch<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    stem.visit_params(join_name(prefix, "stem"), fn);
    stem_bn.visit_params(join_name(prefix, "stem_bn"), fn);
    stage1.visit_params(join_name(prefix, "stage1"), fn);
    stage2.visit_params(join_name(prefix, "stage2"), fn);
    stage3.visit_params(join_name(prefix, "stage3"), fn);
}

template <typename T>
void ResidualBranch<T>::visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn) {
    stem_bn.visit_buffers(join_name(prefix, "stem_bn"), fn);
    stage1.visit_buffers(join_name(prefix, "stage1"), fn);
    stage2.visit_buffers(join_name(prefix, "stage2"), fn);
    stage3.visit_buffers(join_name(prefix, "stage3"), fn);
}

template <typename T>
std::size_t ResidualBranch<T>::param_count() const {
    return stem.param_count() + stem_bn.param_count() + stage1.param_count() + stage2.param_count() +
           stage3.param_count();
}

std::uint64_t count_macs(const ConvSpec& spec, std::size_t input_h, std::size_t input_w) {
    const std::uint64_t oh = spec.out_h(input_h);
    const std::uint64_t ow = spec.out_w(input_w);
    return oh * ow * spec.out_channels * spec.kernel_h * spec.kernel_w * spec.in_channels;
}

template struct InceptionBlock<float>;
template struct InceptionBlock<double>;
template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template struct AuxClassifier<float>;
template struct AuxClassifier<double>;
template struct InceptionBranch<float>;
template struct InceptionBranch<double>;
template struct ResidualBranch<float>;
template struct ResidualBranch<double>;

}  // namespace manetl
