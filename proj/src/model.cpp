#include "manetl/model.hpp"

#include <algorithm>

namespace manetl {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Inception: return "inception";
        case Variant::Residual: return "residual";
        case Variant::Ensemble: return "ensemble";
    }
    return "unknown";
}

Variant parse_variant(const std::string& text) {
    if (text == "inception") return Variant::Inception;
    if (text == "residual") return Variant::Residual;
    if (text == "ensemble") return Variant::Ensemble;
    throw ConfigError("unknown variant '" + text + "' (expected inception, residual or ensemble)");
}

std::size_t ModelConfig::fused_channels() const {
    return variant == Variant::Ensemble ? 2 * branch_channels : branch_channels;
}

std::size_t ModelConfig::feature_size() const { return input_size / 4; }

void ModelConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError(field + ": " + why);
    };
    if (input_size % 4 != 0 || input_size / 4 < 3) fail("input_size", "must be a multiple of 4 and at least 12");
    if (num_classes < 1) fail("num_classes", "must be at least 1");
    if (stem_channels < 1) fail("stem_channels", "must be positive");
    if (branch_channels < 8 || branch_channels % 8 != 0) fail("branch_channels", "must be a positive multiple of 8");
    if (aux_conv_channels < 1) fail("aux_conv_channels", "must be positive");
    if (aux_hidden < 1) fail("aux_hidden", "must be positive");
    if (!(aux_dropout >= 0.0 && aux_dropout < 1.0)) fail("aux_dropout", "must lie in [0, 1)");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) fail("head_dropout", "must lie in [0, 1)");
    if (attention_reduction < 1 || fused_channels() % attention_reduction != 0) {
        fail("attention_reduction", "fused channel count " + std::to_string(fused_channels()) +
                                        " is not divisible by " + std::to_string(attention_reduction));
    }
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.input_size = 16;
    c.num_classes = 4;
    c.stem_channels = 4;
    c.branch_channels = 8;
    c.aux_conv_channels = 4;
    c.aux_hidden = 8;
    return c;
}

template <typename T>
Tensor<T> ensemble_fuse(const BranchOutput<T>& a, const BranchOutput<T>& b) {
    const Tensor<T>& x = a.features;
    const Tensor<T>& y = b.features;
    if (x.ndim() != 4 || y.ndim() != 4 || x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3)) {
        throw DimensionError("ensemble fusion: branch shapes " + shape_string(x.shape()) + " and " +
                             shape_string(y.shape()) + " disagree outside the channel axis");
    }
    return concat_channels(x, y);
}

template <typename T>
ChannelAttention<T>::ChannelAttention(std::size_t n, std::size_t reduction, Rng& rng) : channels(n) {
    if (reduction == 0 || n % reduction != 0 || n / reduction == 0) {
        throw ConfigError("channel attention: " + std::to_string(n) + " channels not divisible by " +
                          std::to_string(reduction));
    }
    squeeze = Dense<T>(n, n / reduction, rng);
    norm = BatchNorm<T>(n / reduction);
    excite = Dense<T>(n / reduction, n, rng);
    std::fill(excite.bias.mutable_data().begin(), excite.bias.mutable_data().end(), T(1));
}

template <typename T>
AttentionResult<T> ChannelAttention<T>::forward_with_gates(const Tensor<T>& x, Mode mode) {
    if (x.ndim() != 4 || x.dim(1) != channels) {
        throw ConfigError("channel attention: expected " + std::to_string(channels) + " channels, got " +
                          shape_string(x.shape()));
    }
    Tensor<T> s = global_avg_pool(x);
    Tensor<T> z = relu(norm.forward(squeeze.forward(s), mode));
    Tensor<T> gates = relu(excite.forward(z));
    return {scale_channels(x, gates), gates};
}

template <typename T>
void ChannelAttention<T>::set_neutral() {
    std::fill(excite.weight.mutable_data().begin(), excite.weight.mutable_data().end(), T(0));
    std::fill(excite.bias.mutable_data().begin(), excite.bias.mutable_data().end(), T(1));
}

template <typename T>
void ChannelAttention<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    squeeze.visit_params(join_name(prefix, "squeeze"), fn);
    norm.visit_params(join_name(prefix, "norm"), fn);
    excite.visit_params(join_name(prefix, "excite"), fn);
}

template <typename T>
void ChannelAttention<T>::visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn) {
    norm.visit_buffers(join_name(prefix, "norm"), fn);
}

template <typename T>
std::size_t ChannelAttention<T>::param_count() const {
    return squeeze.param_count() + norm.param_count() + excite.param_count();
}

template <typename T>
ClassificationHead<T>::ClassificationHead(std::size_t channels, std::size_t num_classes, double rate, Rng& rng)
    : dropout_rate(rate), fc(channels, num_classes, rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("head_dropout: must lie in [0, 1)");
}

template <typename T>
Tensor<T> ClassificationHead<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) const {
    return fc.forward(dropout(global_avg_pool(x), dropout_rate, mode, rng));
}

template <typename T>
void ClassificationHead<T>::visit_params(const std::string& prefix, const TensorVisitor<T>& fn) {
    fc.visit_params(join_name(prefix, "fc"), fn);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    if (config_.variant != Variant::Residual) inception.emplace(config_, rng);
    if (config_.variant != Variant::Inception) residual.emplace(config_, rng);
    attention = ChannelAttention<T>(config_.fused_channels(), config_.attention_reduction, rng);
    head = ClassificationHead<T>(config_.fused_channels(), config_.num_classes, config_.head_dropout, rng);
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& input, Mode mode, Rng& rng) {
    const std::size_t s = config_.input_size;
    if (input.ndim() != 4 || input.dim(1) != 1 || input.dim(2) != s || input.dim(3) != s) {
        throw DimensionError("model input must be [B,1," + std::to_string(s) + "," + std::to_string(s) +
                             "], got " + shape_string(input.shape()));
    }
    ModelOutput<T> out;
    Tensor<T> features;
    if (inception && residual) {
        BranchOutput<T> a = inception->forward(input, mode, rng);
        BranchOutput<T> b = residual->forward(input, mode);
        features = ensemble_fuse(a, b);
        out.aux_logits = std::move(a.aux_logits);
    } else if (inception) {
        BranchOutput<T> a = inception->forward(input, mode, rng);
        features = a.features;
        out.aux_logits = std::move(a.aux_logits);
    } else {
        features = residual->forward(input, mode).features;
    }
    out.logits = head.forward(attention.forward(features, mode), mode, rng);
    return out;
}

template <typename T>
void Model<T>::visit_params(const TensorVisitor<T>& fn) {
    if (inception) inception->visit_params("inception", fn);
    if (residual) residual->visit_params("residual", fn);
    attention.visit_params("attention", fn);
    head.visit_params("head", fn);
}

template <typename T>
void Model<T>::visit_buffers(const TensorVisitor<T>& fn) {
    if (residual) residual->visit_buffers("residual", fn);
    attention.visit_buffers("attention", fn);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_params() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    visit_params([&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
    return out;
}

template <typename T>
std::size_t Model<T>::param_count() const {
    std::size_t n = attention.param_count() + head.param_count();
    if (inception) n += inception->param_count();
    if (residual) n += residual->param_count();
    return n;
}

template <typename T>
Tensor<T> total_loss(const ModelOutput<T>& out, std::span<const int> labels, double aux_weight) {
    Tensor<T> loss = cross_entropy(out.logits, labels);
    for (const Tensor<T>& aux : out.aux_logits) {
        loss = add(loss, scale(cross_entropy(aux, labels), static_cast<T>(aux_weight)));
    }
    return loss;
}

template <typename T>
std::size_t count_params(Model<T>& model) {
    std::size_t n = 0;
    model.visit_params([&](const std::string&, Tensor<T>& t) { n += t.numel(); });
    return n;
}

std::vector<ShapeStep> infer_shapes(const ModelConfig& config, std::size_t batch) {
    config.validate();
    std::vector<ShapeStep> steps;
    const std::size_t s = config.input_size;
    steps.push_back({"input", {batch, 1, s, s}});
    auto conv_out = [](const ConvSpec& spec, std::size_t in) { return spec.out_h(in); };
    std::size_t fused = 0;
    std::size_t feature = 0;
    if (config.variant != Variant::Residual) {
        std::size_t h = conv_out(ConvSpec::square(1, config.stem_channels, 3, 1, 1), s);
        steps.push_back({"inception.stem", {batch, config.stem_channels, h, h}});
        h = window_extent(h, 2, 2, 0, "H");
        const InceptionBlockSpec b1 = inception_block_spec(config, 1);
        steps.push_back({"inception.block1", {batch, b1.out_channels(), h, h}});
        h = window_extent(h, 2, 2, 0, "H");
        const InceptionBlockSpec b2 = inception_block_spec(config, 2);
        steps.push_back({"inception.block2", {batch, b2.out_channels(), h, h}});
        const AuxClassifierSpec aux = aux_classifier_spec(config);
        const std::size_t ph = window_extent(h, aux.pool_kernel(), aux.pool_stride(), 0, "H");
        steps.push_back({"inception.aux.pool", {batch, b2.out_channels(), ph, ph}});
        steps.push_back({"inception.aux.logits", {batch, config.num_classes}});
        const InceptionBlockSpec b3 = inception_block_spec(config, 3);
        steps.push_back({"inception.output", {batch, b3.out_channels(), h, h}});
        fused += b3.out_channels();
        feature = h;
    }
    if (config.variant != Variant::Inception) {
        std::size_t h = conv_out(ConvSpec::square(1, config.stem_channels, 3, 1, 1), s);
        steps.push_back({"residual.stem", {batch, config.stem_channels, h, h}});
        std::size_t c = 0;
        for (int i = 1; i <= 3; ++i) {
            const ResidualBlockSpec r = residual_stage_spec(config, i);
            h = conv_out(ConvSpec::square(r.in_channels, r.out_channels, 3, r.stride, 1), h);
            c = r.out_channels;
            const std::string name = i == 3 ? "residual.output" : "residual.stage" + std::to_string(i);
            steps.push_back({name, {batch, c, h, h}});
        }
        if (feature != 0 && feature != h) {
            throw ConfigError("branch outputs disagree spatially: " + std::to_string(feature) + " vs " +
                              std::to_string(h));
        }
        fused += c;
        feature = h;
    }
    steps.push_back({"fused", {batch, fused, feature, feature}});
    steps.push_back({"attention.gates", {batch, fused}});
    steps.push_back({"attention.output", {batch, fused, feature, feature}});
    steps.push_back({"logits", {batch, config.num_classes}});
    return steps;
}

Shape inferred_shape(const std::vector<ShapeStep>& steps, const std::string& name) {
    for (const auto& s : steps) {
        if (s.name == name) return s.shape;
    }
    throw UsageError("no inferred shape named '" + name + "'");
}

template Tensor<float> ensemble_fuse(const BranchOutput<float>&, const BranchOutput<float>&);
template Tensor<double> ensemble_fuse(const BranchOutput<double>&, const BranchOutput<double>&);
template struct ChannelAttention<float>;
template struct ChannelAttention<double>;
template struct ClassificationHead<float>;
template struct ClassificationHead<double>;
template class Model<float>;
template class Model<double>;
template Tensor<float> total_loss(const ModelOutput<float>&, std::span<const int>, double);
template Tensor<double> total_loss(const ModelOutput<double>&, std::span<const int>, double);
template std::size_t count_params(Model<float>&);
template std::size_t count_params(Model<double>&);

}  // namespace manetl
