#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "manetl/backbone.hpp"
#include "manetl/model.hpp"
#include "oracles.hpp"

using namespace manetl;

namespace {

std::vector<double> relu_v(std::vector<double> v) {
    for (double& x : v) x = std::max(0.0, x);
    return v;
}

std::vector<double> conv_v(const std::vector<double>& in, std::size_t C, std::size_t H, std::size_t W,
                           const Conv2d<double>& layer) {
    std::size_t ho = 0, wo = 0;
    return oracle::conv2d(in, 1, C, H, W, oracle::to_double(layer.weight), layer.spec.out_channels,
                          layer.spec.kernel_h, layer.spec.kernel_w,
                          layer.bias.defined() ? oracle::to_double(layer.bias) : std::vector<double>(),
                          layer.spec.stride, layer.spec.padding, ho, wo);
}

// 3x3 stride-1 max over the in-bounds neighbours.
std::vector<double> maxpool3_v(const std::vector<double>& in, std::size_t C, std::size_t H, std::size_t W) {
    std::vector<double> out(in.size());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double m = -std::numeric_limits<double>::infinity();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                        m = std::max(m, in[(c * H + yy) * W + xx]);
                    }
                out[(c * H + y) * W + x] = m;
            }
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
void randomize(Tensor<T>& t, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (T& v : t.mutable_data()) v = static_cast<T>(u(rng));
}

}  // namespace

TEST_CASE("inception block: spec (4,4,4,4) on 16 channels keeps 16 channels and H x W") {
    Rng rng(1);
    auto spec = InceptionBlockSpec::from_paths(16, 4, 4, 4, 4);
    CHECK(spec.out_channels() == 16);
    InceptionBlock<float> block(spec, rng);
    auto y = block.forward(oracle::random_tensor<float>({2, 16, 7, 5}, 2));
    CHECK(y.shape() == Shape{2, 16, 7, 5});
}

TEST_CASE("inception block: zero input and zero biases give zero output") {
    Rng rng(3);
    InceptionBlock<float> block(InceptionBlockSpec::from_paths(8, 2, 3, 1, 2), rng);
    auto y = block.forward(Tensor<float>::zeros({1, 8, 6, 6}));
    for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("inception block: matches four independently computed paths") {
    Rng rng(4);
    InceptionBlock<double> block(InceptionBlockSpec::from_paths(6, 3, 4, 2, 3), rng);
    block.visit_params("", [](const std::string& name, Tensor<double>& t) {
        if (name.ends_with("bias")) randomize(t, std::hash<std::string>{}(name), -0.5, 0.5);
    });
    const std::size_t C = 6, H = 5, W = 6;
    auto x = oracle::random_tensor<double>({1, C, H, W}, 5);
    const auto xin = oracle::to_double(x);
    auto p1 = relu_v(conv_v(xin, C, H, W, block.path1));
    auto p3 = relu_v(conv_v(relu_v(conv_v(xin, C, H, W, block.path3_reduce)), block.spec.c3_reduce, H, W, block.path3));
    auto p5 = relu_v(conv_v(relu_v(conv_v(xin, C, H, W, block.path5_reduce)), block.spec.c5_reduce, H, W, block.path5));
    auto pp = relu_v(conv_v(maxpool3_v(xin, C, H, W), C, H, W, block.pool_proj));
    std::vector<double> expected;
    for (const auto* part : {&p1, &p3, &p5, &pp}) expected.insert(expected.end(), part->begin(), part->end());
    auto y = block.forward(x);
    CHECK(y.shape() == Shape{1, block.spec.out_channels(), H, W});
    CHECK(max_abs_diff(oracle::to_double(y), expected) < 1e-6);
}

TEST_CASE("inception block: wrong input width is a configuration error") {
    Rng rng(6);
    InceptionBlock<float> block(InceptionBlockSpec::from_paths(8, 2, 2, 2, 2), rng);
    CHECK_THROWS_AS(block.forward(Tensor<float>::zeros({1, 7, 4, 4})), ConfigError);
    CHECK_THROWS_AS(InceptionBlockSpec::from_paths(8, 0, 2, 2, 2).validate(), ConfigError);
}

TEST_CASE("residual block: zero main path with neutral statistics is ReLU of the input") {
    Rng rng(7);
    ResidualBlock<float> block({8, 8, 1}, rng);
    CHECK_FALSE(block.spec.projection());
    for (float& w : block.conv1.weight.mutable_data()) w = 0.0f;
    for (float& w : block.conv2.weight.mutable_data()) w = 0.0f;
    auto x = oracle::random_tensor<float>({2, 8, 5, 5}, 8);
    auto y = block.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == std::max(0.0f, x.data()[i]));
}

TEST_CASE("residual block: gradient difference with and without shortcut equals the shortcut's gradient") {
    for (ResidualBlockSpec spec : {ResidualBlockSpec{4, 4, 1}, ResidualBlockSpec{3, 5, 2}}) {
        Rng rng(9);
        ResidualBlock<double> block(spec, rng);
        auto x = oracle::random_tensor<double>({2, spec.in_channels, 6, 6}, 10, -1, 1, true);
        auto weights = oracle::random_tensor<double>(
            {2, spec.out_channels, 6 / spec.stride, 6 / spec.stride}, 11);

        backward(sum(mul(block.forward_preactivation(x, Mode::Eval, true), weights)));
        const std::vector<double> with(x.grad().begin(), x.grad().end());
        x.zero_grad();
        backward(sum(mul(block.forward_preactivation(x, Mode::Eval, false), weights)));
        const std::vector<double> without(x.grad().begin(), x.grad().end());
        x.zero_grad();
        Tensor<double> shortcut = spec.projection()
                                      ? block.shortcut_bn.forward(block.shortcut_conv.forward(x), Mode::Eval)
                                      : x;
        backward(sum(mul(shortcut, weights)));
        const std::vector<double> path(x.grad().begin(), x.grad().end());

        double differs = 0.0;
        for (std::size_t i = 0; i < with.size(); ++i) {
            differs = std::max(differs, std::abs(with[i] - without[i]));
            CHECK(with[i] - without[i] == doctest::Approx(path[i]).epsilon(1e-9));
        }
        CHECK(differs > 0.0);
    }
}

TEST_CASE("residual block: stride-2 projection halves H and W and changes channels") {
    Rng rng(12);
    ResidualBlock<float> block({4, 12, 2}, rng);
    CHECK(block.spec.projection());
    auto y = block.forward(oracle::random_tensor<float>({3, 4, 8, 8}, 13), Mode::Train);
    CHECK(y.shape() == Shape{3, 12, 4, 4});
}

TEST_CASE("aux classifier: output is B x K for any valid tap and rejects small taps") {
    for (std::size_t tap : {3, 4, 5, 8, 14}) {
        CAPTURE(tap);
        AuxClassifierSpec spec;
        spec.in_channels = 6;
        spec.tap_h = spec.tap_w = tap;
        spec.conv_channels = 4;
        spec.hidden = 16;
        spec.num_classes = 7;
        CHECK(spec.pool_kernel() == (tap >= 5 ? 5u : 3u));
        Rng rng(14);
        AuxClassifier<float> aux(spec, rng);
        Rng drop(15);
        CHECK(aux.forward(oracle::random_tensor<float>({3, 6, tap, tap}, 16), Mode::Train, drop).shape() ==
              Shape{3, 7});
    }
    AuxClassifierSpec small;
    small.in_channels = 2;
    small.tap_h = small.tap_w = 2;
    small.num_classes = 3;
    CHECK_THROWS_AS(small.validate(), ConfigError);
}

TEST_CASE("aux loss: zero in eval mode, 0.3-weighted in train mode") {
    Model<double> model(ModelConfig::tiny(), 17);
    auto x = oracle::random_tensor<double>({4, 1, 16, 16}, 18, 0, 1);
    const std::vector<int> labels{0, 1, 2, 3};

    Rng rng(19);
    auto eval = model.forward(x, Mode::Eval, rng);
    CHECK(eval.aux_logits.empty());
    CHECK(total_loss(eval, labels, 0.3).item() == cross_entropy(eval.logits, labels).item());

    auto train = model.forward(x, Mode::Train, rng);
    REQUIRE(train.aux_logits.size() == 1);
    const double main = cross_entropy(train.logits, labels).item();
    const double aux = cross_entropy(train.aux_logits[0], labels).item();
    CHECK(total_loss(train, labels, 0.3).item() == doctest::Approx(main + 0.3 * aux).epsilon(1e-14));
}

TEST_CASE("branches: default config emits B x 64 x 8 x 8 from both, as the shape walker predicts") {
    ModelConfig config;
    auto steps = infer_shapes(config, 2);
    CHECK(inferred_shape(steps, "inception.output") == Shape{2, 64, 8, 8});
    CHECK(inferred_shape(steps, "residual.output") == Shape{2, 64, 8, 8});
    CHECK(inferred_shape(steps, "fused") == Shape{2, 128, 8, 8});

    Rng rng(20);
    InceptionBranch<float> inception(config, rng);
    ResidualBranch<float> residual(config, rng);
    auto x = oracle::random_tensor<float>({2, 1, 32, 32}, 21, 0, 1);
    Rng drop(22);
    auto a = inception.forward(x, Mode::Train, drop);
    CHECK(a.features.shape() == inferred_shape(steps, "inception.output"));
    REQUIRE(a.aux_logits.size() == 1);
    CHECK(a.aux_logits[0].shape() == inferred_shape(steps, "inception.aux.logits"));
    CHECK(residual.forward(x, Mode::Train).features.shape() == inferred_shape(steps, "residual.output"));
    CHECK(inception.forward(x, Mode::Eval, drop).aux_logits.empty());
}

TEST_CASE("branches: tiny config shapes agree with the walker") {
    ModelConfig config = ModelConfig::tiny();
    auto steps = infer_shapes(config, 3);
    Model<float> model(config, 23);
    Rng rng(24);
    auto x = oracle::random_tensor<float>({3, 1, 16, 16}, 25, 0, 1);
    auto out = model.forward(x, Mode::Train, rng);
    CHECK(out.logits.shape() == inferred_shape(steps, "logits"));
    CHECK(out.aux_logits.at(0).shape() == inferred_shape(steps, "inception.aux.logits"));
    CHECK(inferred_shape(steps, "fused") == Shape{3, 16, 4, 4});
}

TEST_CASE("branches: batch rows are independent in eval mode") {
    ModelConfig config;
    Rng rng(26);
    InceptionBranch<float> inception(config, rng);
    ResidualBranch<float> residual(config, rng);
    auto one = oracle::random_tensor<float>({1, 1, 32, 32}, 27, 0, 1);
    std::vector<float> rep;
    for (int i = 0; i < 4; ++i) rep.insert(rep.end(), one.data().begin(), one.data().end());
    Tensor<float> four({4, 1, 32, 32}, rep);
    Rng drop(28);
    auto check = [](const Tensor<float>& single, const Tensor<float>& batch) {
        const std::size_t n = single.numel();
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(batch.data()[b * n + i] - single.data()[i]) < 1e-6);
    };
    check(inception.forward(one, Mode::Eval, drop).features, inception.forward(four, Mode::Eval, drop).features);
    check(residual.forward(one, Mode::Eval).features, residual.forward(four, Mode::Eval).features);
}

TEST_CASE("branches: forward is deterministic for fixed params, input, mode and seed") {
    ModelConfig config = ModelConfig::tiny();
    Rng init(29);
    InceptionBranch<float> branch(config, init);
    auto x = oracle::random_tensor<float>({2, 1, 16, 16}, 30, 0, 1);
    Rng r1(31), r2(31);
    auto a = branch.forward(x, Mode::Train, r1);
    auto b = branch.forward(x, Mode::Train, r2);
    CHECK(std::equal(a.features.data().begin(), a.features.data().end(), b.features.data().begin()));
    CHECK(std::equal(a.aux_logits[0].data().begin(), a.aux_logits[0].data().end(), b.aux_logits[0].data().begin()));
}

TEST_CASE("count_macs: reduction arithmetic at full inception scale") {
    const std::uint64_t direct = count_macs(ConvSpec::square(480, 48, 5, 1, 2), 14, 14);
    CHECK(direct == 112'896'000u);
    const std::uint64_t reduced =
        count_macs(ConvSpec::square(480, 16, 1), 14, 14) + count_macs(ConvSpec::square(16, 48, 5, 1, 2), 14, 14);
    CHECK(reduced == 5'268'480u);
    CHECK(static_cast<double>(direct) / static_cast<double>(reduced) > 20.0);
    CHECK(count_macs(ConvSpec::square(1, 1, 1), 1, 1) == 1u);
}

TEST_CASE("count_params: single layers and the full model") {
    Rng rng(32);
    CHECK(Dense<float>(3, 4, rng).param_count() == 16);
    Conv2d<float> conv(ConvSpec::square(2, 3, 3), true, rng);
    CHECK(conv.param_count() == 57);
    CHECK(conv.weight.numel() + conv.bias.numel() == 57);

    for (Variant v : {Variant::Ensemble, Variant::Inception, Variant::Residual}) {
        ModelConfig config;
        config.variant = v;
        Model<float> model(config, 33);
        CHECK(model.param_count() == count_params(model));
        CHECK(count_params(model) > 0);
    }
    // Global average pooling adds nothing: the head is just its dense layer.
    ModelConfig config;
    Model<float> model(config, 34);
    CHECK(model.head.param_count() == 128 * 50 + 50);
}
