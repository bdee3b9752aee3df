#include "manetl/gradcheck_suite.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "manetl/model.hpp"
#include "manetl/ops.hpp"

namespace manetl {

namespace {

using T = double;

struct CaseSetup {
    std::function<Tensor<T>()> loss;
    std::vector<NamedTensor> params;
    std::size_t max_elements = 0;
    bool composed = false;
};

struct Draw {
    std::mt19937_64 rng;
    explicit Draw(std::uint64_t seed) : rng(seed) {}

    Tensor<T> uniform(Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
        std::uniform_real_distribution<double> u(lo, hi);
        std::vector<T> v(shape_numel(shape));
        for (T& x : v) x = u(rng);
        return Tensor<T>(std::move(shape), std::move(v), grad);
    }
    // |x| in [0.1, 1]: keeps ReLU kinks far outside the difference step.
    Tensor<T> away_from_zero(Shape shape) {
        Tensor<T> t = uniform(std::move(shape), 0.1, 1.0);
        std::bernoulli_distribution sign(0.5);
        for (T& x : t.mutable_data()) x = sign(rng) ? x : -x;
        return t;
    }
    // Distinct values on a 0.05 grid: maxima stay unique under the step.
    Tensor<T> distinct(Shape shape) {
        std::vector<T> v(shape_numel(shape));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i) - 0.025 * v.size();
        std::shuffle(v.begin(), v.end(), rng);
        return Tensor<T>(std::move(shape), std::move(v), true);
    }
    std::vector<int> labels(std::size_t n, int k) {
        std::uniform_int_distribution<int> u(0, k - 1);
        std::vector<int> out(n);
        for (int& l : out) l = u(rng);
        return out;
    }
};

// Projects an op output onto fixed random weights so every output element
// carries a distinct, non-trivial upstream gradient.
Tensor<T> project(const Tensor<T>& y, const Tensor<T>& weights) { return sum(mul(y, weights)); }

Tensor<T> weights_like(Draw& d, const Shape& shape) { return d.uniform(shape, -1.0, 1.0, false); }

using CaseFn = CaseSetup (*)(std::uint64_t seed, bool big);

CaseSetup case_conv2d(std::uint64_t seed, bool big) {
    Draw d(seed);
    static const std::size_t kernels[] = {1, 3, 5};
    const std::size_t k = kernels[seed % 3];
    const std::size_t stride = 1 + (seed / 3) % 3;
    const std::size_t pad = (seed / 9) % 3 % (k == 1 ? 1 : 3);
    const std::size_t c = big ? 6 : 3, o = big ? 8 : 4, hw = big ? 11 : 7;
    auto x = d.uniform({2, c, hw, hw});
    auto w = d.uniform({o, c, k, k});
    auto b = d.uniform({o});
    const ConvSpec spec = ConvSpec::square(c, o, k, stride, pad);
    auto r = weights_like(d, {2, o, spec.out_h(hw), spec.out_w(hw)});
    return {[=] { return project(conv2d(x, w, b, spec), r); }, {{"input", x}, {"weight", w}, {"bias", b}}};
}

CaseSetup case_dense(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t n = big ? 32 : 5, m = big ? 16 : 4;
    auto x = d.uniform({3, n});
    auto w = d.uniform({m, n});
    auto b = d.uniform({m});
    auto r = weights_like(d, {3, m});
    return {[=] { return project(dense(x, w, b), r); }, {{"input", x}, {"weight", w}, {"bias", b}}};
}

CaseSetup case_batch_norm_train(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t c = big ? 8 : 3;
    auto x = d.uniform({4, c, 3, 3});
    auto gamma = d.uniform({c}, 0.5, 1.5);
    auto beta = d.uniform({c});
    auto r = weights_like(d, {4, c, 3, 3});
    return {[=] {
                auto stats = BatchNormStats<T>::neutral(c);
                return project(batch_norm(x, gamma, beta, stats, Mode::Train), r);
            },
            {{"input", x}, {"gamma", gamma}, {"beta", beta}}};
}

CaseSetup case_batch_norm_eval(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t n = big ? 16 : 5;
    auto x = d.uniform({3, n});
    auto gamma = d.uniform({n}, 0.5, 1.5);
    auto beta = d.uniform({n});
    BatchNormStats<T> stats{d.uniform({n}, -0.5, 0.5, false), d.uniform({n}, 0.2, 2.0, false)};
    auto r = weights_like(d, {3, n});
    return {[=]() mutable { return project(batch_norm(x, gamma, beta, stats, Mode::Eval), r); },
            {{"input", x}, {"gamma", gamma}, {"beta", beta}}};
}

CaseSetup case_relu(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.away_from_zero({2, big ? 16u : 3u, 4});
    auto r = weights_like(d, x.shape());
    return {[=] { return project(relu(x), r); }, {{"input", x}}};
}

CaseSetup case_avg_pool2d(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t hw = big ? 14 : 6;
    auto x = d.uniform({2, 2, hw, hw});
    const std::size_t k = seed % 2 ? 3 : 2, s = seed % 3 ? 2 : 1;
    auto r = weights_like(d, {2, 2, (hw - k) / s + 1, (hw - k) / s + 1});
    return {[=] { return project(avg_pool2d(x, k, s), r); }, {{"input", x}}};
}

CaseSetup case_max_pool2d(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t hw = big ? 10 : 5;
    auto x = d.distinct({2, 2, hw, hw});
    const std::size_t k = 3, s = seed % 2 ? 2 : 1, p = 1;
    const std::size_t out = (hw + 2 * p - k) / s + 1;
    auto r = weights_like(d, {2, 2, out, out});
    return {[=] { return project(max_pool2d(x, k, s, p), r); }, {{"input", x}}};
}

CaseSetup case_global_avg_pool(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({2, big ? 16u : 3u, 3, 4});
    auto r = weights_like(d, {2, x.dim(1)});
    return {[=] { return project(global_avg_pool(x), r); }, {{"input", x}}};
}

CaseSetup case_softmax(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({3, big ? 50u : 5u}, -2, 2);
    auto r = weights_like(d, x.shape());
    return {[=] { return project(softmax(x), r); }, {{"input", x}}};
}

CaseSetup case_dropout(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({4, big ? 32u : 6u});
    auto r = weights_like(d, x.shape());
    return {[=] {
                Rng mask_rng(seed);
                return project(dropout(x, 0.4, Mode::Train, mask_rng), r);
            },
            {{"input", x}}};
}

CaseSetup case_concat_channels(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t hw = big ? 6 : 3;
    auto a = d.uniform({2, 2, hw, hw});
    auto b = d.uniform({2, 3, hw, hw});
    auto r = weights_like(d, {2, 5, hw, hw});
    return {[=] { return project(concat_channels(a, b), r); }, {{"a", a}, {"b", b}}};
}

CaseSetup case_slice_channels(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({2, 5, big ? 6u : 2u, 2});
    auto r = weights_like(d, {2, 3, x.dim(2), 2});
    return {[=] { return project(slice_channels(x, 1, 4), r); }, {{"input", x}}};
}

CaseSetup case_cross_entropy(std::uint64_t seed, bool big) {
    Draw d(seed);
    const int k = big ? 50 : 5;
    auto logits = d.uniform({4, static_cast<std::size_t>(k)}, -2, 2);
    auto labels = d.labels(4, k);
    return {[=] { return cross_entropy(logits, labels); }, {{"logits", logits}}};
}

CaseSetup case_add(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto a = d.uniform({3, big ? 16u : 4u});
    auto b = d.uniform(a.shape());
    auto r = weights_like(d, a.shape());
    return {[=] { return project(add(a, b), r); }, {{"a", a}, {"b", b}}};
}

CaseSetup case_mul(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto a = d.uniform({3, big ? 16u : 4u});
    auto b = d.uniform(a.shape());
    auto r = weights_like(d, a.shape());
    return {[=] { return project(mul(a, b), r); }, {{"a", a}, {"b", b}}};
}

CaseSetup case_scale(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({3, big ? 16u : 4u});
    auto r = weights_like(d, x.shape());
    return {[=] { return project(scale(x, 0.3), r); }, {{"input", x}}};
}

CaseSetup case_sum(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({2, big ? 16u : 3u, 2});
    return {[=] { return sum(x); }, {{"input", x}}};
}

CaseSetup case_scale_channels(std::uint64_t seed, bool big) {
    Draw d(seed);
    const std::size_t c = big ? 16 : 4;
    auto x = d.uniform({2, c, 3, 3});
    auto gate = d.uniform({2, c}, 0.0, 2.0);
    auto r = weights_like(d, x.shape());
    return {[=] { return project(scale_channels(x, gate), r); }, {{"input", x}, {"gate", gate}}};
}

CaseSetup case_flatten(std::uint64_t seed, bool big) {
    Draw d(seed);
    auto x = d.uniform({2, 3, big ? 4u : 2u, 2});
    auto r = weights_like(d, {2, x.numel() / 2});
    return {[=] { return project(flatten(x), r); }, {{"input", x}}};
}

ModelConfig suite_config(bool big) {
    ModelConfig c = big ? ModelConfig{} : ModelConfig::tiny();
    if (big) c.num_classes = 10;
    return c;
}

// Fresh layers start with zero biases, which parks ReLUs fed by all-zero
// inputs exactly on their kink. Checks run at a generic point instead.
void generic_point(const std::string& name, Tensor<T>& t, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    if (name.ends_with("bias") || name.ends_with("beta")) {
        for (T& v : t.mutable_data()) v = u(rng);
    } else if (name.ends_with("gamma")) {
        for (T& v : t.mutable_data()) v = 1.0 + u(rng);
    }
}

template <typename Module>
std::vector<NamedTensor> params_of(Module& m, std::uint64_t seed) {
    std::vector<NamedTensor> out;
    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    m.visit_params("", [&](const std::string& name, Tensor<T>& t) {
        generic_point(name, t, rng);
        out.emplace_back(name, t);
    });
    return out;
}

std::size_t composed_sample(bool big) { return big ? 4 : 0; }

CaseSetup case_inception_block(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const ModelConfig config = suite_config(big);
    auto block = std::make_shared<InceptionBlock<T>>(inception_block_spec(config, 2), init);
    const std::size_t hw = config.feature_size();
    auto x = d.uniform({2, block->spec.in_channels, hw, hw}, 0, 1);
    auto r = weights_like(d, {2, block->spec.out_channels(), hw, hw});
    auto params = params_of(*block, seed);
    params.emplace_back("input", x);
    return {[=] { return project(block->forward(x), r); }, params, composed_sample(big), true};
}

CaseSetup case_residual_block(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const ModelConfig config = suite_config(big);
    auto block = std::make_shared<ResidualBlock<T>>(residual_stage_spec(config, 2), init);
    const std::size_t hw = 2 * config.feature_size();
    auto x = d.uniform({3, block->spec.in_channels, hw, hw}, 0, 1);
    auto r = weights_like(d, {3, block->spec.out_channels, hw / 2, hw / 2});
    auto params = params_of(*block, seed);
    params.emplace_back("input", x);
    return {[=] { return project(block->forward(x, Mode::Train), r); }, params, composed_sample(big), true};
}

CaseSetup case_aux_classifier(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const ModelConfig config = suite_config(big);
    auto aux = std::make_shared<AuxClassifier<T>>(aux_classifier_spec(config), init);
    const std::size_t hw = config.feature_size();
    auto x = d.uniform({3, aux->spec.in_channels, hw, hw}, 0, 1);
    auto labels = d.labels(3, static_cast<int>(config.num_classes));
    auto params = params_of(*aux, seed);
    params.emplace_back("input", x);
    return {[=] {
                Rng mask_rng(seed);
                return cross_entropy(aux->forward(x, Mode::Train, mask_rng), labels);
            },
            params, composed_sample(big), true};
}

CaseSetup case_inception_branch(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const ModelConfig config = suite_config(big);
    auto branch = std::make_shared<InceptionBranch<T>>(config, init);
    const std::size_t s = config.input_size, f = config.feature_size();
    auto x = d.uniform({2, 1, s, s}, 0, 1, false);
    auto r = weights_like(d, {2, config.branch_channels, f, f});
    auto labels = d.labels(2, static_cast<int>(config.num_classes));
    return {[=] {
                Rng mask_rng(seed);
                auto out = branch->forward(x, Mode::Train, mask_rng);
                return add(project(out.features, r), cross_entropy(out.aux_logits.at(0), labels));
            },
            params_of(*branch, seed), composed_sample(big), true};
}

CaseSetup case_residual_branch(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const ModelConfig config = suite_config(big);
    auto branch = std::make_shared<ResidualBranch<T>>(config, init);
    const std::size_t s = config.input_size, f = config.feature_size();
    auto x = d.uniform({2, 1, s, s}, 0, 1, false);
    auto r = weights_like(d, {2, config.branch_channels, f, f});
    return {[=] { return project(branch->forward(x, Mode::Train).features, r); }, params_of(*branch, seed),
            composed_sample(big), true};
}

CaseSetup case_channel_attention(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const std::size_t n = big ? 128 : 16;
    auto att = std::make_shared<ChannelAttention<T>>(n, 8, init);
    auto x = d.uniform({4, n, 3, 3});
    auto r = weights_like(d, x.shape());
    auto params = params_of(*att, seed);
    params.emplace_back("input", x);
    return {[=] { return project(att->forward(x, Mode::Train), r); }, params, composed_sample(big), true};
}

CaseSetup case_classification_head(std::uint64_t seed, bool big) {
    Draw d(seed);
    Rng init(seed);
    const std::size_t n = big ? 128 : 16, k = big ? 50 : 4;
    auto head = std::make_shared<ClassificationHead<T>>(n, k, 0.5, init);
    auto x = d.uniform({3, n, 2, 2});
    auto labels = d.labels(3, static_cast<int>(k));
    auto params = params_of(*head, seed);
    params.emplace_back("input", x);
    return {[=] {
                Rng mask_rng(seed);
                return cross_entropy(head->forward(x, Mode::Train, mask_rng), labels);
            },
            params, composed_sample(big), true};
}

CaseSetup case_model(std::uint64_t seed, bool big) {
    Draw d(seed);
    const ModelConfig config = suite_config(big);
    auto model = std::make_shared<Model<T>>(config, seed);
    const std::size_t s = config.input_size;
    auto x = d.uniform({4, 1, s, s}, 0, 1, false);
    auto labels = d.labels(4, static_cast<int>(config.num_classes));
    std::vector<NamedTensor> params;
    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    for (auto& [name, t] : model->named_params()) {
        generic_point(name, t, rng);
        params.emplace_back(name, t);
    }
    return {[=] {
                Rng mask_rng(seed);
                return total_loss(model->forward(x, Mode::Train, mask_rng), labels, 0.3);
            },
            params, composed_sample(big), true};
}

struct NamedCase {
    const char* name;
    CaseFn fn;
};

const std::vector<NamedCase>& suite_cases() {
    static const std::vector<NamedCase> cases = {
        {"conv2d", case_conv2d},
        {"dense", case_dense},
        {"batch_norm/train", case_batch_norm_train},
        {"batch_norm/eval", case_batch_norm_eval},
        {"relu", case_relu},
        {"avg_pool2d", case_avg_pool2d},
        {"max_pool2d", case_max_pool2d},
        {"global_avg_pool", case_global_avg_pool},
        {"softmax", case_softmax},
        {"dropout", case_dropout},
        {"concat_channels", case_concat_channels},
        {"slice_channels", case_slice_channels},
        {"cross_entropy", case_cross_entropy},
        {"add", case_add},
        {"mul", case_mul},
        {"scale", case_scale},
        {"sum", case_sum},
        {"scale_channels", case_scale_channels},
        {"flatten", case_flatten},
        {"inception_block", case_inception_block},
        {"residual_block", case_residual_block},
        {"aux_classifier", case_aux_classifier},
        {"inception_branch", case_inception_branch},
        {"residual_branch", case_residual_branch},
        {"channel_attention", case_channel_attention},
        {"classification_head", case_classification_head},
        {"model", case_model},
    };
    return cases;
}

}  // namespace

std::vector<std::string> gradient_suite_case_names() {
    std::vector<std::string> names;
    for (const auto& c : suite_cases()) names.emplace_back(c.name);
    return names;
}

SuiteResult run_gradient_suite(const SuiteOptions& options) {
    SuiteResult result;
    const bool big = options.scale == SuiteScale::Default;
    for (const auto& named : suite_cases()) {
        if (!options.only.empty() &&
            std::find(options.only.begin(), options.only.end(), named.name) == options.only.end()) {
            continue;
        }
        for (std::size_t i = 0; i < options.seeds; ++i) {
            const std::uint64_t seed = options.base_seed + i;
            CaseSetup setup = named.fn(seed, big);
            SuiteCase c;
            c.name = named.name;
            c.seed = seed;
            c.tolerance = setup.composed ? options.model_tolerance : options.primitive_tolerance;
            GradCheckOptions gc;
            gc.step = setup.composed ? options.model_step : options.primitive_step;
            gc.tolerance = c.tolerance;
            gc.max_elements = setup.max_elements;
            gc.sample_seed = seed;
            c.report = finite_diff_check(setup.loss, setup.params, gc);
            if (!c.report.passed) {
                result.passed = false;
                if (std::find(result.failing.begin(), result.failing.end(), c.name) == result.failing.end()) {
                    result.failing.push_back(c.name);
                }
            }
            if (options.on_case) options.on_case(c);
            result.cases.push_back(std::move(c));
        }
    }
    return result;
}

}  // namespace manetl
