#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "doctest.h"
#include "manetl/checkpoint.hpp"
#include "manetl/error.hpp"
#include "manetl/train.hpp"

using namespace manetl;

namespace {

struct Splits {
    SplitData train;
    SplitData eval;
};

Splits tiny_data(std::size_t classes, std::size_t per_class, std::uint64_t seed, std::size_t size = 16) {
    Dataset ds = generate_synthetic_dataset(classes, per_class, seed);
    ds.manifest = split_dataset(ds.manifest, 0.75, seed);
    PreprocessOptions pp;
    pp.size = size;
    return {prepare_split(ds, Split::Train, pp), prepare_split(ds, Split::Test, pp)};
}

ModelConfig tiny_model(std::size_t classes) {
    ModelConfig c = ModelConfig::tiny();
    c.num_classes = classes;
    return c;
}

TrainConfig tiny_train() {
    TrainConfig t;
    t.epochs = 2;
    t.batch_size = 8;
    t.learning_rate = 0.05;
    t.seed = 3;
    return t;
}

std::vector<std::vector<float>> snapshot(Model<float>& m) {
    std::vector<std::vector<float>> out;
    m.visit_params([&](const std::string&, Tensor<float>& t) { out.emplace_back(t.data().begin(), t.data().end()); });
    return out;
}

std::vector<std::vector<float>> snapshot_buffers(Model<float>& m) {
    std::vector<std::vector<float>> out;
    m.visit_buffers([&](const std::string&, Tensor<float>& t) { out.emplace_back(t.data().begin(), t.data().end()); });
    return out;
}

std::string error_text(std::span<const std::uint8_t> bytes) {
    try {
        (void)load_checkpoint(bytes);
    } catch (const FormatError& e) {
        return e.what();
    }
    return "";
}

Tensor<float> leaf(std::vector<float> values) {
    const std::size_t n = values.size();
    return Tensor<float>({n}, std::move(values), true);
}

// 0.5 * sum (w - c)^2, gradient w - c.
void quadratic_grad(Tensor<float>& w, const std::vector<float>& c) {
    w.zero_grad();
    auto diff = add(w, Tensor<float>({c.size()}, [&] {
                        std::vector<float> neg(c);
                        for (float& v : neg) v = -v;
                        return neg;
                    }()));
    auto loss = scale(sum(mul(diff, diff)), 0.5f);
    loss.backward();
}

}  // namespace

TEST_CASE("TrainConfig validation names the field") {
    TrainConfig ok;
    CHECK_NOTHROW(ok.validate());
    auto message = [](TrainConfig t) {
        try {
            t.validate();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    TrainConfig t = ok;
    t.learning_rate = 0;
    CHECK(message(t).find("learning_rate") == 0);
    t = ok;
    t.batch_size = 1;
    CHECK(message(t).find("batch_size") == 0);
    t = ok;
    t.aux_weight = 1.5;
    CHECK(message(t).find("aux_weight") == 0);
    t = ok;
    t.aux_weight = -0.1;
    CHECK(message(t).find("aux_weight") == 0);
    CHECK(ok.aux_weight == 0.3);
    CHECK(ok.momentum == 0.9);
    CHECK(ok.learning_rate == 0.01);
    CHECK(ok.weight_decay == 1e-4);
    CHECK(ok.batch_size == 32);
}

TEST_CASE("SGD on a quadratic matches the hand-computed update") {
    const std::vector<float> c = {1.0f, -2.0f, 0.5f};
    Tensor<float> w = leaf({0.0f, 0.0f, 3.0f});
    const NamedParams params = {{"w", w}};
    const double lr = 0.1, mu = 0.9, wd = 0.01;
    Optimizer opt(OptimizerKind::Sgd, lr, mu, wd);

    std::vector<double> ref = {0.0, 0.0, 3.0}, vel(3, 0.0);
    for (int step = 0; step < 3; ++step) {
        quadratic_grad(w, c);
        opt.step(params);
        for (std::size_t i = 0; i < 3; ++i) {
            const double g = (ref[i] - c[i]) + wd * ref[i];
            vel[i] = mu * vel[i] + g;
            ref[i] -= lr * vel[i];
            CHECK(w.data()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
        }
    }
    // First step by hand: w = 3 - 0.1 * ((3 - 0.5) + 0.01 * 3) = 2.747
    Tensor<float> w2 = leaf({3.0f});
    Optimizer one(OptimizerKind::Sgd, lr, mu, wd);
    quadratic_grad(w2, {0.5f});
    one.step({{"w", w2}});
    CHECK(w2.data()[0] == doctest::Approx(2.747).epsilon(1e-7));
}

TEST_CASE("Adam first step moves each weight by lr against the gradient sign") {
    Tensor<float> w = leaf({0.0f, 5.0f});
    Optimizer opt(OptimizerKind::Adam, 0.01, 0.9, 0.0);
    quadratic_grad(w, {1.0f, 1.0f});
    opt.step({{"w", w}});
    CHECK(w.data()[0] == doctest::Approx(0.01).epsilon(1e-5));
    CHECK(w.data()[1] == doctest::Approx(4.99).epsilon(1e-6));
}

TEST_CASE("zero learning rate and zero gradient leave parameters alone") {
    for (double wd : {0.0, 1e-4}) {
        Tensor<float> w = leaf({0.25f, -1.5f, 7.0f});
        Optimizer opt(OptimizerKind::Sgd, 0.0, 0.9, wd);
        quadratic_grad(w, {0, 0, 0});
        for (int i = 0; i < 5; ++i) opt.step({{"w", w}});
        CHECK(std::vector<float>(w.data().begin(), w.data().end()) == std::vector<float>{0.25f, -1.5f, 7.0f});
    }
    Tensor<float> w = leaf({0.25f, -1.5f});
    Optimizer opt(OptimizerKind::Sgd, 0.1, 0.9, 0.0);
    quadratic_grad(w, {0.25f, -1.5f});  // at the minimum: gradient is exactly zero
    for (int i = 0; i < 5; ++i) opt.step({{"w", w}});
    CHECK(std::vector<float>(w.data().begin(), w.data().end()) == std::vector<float>{0.25f, -1.5f});
}

TEST_CASE("weight decay alone shrinks geometrically") {
    Tensor<float> w = leaf({2.0f, -4.0f});
    quadratic_grad(w, {2.0f, -4.0f});
    const double lr = 0.1, wd = 0.05;
    Optimizer opt(OptimizerKind::Sgd, lr, 0.0, wd);
    for (int k = 1; k <= 10; ++k) {
        opt.step({{"w", w}});
        const double factor = std::pow(1.0 - lr * wd, k);
        CHECK(w.data()[0] == doctest::Approx(2.0 * factor).epsilon(1e-6));
        CHECK(w.data()[1] == doctest::Approx(-4.0 * factor).epsilon(1e-6));
    }
}

TEST_CASE("epoch_batches: permutation, merge of a trailing singleton, determinism") {
    const auto b = epoch_batches(65, 32, 1, 1);
    REQUIRE(b.size() == 2);
    CHECK(b[0].size() == 32);
    CHECK(b[1].size() == 33);
    std::set<std::size_t> seen;
    for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
    CHECK(seen.size() == 65);
    CHECK(epoch_batches(65, 32, 1, 1) == b);
    CHECK(epoch_batches(65, 32, 1, 2) != b);
    CHECK(epoch_batches(66, 32, 1, 1).back().size() == 2);
    for (std::size_t n = 2; n < 80; ++n) {
        for (const auto& batch : epoch_batches(n, 8, 5, 1)) CHECK(batch.size() >= 2);
    }
}

TEST_CASE("train_epoch: zero learning rate keeps parameters bit-identical") {
    auto data = tiny_data(4, 6, 2);
    Model<float> model(tiny_model(4), 1);
    const auto before = snapshot(model);
    Optimizer opt(OptimizerKind::Sgd, 0.0, 0.9, 1e-4);
    Rng rng(1);
    (void)train_epoch(model, opt, data.train, tiny_train(), 1, rng);
    CHECK(snapshot(model) == before);
}

TEST_CASE("train_epoch: loss is the main loss plus 0.3 per auxiliary loss") {
    auto data = tiny_data(4, 4, 9);
    Model<float> model(tiny_model(4), 2);
    std::vector<const Plane*> planes;
    for (const Plane& p : data.train.planes) planes.push_back(&p);
    Rng rng(4);
    const auto out = model.forward(make_batch(planes), Mode::Train, rng);
    REQUIRE(out.aux_logits.size() == 1);
    const double main = cross_entropy(out.logits, std::span<const int>(data.train.labels)).item();
    const double aux = cross_entropy(out.aux_logits[0], std::span<const int>(data.train.labels)).item();
    const double total = total_loss(out, data.train.labels, 0.3).item();
    CHECK(total == doctest::Approx(main + 0.3 * aux).epsilon(1e-6));
    CHECK(total_loss(out, data.train.labels, 0.0).item() == doctest::Approx(main).epsilon(1e-7));
}

TEST_CASE("train_epoch: same seed and config give identical metrics") {
    auto data = tiny_data(4, 8, 5);
    auto run = [&] {
        Session s(tiny_model(4), tiny_train());
        std::vector<std::string> rows;
        for (int e = 0; e < 2; ++e) rows.push_back(format_metrics_row(s.run_epoch(data.train, data.eval)));
        return rows;
    };
    const auto a = run();
    CHECK(a == run());
    CHECK(a[0].rfind("1,", 0) == 0);
    CHECK(a[1].rfind("2,", 0) == 0);
}

TEST_CASE("train_epoch: a non-finite loss aborts naming the batch") {
    auto data = tiny_data(4, 6, 2);
    Model<float> model(tiny_model(4), 1);
    model.head.fc.bias.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
    Optimizer opt(OptimizerKind::Sgd, 0.01, 0.9, 0.0);
    Rng rng(1);
    try {
        (void)train_epoch(model, opt, data.train, tiny_train(), 1, rng);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
    }
}

TEST_CASE("evaluate: uniform logits sit at chance level") {
    auto data = tiny_data(4, 12, 3);
    Model<float> model(tiny_model(4), 1);
    std::fill(model.head.fc.weight.mutable_data().begin(), model.head.fc.weight.mutable_data().end(), 0.0f);
    std::fill(model.head.fc.bias.mutable_data().begin(), model.head.fc.bias.mutable_data().end(), 0.0f);
    const EvalResult r = evaluate(model, data.eval);
    // Ties resolve to class 0, which is a quarter of a balanced split.
    CHECK(r.accuracy == doctest::Approx(0.25));
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("evaluate: hand-set head separates two samples perfectly") {
    // Two per class at 0.75 leaves one training sample per class.
    const SplitData pair = tiny_data(2, 2, 4).train;
    REQUIRE(pair.size() == 2);
    REQUIRE(pair.labels[0] != pair.labels[1]);
    Model<float> model(tiny_model(2), 8);
    // Pooled features of each sample, read back through a unit head.
    const std::size_t n = model.head.fc.in_features;
    std::vector<std::vector<float>> features;
    for (std::size_t s = 0; s < 2; ++s) {
        std::vector<float> f(n);
        for (std::size_t j = 0; j < n; ++j) {
            Model<float> probe(tiny_model(2), 8);
            auto w = probe.head.fc.weight.mutable_data();
            std::fill(w.begin(), w.end(), 0.0f);
            std::fill(probe.head.fc.bias.mutable_data().begin(), probe.head.fc.bias.mutable_data().end(), 0.0f);
            w[j] = 1.0f;  // class 0 logit = feature j
            const Plane* p[] = {&pair.planes[s]};
            Rng rng(0);
            f[j] = probe.forward(make_batch(p), Mode::Eval, rng).logits.data()[0];
        }
        features.push_back(f);
    }
    // Nearest-centroid head: logit_k = <f_k, x> - |f_k|^2 / 2.
    auto w = model.head.fc.weight.mutable_data();
    for (std::size_t k = 0; k < 2; ++k) {
        double norm = 0;
        for (std::size_t j = 0; j < n; ++j) {
            w[k * n + j] = features[static_cast<std::size_t>(pair.labels[k])][j];
            norm += double(w[k * n + j]) * w[k * n + j];
        }
        model.head.fc.bias.mutable_data()[k] = static_cast<float>(-norm / 2);
    }
    CHECK(evaluate(model, pair).accuracy == 1.0);
}

TEST_CASE("evaluate: repeatable, and empty splits are rejected") {
    auto data = tiny_data(3, 6, 1);
    Model<float> model(tiny_model(3), 1);
    const EvalResult a = evaluate(model, data.eval);
    const EvalResult b = evaluate(model, data.eval);
    CHECK(a.loss == b.loss);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.accuracy >= 0.0);
    CHECK(a.accuracy <= 1.0);
    CHECK_THROWS_AS(evaluate(model, SplitData{}), ConfigError);
}

TEST_CASE("checkpoint: save, load, save is byte-identical") {
    auto data = tiny_data(4, 6, 2);
    Session s(tiny_model(4), tiny_train());
    (void)s.run_epoch(data.train, data.eval);
    RunSpec spec;
    spec.preprocess.size = 16;
    const auto bytes = save_checkpoint(s, spec);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "MNTLCKPT");
    LoadedCheckpoint loaded = load_checkpoint(bytes);
    CHECK(save_checkpoint(*loaded.session, loaded.spec) == bytes);
    CHECK(snapshot(loaded.session->model) == snapshot(s.model));
    CHECK(snapshot_buffers(loaded.session->model) == snapshot_buffers(s.model));
    CHECK(loaded.session->epoch == 1);
    CHECK(loaded.spec.model.num_classes == 4);
}

TEST_CASE("checkpoint: corrupt files fail cleanly, naming the section") {
    auto data = tiny_data(4, 6, 2);
    Session s(tiny_model(4), tiny_train());
    RunSpec spec;
    spec.preprocess.size = 16;
    const auto bytes = save_checkpoint(s, spec);

    auto flipped = bytes;
    flipped[0] ^= 0xff;
    CHECK(error_text(flipped).find("magic") != std::string::npos);

    // Version is checked first: the rest of the file is garbage here.
    std::vector<std::uint8_t> future(bytes.begin(), bytes.begin() + 8);
    for (std::uint8_t b : {2, 0, 0, 0, 0xde, 0xad}) future.push_back(b);
    CHECK(error_text(future).find("version 2") != std::string::npos);

    CHECK(error_text(std::span(bytes).first(10)).find("version") != std::string::npos);
    CHECK(error_text(std::span(bytes).first(40)).find("config echo") != std::string::npos);
    CHECK(error_text(std::span(bytes).first(bytes.size() - 3)).find("end marker") != std::string::npos);
    const std::string mid = error_text(std::span(bytes).first(bytes.size() / 2));
    CHECK(mid.find("truncated in tensor table") != std::string::npos);

    for (std::size_t cut = 0; cut < bytes.size(); cut += 97) {
        CHECK_THROWS_AS(load_checkpoint(std::span(bytes).first(cut)), FormatError);
    }
    auto extra = bytes;
    extra.push_back(0);
    CHECK(error_text(extra).find("trailing") != std::string::npos);
}

TEST_CASE("checkpoint: resume at e then train k equals training e+k from scratch") {
    auto data = tiny_data(4, 10, 6);
    RunSpec spec;
    spec.preprocess.size = 16;
    TrainConfig tc = tiny_train();
    tc.epochs = 4;

    Session scratch(tiny_model(4), tc);
    std::vector<std::string> full;
    for (int e = 0; e < 4; ++e) full.push_back(format_metrics_row(scratch.run_epoch(data.train, data.eval)));

    Session first(tiny_model(4), tc);
    std::vector<std::string> resumed;
    for (int e = 0; e < 2; ++e) resumed.push_back(format_metrics_row(first.run_epoch(data.train, data.eval)));
    const auto bytes = save_checkpoint(first, spec);
    LoadedCheckpoint loaded = load_checkpoint(bytes);
    for (int e = 0; e < 2; ++e) {
        resumed.push_back(format_metrics_row(loaded.session->run_epoch(data.train, data.eval)));
    }
    CHECK(resumed == full);
    CHECK(snapshot(loaded.session->model) == snapshot(scratch.model));
    CHECK(save_checkpoint(*loaded.session, spec) == save_checkpoint(scratch, spec));
}

TEST_CASE("two-class, eight-sample set is memorized within 200 epochs") {
    Dataset ds = generate_synthetic_dataset(2, 5, 11);
    ds.manifest = split_dataset(ds.manifest, 0.8, 11);
    const SplitData train = prepare_split(ds, Split::Train, {});
    REQUIRE(train.size() == 8);
    ModelConfig mc;
    mc.num_classes = 2;
    TrainConfig tc;
    tc.augment = false;
    Session s(mc, tc);
    std::size_t reached = 0;
    for (std::size_t e = 1; e <= 200; ++e) {
        const EvalResult r = train_epoch(s.model, s.optimizer, train, tc, e, s.rng);
        if (r.accuracy == 1.0 && reached == 0) reached = e;
    }
    MESSAGE("train accuracy 1.0 at epoch " << reached);
    CHECK(reached > 0);
    // Once running statistics settle, eval mode memorizes the set as well.
    CHECK(evaluate(s.model, train).accuracy == 1.0);
}

TEST_CASE("run_ablation: three rows, named, with final accuracies") {
    auto data = tiny_data(4, 6, 2);
    TrainConfig tc = tiny_train();
    tc.epochs = 1;
    std::size_t callbacks = 0;
    const AblationResult r = run_ablation(data.train, data.eval, tiny_model(4), tc,
                                          [&](Variant, const EpochMetrics&) { ++callbacks; });
    REQUIRE(r.rows.size() == 3);
    CHECK(callbacks == 3);
    CHECK(r.rows[0].variant == Variant::Inception);
    CHECK(r.rows[1].variant == Variant::Residual);
    CHECK(r.rows[2].variant == Variant::Ensemble);
    const std::string table = format_ablation_table(r);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);
    CHECK(table.find("inception,1,") != std::string::npos);
    CHECK(table.find("ensemble,1,") != std::string::npos);
}

TEST_CASE("metrics rows use the fixed header") {
    CHECK(metrics_header() == "epoch,train_loss,train_accuracy,eval_loss,eval_accuracy");
    EpochMetrics m{3, 0.5, 0.75, 0.25, 1.0, 12.0};
    CHECK(format_metrics_row(m) == "3,0.5,0.75,0.25,1");
    CHECK(format_timing_row(m) == "3,12.000");
}
