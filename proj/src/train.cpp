#include "manetl/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "manetl/error.hpp"
#include "manetl/hash.hpp"

namespace manetl {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "sgd") return OptimizerKind::Sgd;
    if (text == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + text + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
    if (epochs < 1) fail("epochs", "must be at least 1");
    if (batch_size < 2) fail("batch_size", "must be at least 2 (batch normalization needs two samples)");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay", "must be non-negative");
    if (!(aux_weight >= 0.0 && aux_weight <= 1.0)) fail("aux_weight", "must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double momentum, double weight_decay)
    : kind_(kind), lr_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {}

OptimizerSlot& Optimizer::slot(std::size_t index, const std::string& name, std::size_t size) {
    if (index == slots_.size()) slots_.push_back({name, std::vector<float>(size, 0.0f)});
    OptimizerSlot& s = slots_.at(index);
    if (s.name != name || s.values.size() != size) {
        throw UsageError("optimizer state slot " + std::to_string(index) + " is '" + s.name + "', expected '" +
                         name + "'");
    }
    return s;
}

void Optimizer::step(const NamedParams& params) {
    ++steps_;
    const auto lr = static_cast<float>(lr_), wd = static_cast<float>(weight_decay_);
    std::size_t index = 0;
    for (const auto& [name, tensor] : params) {
        Tensor<float> p = tensor;
        const std::size_t n = p.numel();
        if (kind_ == OptimizerKind::Sgd) {
            auto& v = slot(index++, name + "/velocity", n).values;
            if (!p.has_grad()) continue;
            const auto mu = static_cast<float>(momentum_);
            auto w = p.mutable_data();
            auto g = p.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const float gi = g[i] + wd * w[i];
                v[i] = mu * v[i] + gi;
                w[i] -= lr * v[i];
            }
        } else {
            auto& m = slot(index++, name + "/m", n).values;
            auto& s = slot(index++, name + "/v", n).values;
            if (!p.has_grad()) continue;
            constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
            auto w = p.mutable_data();
            auto g = p.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = g[i] + wd * w[i];
                m[i] = static_cast<float>(b1 * m[i] + (1 - b1) * gi);
                s[i] = static_cast<float>(b2 * s[i] + (1 - b2) * gi * gi);
                w[i] -= static_cast<float>(lr_ * (m[i] / c1) / (std::sqrt(s[i] / c2) + eps));
            }
        }
    }
}

void Optimizer::restore(std::uint64_t steps, std::vector<OptimizerSlot> slots) {
    steps_ = steps;
    slots_ = std::move(slots);
}

// ---------------------------------------------------------------------------

SplitData prepare_split(const Dataset& dataset, Split split, const PreprocessOptions& preprocess) {
    SplitData out;
    out.preprocess = preprocess;
    for (std::size_t i : dataset.manifest.indices(split)) {
        const SampleRecord& r = dataset.manifest.samples[i];
        out.planes.push_back(preprocess_pipeline(dataset.images.at(i), preprocess, false, r.aug_seed));
        out.raw.push_back(dataset.images[i]);
        out.labels.push_back(r.label);
        out.aug_seeds.push_back(r.aug_seed);
    }
    return out;
}

std::string metrics_header() { return "epoch,train_loss,train_accuracy,eval_loss,eval_accuracy"; }

std::string format_metrics_row(const EpochMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g", m.epoch, m.train_loss, m.train_accuracy, m.eval_loss,
                  m.eval_accuracy);
    return buf;
}

std::string timing_header() { return "epoch,seconds"; }

std::string format_timing_row(const EpochMetrics& m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.3f", m.epoch, m.seconds);
    return buf;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
    if (batch_size == 0) throw ConfigError("batch_size: must be positive");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::uint64_t state = hash_combine(hash_combine(seed, std::string_view("shuffle")), epoch);
    for (std::size_t i = n; i > 1; --i) {
        state = mix64(state);
        std::swap(order[i - 1], order[state % i]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
        const std::size_t end = std::min(n, begin + batch_size);
        if (end - begin == 1 && !batches.empty()) {
            batches.back().push_back(order[begin]);
        } else {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return batches;
}

EvalResult train_epoch(Model<float>& model, Optimizer& optimizer, const SplitData& data, const TrainConfig& config,
                       std::size_t epoch, Rng& rng) {
    if (data.size() < 2) {
        throw ConfigError("training split has " + std::to_string(data.size()) + " sample(s); need at least 2");
    }
    const NamedParams params = model.named_params();
    const bool augment = config.augment && data.preprocess.enabled && data.raw.size() == data.size();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto batches = epoch_batches(data.size(), config.batch_size, config.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const auto& batch = batches[b];
        std::vector<Plane> augmented;
        std::vector<const Plane*> planes;
        std::vector<int> labels;
        if (augment) augmented.reserve(batch.size());
        for (std::size_t i : batch) {
            if (augment) {
                augmented.push_back(preprocess_pipeline(data.raw[i], data.preprocess, true,
                                                        hash_combine(data.aug_seeds[i], epoch)));
                planes.push_back(&augmented.back());
            } else {
                planes.push_back(&data.planes[i]);
            }
            labels.push_back(data.labels[i]);
        }
        for (const auto& [name, p] : params) {
            Tensor<float> t = p;
            t.zero_grad();
        }
        const auto out = model.forward(make_batch(planes), Mode::Train, rng);
        const Tensor<float> loss = total_loss(out, labels, config.aux_weight);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw NumericalError("non-finite training loss (" + std::to_string(value) + ") at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(b));
        }
        loss.backward();
        optimizer.step(params);
        loss_sum += value * static_cast<double>(batch.size());
        const auto predicted = argmax_rows(out.logits);
        for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
    }
    const auto n = static_cast<double>(data.size());
    return {loss_sum / n, static_cast<double>(correct) / n, data.size()};
}

EvalResult evaluate(Model<float>& model, const SplitData& data, std::size_t batch_size) {
    if (data.size() == 0) throw ConfigError("evaluation split is empty");
    if (batch_size == 0) batch_size = 64;
    NoGradGuard no_grad;
    Rng unused(0);  // eval mode draws nothing
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(data.size(), begin + batch_size);
        std::vector<const Plane*> planes;
        std::vector<int> labels;
        for (std::size_t i = begin; i < end; ++i) {
            planes.push_back(&data.planes[i]);
            labels.push_back(data.labels[i]);
        }
        const auto out = model.forward(make_batch(planes), Mode::Eval, unused);
        loss_sum += static_cast<double>(cross_entropy(out.logits, std::span<const int>(labels)).item()) *
                    static_cast<double>(labels.size());
        const auto predicted = argmax_rows(out.logits);
        for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
    }
    const auto n = static_cast<double>(data.size());
    return {loss_sum / n, static_cast<double>(correct) / n, data.size()};
}

// ---------------------------------------------------------------------------

Session::Session(const ModelConfig& mc, const TrainConfig& tc)
    : model_config(mc),
      train_config(tc),
      model((mc.validate(), tc.validate(), mc), tc.seed),
      optimizer(tc.optimizer, tc.learning_rate, tc.momentum, tc.weight_decay),
      rng(hash_combine(tc.seed, std::string_view("dropout"))) {}

EpochMetrics Session::run_epoch(const SplitData& train, const SplitData& eval) {
    const auto start = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch + 1;
    const EvalResult t = train_epoch(model, optimizer, train, train_config, m.epoch, rng);
    const EvalResult e = evaluate(model, eval, train_config.batch_size);
    epoch = m.epoch;
    m.train_loss = t.loss;
    m.train_accuracy = t.accuracy;
    m.eval_loss = e.loss;
    m.eval_accuracy = e.accuracy;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
}

AblationResult run_ablation(const SplitData& train, const SplitData& eval, const ModelConfig& base_model,
                            const TrainConfig& config, const EpochCallback& on_epoch,
                            const SessionCallback& on_finish) {
    AblationResult result;
    for (Variant v : {Variant::Inception, Variant::Residual, Variant::Ensemble}) {
        ModelConfig mc = base_model;
        mc.variant = v;
        Session session(mc, config);
        AblationRow row{v, {}};
        for (std::size_t e = 0; e < config.epochs; ++e) {
            row.history.push_back(session.run_epoch(train, eval));
            if (on_epoch) on_epoch(v, row.history.back());
        }
        if (on_finish) on_finish(v, session);
        result.rows.push_back(std::move(row));
    }
    return result;
}

std::string format_ablation_table(const AblationResult& result) {
    std::string out = "variant,epochs,final_train_accuracy,final_eval_accuracy,final_eval_loss\n";
    for (const AblationRow& row : result.rows) {
        const EpochMetrics last = row.history.empty() ? EpochMetrics{} : row.history.back();
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.4f,%.6f\n", variant_name(row.variant).c_str(),
                      row.history.size(), last.train_accuracy, last.eval_accuracy, last.eval_loss);
        out += buf;
    }
    return out;
}

}  // namespace manetl
