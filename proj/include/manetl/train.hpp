#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "manetl/dataset.hpp"
#include "manetl/model.hpp"

namespace manetl {

enum class OptimizerKind { Sgd, Adam };

std::string optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& text);

// The model variant lives in ModelConfig.
struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    double momentum = 0.9;  // SGD only
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    double aux_weight = 0.3;
    bool augment = true;  // random rotation on training samples

    // Throws ConfigError naming the field.
    void validate() const;
};

using NamedParams = std::vector<std::pair<std::string, Tensor<float>>>;

// Per-parameter state buffers keyed "<param>/<slot>", in parameter order.
struct OptimizerSlot {
    std::string name;
    std::vector<float> values;
};

// SGD: g = grad + wd*p; v = momentum*v + g; p -= lr*v.
// Adam: betas (0.9, 0.999), eps 1e-8, bias-corrected; `momentum` is unused
// and wd is added to the gradient as for SGD.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, double momentum, double weight_decay);

    // Parameters without a gradient are left alone.
    void step(const NamedParams& params);

    OptimizerKind kind() const { return kind_; }
    std::uint64_t steps() const { return steps_; }
    const std::vector<OptimizerSlot>& slots() const { return slots_; }
    // Replaces the whole state; used by checkpoint loading.
    void restore(std::uint64_t steps, std::vector<OptimizerSlot> slots);

private:
    OptimizerSlot& slot(std::size_t index, const std::string& name, std::size_t size);

    OptimizerKind kind_;
    double lr_, momentum_, weight_decay_;
    std::uint64_t steps_ = 0;
    std::vector<OptimizerSlot> slots_;
};

// One split, preprocessed once without augmentation.
struct SplitData {
    PreprocessOptions preprocess;
    std::vector<Plane> planes;
    std::vector<Image> raw;  // kept for per-epoch augmentation
    std::vector<int> labels;
    std::vector<std::uint64_t> aug_seeds;

    std::size_t size() const { return labels.size(); }
};

SplitData prepare_split(const Dataset& dataset, Split split, const PreprocessOptions& preprocess);

struct EvalResult {
    double loss = 0.0;      // mean over samples
    double accuracy = 0.0;  // in [0, 1]
    std::size_t samples = 0;
};

// One line of metrics.csv. `seconds` is wall-clock and goes to timing.csv
// instead, so metrics files stay byte-comparable across runs.
struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double eval_loss = 0.0;
    double eval_accuracy = 0.0;
    double seconds = 0.0;
};

std::string metrics_header();
std::string format_metrics_row(const EpochMetrics& m);
std::string timing_header();
std::string format_timing_row(const EpochMetrics& m);

// Batches of `batch_size` over a permutation drawn from (seed, epoch); a
// trailing batch of one is folded into the previous batch so batch
// statistics always see at least two samples.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

// Forward (train mode), total loss, backward, optimizer step per batch.
// `epoch` is 1-based and selects the shuffle and augmentation draws. Returns
// the sample-weighted mean total loss and the train-mode accuracy. A
// non-finite loss throws NumericalError naming the batch.
EvalResult train_epoch(Model<float>& model, Optimizer& optimizer, const SplitData& data,
                       const TrainConfig& config, std::size_t epoch, Rng& rng);

// Eval mode throughout; loss is mean main cross-entropy. Empty data throws
// ConfigError.
EvalResult evaluate(Model<float>& model, const SplitData& data, std::size_t batch_size = 64);

// Everything that evolves during training.
class Session {
public:
    Session(const ModelConfig& model_config, const TrainConfig& train_config);

    // Trains one epoch, then evaluates on `eval`.
    EpochMetrics run_epoch(const SplitData& train, const SplitData& eval);

    ModelConfig model_config;
    TrainConfig train_config;
    Model<float> model;
    Optimizer optimizer;
    Rng rng;                // dropout draws
    std::size_t epoch = 0;  // completed epochs
};

struct AblationRow {
    Variant variant;
    std::vector<EpochMetrics> history;
    double final_eval_accuracy() const { return history.empty() ? 0.0 : history.back().eval_accuracy; }
};

struct AblationResult {
    std::vector<AblationRow> rows;  // inception, residual, ensemble
};

using EpochCallback = std::function<void(Variant, const EpochMetrics&)>;
using SessionCallback = std::function<void(Variant, Session&)>;

// Trains the three variants under identical seeds and budgets. `on_finish`
// sees each trained session, e.g. to write its checkpoint.
AblationResult run_ablation(const SplitData& train, const SplitData& eval, const ModelConfig& base_model,
                            const TrainConfig& config, const EpochCallback& on_epoch = {},
                            const SessionCallback& on_finish = {});

std::string format_ablation_table(const AblationResult& result);

}  // namespace manetl
