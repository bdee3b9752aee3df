#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "manetl/backbone.hpp"
#include "manetl/layers.hpp"
#include "manetl/model_config.hpp"

namespace manetl {

// Channel concatenation of two branch feature maps, `a` first. Throws
// DimensionError naming both shapes when batch or spatial extents differ.
template <typename T>
Tensor<T> ensemble_fuse(const BranchOutput<T>& a, const BranchOutput<T>& b);

template <typename T>
struct AttentionResult {
    Tensor<T> output;  // [B, N, H, W]
    Tensor<T> gates;   // [B, N], every entry >= 0
};

// GAP -> dense(N -> N/r) -> BN -> ReLU -> dense(N/r -> N) -> ReLU, then the
// input is rescaled channel-wise by the resulting gates.
template <typename T>
struct ChannelAttention {
    std::size_t channels = 0;
    Dense<T> squeeze;
    BatchNorm<T> norm;
    Dense<T> excite;

    ChannelAttention() = default;
    // The excite bias starts at 1 so initial gates sit near identity.
    ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng);

    AttentionResult<T> forward_with_gates(const Tensor<T>& x, Mode mode);
    Tensor<T> forward(const Tensor<T>& x, Mode mode) { return forward_with_gates(x, mode).output; }
    // Zero excite weights and unit excite bias: gates are exactly 1.
    void set_neutral();
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    void visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

// GAP -> dropout -> dense. Logits only; softmax lives in the loss.
template <typename T>
struct ClassificationHead {
    double dropout_rate = 0.5;
    Dense<T> fc;

    ClassificationHead() = default;
    ClassificationHead(std::size_t channels, std::size_t num_classes, double dropout_rate, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) const;
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const { return fc.param_count(); }
};

template <typename T>
struct ModelOutput {
    Tensor<T> logits;                   // [B, K]
    std::vector<Tensor<T>> aux_logits;  // empty in eval mode
};

template <typename T>
class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }

    ModelOutput<T> forward(const Tensor<T>& input, Mode mode, Rng& rng);

    // Trainable tensors in a fixed order.
    void visit_params(const TensorVisitor<T>& fn);
    // Batch-norm running statistics in a fixed order.
    void visit_buffers(const TensorVisitor<T>& fn);
    std::vector<std::pair<std::string, Tensor<T>>> named_params();

    // Sum of the per-layer closed-form counts.
    std::size_t param_count() const;

    std::optional<InceptionBranch<T>> inception;
    std::optional<ResidualBranch<T>> residual;
    ChannelAttention<T> attention;
    ClassificationHead<T> head;

private:
    ModelConfig config_;
};

// main CE + aux_weight * sum of aux CEs
template <typename T>
Tensor<T> total_loss(const ModelOutput<T>& out, std::span<const int> labels, double aux_weight);

// Walks every parameter tensor and sums its length.
template <typename T>
std::size_t count_params(Model<T>& model);

struct ShapeStep {
    std::string name;
    Shape shape;
};

// Activation shapes the config implies, derived from layer geometry alone
// without running any kernels.
std::vector<ShapeStep> infer_shapes(const ModelConfig& config, std::size_t batch);
// Shape recorded under `name`; throws UsageError when absent.
Shape inferred_shape(const std::vector<ShapeStep>& steps, const std::string& name);

}  // namespace manetl
