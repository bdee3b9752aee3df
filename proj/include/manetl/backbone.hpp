#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "manetl/layers.hpp"
#include "manetl/model_config.hpp"

namespace manetl {

// Output widths of the four inception paths plus the 1x1 reductions that
// feed the 3x3 and 5x5 convolutions.
struct InceptionBlockSpec {
    std::size_t in_channels = 0;
    std::size_t c1 = 0;
    std::size_t c3_reduce = 0;
    std::size_t c3 = 0;
    std::size_t c5_reduce = 0;
    std::size_t c5 = 0;
    std::size_t pool_proj = 0;

    std::size_t out_channels() const { return c1 + c3 + c5 + pool_proj; }
    void validate() const;

    // Reductions default to 2/3 of the 3x3 width and 1/2 of the 5x5 width.
    static InceptionBlockSpec from_paths(std::size_t in, std::size_t c1, std::size_t c3,
                                         std::size_t c5, std::size_t pool_proj);
    // Splits `out` as 1/4, 3/8, 1/8 and the remainder.
    static InceptionBlockSpec for_output(std::size_t in, std::size_t out);
};

template <typename T>
struct InceptionBlock {
    InceptionBlockSpec spec;
    Conv2d<T> path1;
    Conv2d<T> path3_reduce;
    Conv2d<T> path3;
    Conv2d<T> path5_reduce;
    Conv2d<T> path5;
    Conv2d<T> pool_proj;

    InceptionBlock() = default;
    InceptionBlock(const InceptionBlockSpec& spec, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x) const;
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

struct ResidualBlockSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t stride = 1;

    bool projection() const { return stride != 1 || in_channels != out_channels; }
};

template <typename T>
struct ResidualBlock {
    ResidualBlockSpec spec;
    Conv2d<T> conv1;
    BatchNorm<T> bn1;
    Conv2d<T> conv2;
    BatchNorm<T> bn2;
    Conv2d<T> shortcut_conv;  // present only for projection shortcuts
    BatchNorm<T> shortcut_bn;

    ResidualBlock() = default;
    ResidualBlock(const ResidualBlockSpec& spec, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    // main(x) + shortcut(x) before the final ReLU; main(x) alone when
    // `with_shortcut` is false.
    Tensor<T> forward_preactivation(const Tensor<T>& x, Mode mode, bool with_shortcut = true);
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    void visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

struct AuxClassifierSpec {
    std::size_t in_channels = 0;
    std::size_t tap_h = 0;
    std::size_t tap_w = 0;
    std::size_t conv_channels = 32;
    std::size_t hidden = 128;
    double dropout = 0.7;
    std::size_t num_classes = 0;

    // 5x5 stride 3 when the tap map allows it, 3x3 stride 1 otherwise.
    std::size_t pool_kernel() const;
    std::size_t pool_stride() const;
    std::size_t pooled_h() const;
    std::size_t pooled_w() const;
    // Throws ConfigError when the tap map is smaller than 3x3.
    void validate() const;
};

template <typename T>
struct AuxClassifier {
    AuxClassifierSpec spec;
    Conv2d<T> reduce;
    Dense<T> fc1;
    Dense<T> fc2;

    AuxClassifier() = default;
    AuxClassifier(const AuxClassifierSpec& spec, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) const;
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

template <typename T>
struct BranchOutput {
    Tensor<T> features;                // [B, C, S, S]
    std::vector<Tensor<T>> aux_logits;  // train mode only
};

// stem conv -> pool -> block1 -> pool -> block2 -> aux tap -> block3
template <typename T>
struct InceptionBranch {
    Conv2d<T> stem;
    InceptionBlock<T> block1;
    InceptionBlock<T> block2;
    InceptionBlock<T> block3;
    AuxClassifier<T> aux;

    InceptionBranch() = default;
    InceptionBranch(const ModelConfig& config, Rng& rng);

    BranchOutput<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) const;
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

// stem conv/BN -> three residual stages (strides 2, 2, 1)
template <typename T>
struct ResidualBranch {
    Conv2d<T> stem;
    BatchNorm<T> stem_bn;
    ResidualBlock<T> stage1;
    ResidualBlock<T> stage2;
    ResidualBlock<T> stage3;

    ResidualBranch() = default;
    ResidualBranch(const ModelConfig& config, Rng& rng);

    BranchOutput<T> forward(const Tensor<T>& x, Mode mode);
    void visit_params(const std::string& prefix, const TensorVisitor<T>& fn);
    void visit_buffers(const std::string& prefix, const TensorVisitor<T>& fn);
    std::size_t param_count() const;
};

// Block widths derived from a ModelConfig.
InceptionBlockSpec inception_block_spec(const ModelConfig& config, int index);
ResidualBlockSpec residual_stage_spec(const ModelConfig& config, int index);
AuxClassifierSpec aux_classifier_spec(const ModelConfig& config);

// out_h * out_w * out_channels * kernel_h * kernel_w * in_channels
std::uint64_t count_macs(const ConvSpec& spec, std::size_t input_h, std::size_t input_w);

}  // namespace manetl
