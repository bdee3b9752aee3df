#pragma once

#include <cstddef>
#include <string>

namespace manetl {

enum class Variant { Inception, Residual, Ensemble };

std::string variant_name(Variant v);
// Accepts "inception", "residual", "ensemble"; throws ConfigError otherwise.
Variant parse_variant(const std::string& text);

struct ModelConfig {
    std::size_t input_size = 32;        // square, single channel
    std::size_t num_classes = 50;
    std::size_t stem_channels = 16;
    std::size_t branch_channels = 64;   // channels each branch emits
    std::size_t aux_conv_channels = 32;
    std::size_t aux_hidden = 128;
    double aux_dropout = 0.7;
    double head_dropout = 0.5;
    std::size_t attention_reduction = 8;
    Variant variant = Variant::Ensemble;

    // Channels entering the attention block for this variant.
    std::size_t fused_channels() const;
    // Spatial extent of both branch outputs (input / 4).
    std::size_t feature_size() const;
    // Throws ConfigError naming the offending field.
    void validate() const;

    // N = 16 fused channels, 4 classes, 16x16 input: small enough for an
    // element-by-element finite-difference sweep.
    static ModelConfig tiny();
};

}  // namespace manetl
