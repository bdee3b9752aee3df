#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "manetl/dataset.hpp"
#include "manetl/model_config.hpp"
#include "manetl/train.hpp"

namespace manetl {

// Fully resolved run description. Every field has a default; a config file
// and then command-line flags override them.
struct RunSpec {
    std::string dataset;                // image root or prepared directory; empty = synthetic
    std::size_t synthetic_classes = 10;
    std::size_t synthetic_per_class = 100;
    std::uint64_t data_seed = 1;        // synthetic rendering and the split
    double train_fraction = 0.8;
    PreprocessOptions preprocess;
    ModelConfig model;
    TrainConfig train;
    std::string out = "runs";
    std::string checkpoint;             // evaluate: the checkpoint; train: resume from it

    // Keys set by the file or a flag rather than left at their defaults.
    std::set<std::string> explicit_keys;

    bool is_explicit(const std::string& key) const { return explicit_keys.count(key) != 0; }
};

// A key/value pair from the command line.
struct ConfigOverride {
    std::string key;
    std::string value;
};

// Flat `key = value` lines; `#` starts a comment; blank lines are ignored.
// Overrides are applied after the file. Unknown keys, malformed values and
// constraint violations throw ConfigError naming the key and its line (or
// "command line").
RunSpec parse_config(const std::string& text, const std::vector<ConfigOverride>& overrides = {});
RunSpec load_config(const std::string& path, const std::vector<ConfigOverride>& overrides = {});

// Checks every cross-field constraint; throws ConfigError.
void validate_run(const RunSpec& spec);

// Every key with its resolved value, in a form parse_config reads back to
// the same RunSpec.
std::string format_config(const RunSpec& spec);

// Known keys, in echo order.
const std::vector<std::string>& config_keys();

// "K,n" -> (K, n)
std::pair<std::size_t, std::size_t> parse_synthetic_spec(const std::string& text);

}  // namespace manetl
