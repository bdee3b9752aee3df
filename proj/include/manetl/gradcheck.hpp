#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "manetl/tensor.hpp"

namespace manetl {

struct GradCheckOptions {
    double step = 1e-3;       // central-difference step
    double tolerance = 1e-4;  // max allowed relative error
    // Relative error is |a - n| / max(|a|, |n|, denominator_floor), so
    // gradients that are zero on both sides are not judged on round-off.
    double denominator_floor = 1e-6;
    // The floor is raised to resolution_factor * eps * |loss| / step, the
    // smallest slope a central difference can resolve in double precision.
    double resolution_factor = 1e4;
    // 0 checks every element; otherwise a seeded sample of this many
    // elements per parameter.
    std::size_t max_elements = 0;
    std::uint64_t sample_seed = 0;
};

struct ParamGradReport {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    std::vector<ParamGradReport> params;
    double max_rel_error = 0.0;
    bool passed = false;
    std::string failure;  // empty when passed
};

using NamedTensor = std::pair<std::string, Tensor<double>>;

// Compares reverse-mode gradients of the scalar `loss_fn` against central
// differences for every element of `params`. `loss_fn` must be a pure
// function of the parameter values (reseed any randomness inside it).
GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  const std::vector<NamedTensor>& params,
                                  const GradCheckOptions& options = {});

}  // namespace manetl
