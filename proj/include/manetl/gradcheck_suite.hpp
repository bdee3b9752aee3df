#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "manetl/gradcheck.hpp"

namespace manetl {

enum class SuiteScale { Tiny, Default };

struct SuiteCase {
    std::string name;  // layer or composition under test
    std::uint64_t seed = 0;
    double tolerance = 0.0;
    GradCheckReport report;
};

struct SuiteOptions {
    SuiteScale scale = SuiteScale::Tiny;
    std::size_t seeds = 10;
    std::uint64_t base_seed = 1;
    double primitive_step = 1e-3;
    double primitive_tolerance = 1e-4;
    // Compositions hold thousands of ReLU/max-pool units coupled through
    // batch statistics; a 1e-3 step straddles some kink on most
    // perturbations, so they are differenced with a smaller step.
    double model_step = 1e-6;
    double model_tolerance = 1e-3;
    // Restricts the run to these case names; empty runs everything.
    std::vector<std::string> only;
    // Called after each case, e.g. for progress output.
    std::function<void(const SuiteCase&)> on_case;
};

struct SuiteResult {
    std::vector<SuiteCase> cases;
    bool passed = true;
    // Names of the failing cases, deduplicated, in suite order.
    std::vector<std::string> failing;
};

// Finite-difference checks of every layer primitive (at the primitive
// tolerance) and of the composed model (at the model tolerance), each over
// `seeds` independent draws.
SuiteResult run_gradient_suite(const SuiteOptions& options = {});

// Case names in the order the suite runs them.
std::vector<std::string> gradient_suite_case_names();

}  // namespace manetl
