#include <algorithm>
#include <chrono>

#include "doctest.h"
#include "manetl/gradcheck_suite.hpp"

using namespace manetl;

TEST_CASE("gradient suite: every primitive and composition passes over 10 seeds") {
    SuiteOptions options;
    options.seeds = 10;
    const auto start = std::chrono::steady_clock::now();
    SuiteResult result = run_gradient_suite(options);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto names = gradient_suite_case_names();
    CHECK(result.cases.size() == names.size() * 10);
    for (const auto& c : result.cases) {
        CAPTURE(c.name);
        CAPTURE(c.seed);
        CAPTURE(c.report.failure);
        CHECK(c.report.passed);
        CHECK(c.report.max_rel_error < c.tolerance);
        const bool composed = c.name.find('_') != std::string::npos && c.name.find("block") != std::string::npos;
        if (composed) CHECK(c.tolerance == 1e-3);
    }
    CHECK(result.passed);
    CHECK(result.failing.empty());
    CHECK(seconds < 60.0);
}

TEST_CASE("gradient suite: primitives are held to 1e-4, the composed model to 1e-3") {
    SuiteOptions options;
    options.seeds = 1;
    options.only = {"conv2d", "model"};
    SuiteResult result = run_gradient_suite(options);
    REQUIRE(result.cases.size() == 2);
    CHECK(result.cases[0].tolerance == 1e-4);
    CHECK(result.cases[1].tolerance == 1e-3);
}

TEST_CASE("gradient suite: a corrupted backward rule is caught and named") {
    for (const char* op : {"relu", "conv2d", "batch_norm", "scale_channels"}) {
        CAPTURE(op);
        debug::set_corrupted_backward(op);
        SuiteOptions options;
        options.seeds = 2;
        options.only = {op, "inception_block", "channel_attention"};
        if (std::string(op) == "batch_norm") options.only = {"batch_norm/train", "batch_norm/eval"};
        SuiteResult result = run_gradient_suite(options);
        debug::set_corrupted_backward("");
        CHECK_FALSE(result.passed);
        REQUIRE_FALSE(result.failing.empty());
        const std::string first = result.failing.front();
        CHECK(first.rfind(op, 0) == 0);
    }
}
