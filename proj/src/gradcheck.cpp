#include "manetl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace manetl {

namespace {

double eval_scalar(const std::function<Tensor<double>()>& loss_fn) {
    NoGradGuard guard;
    const Tensor<double> loss = loss_fn();
    if (loss.numel() != 1) throw UsageError("gradient check needs a scalar loss");
    return loss.item();
}

std::vector<std::size_t> pick_elements(std::size_t n, const GradCheckOptions& options,
                                       std::size_t param_index) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_elements == 0 || options.max_elements >= n) return idx;
    std::mt19937_64 rng(options.sample_seed * 0x9E3779B97F4A7C15ull + param_index);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_elements);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  const std::vector<NamedTensor>& params,
                                  const GradCheckOptions& options) {
    GradCheckReport report;
    for (const auto& [name, p] : params) {
        Tensor<double> handle = p;
        handle.zero_grad();
    }
    const Tensor<double> loss = loss_fn();
    if (loss.numel() != 1 || !std::isfinite(loss.item())) {
        report.failure = "loss is not a finite scalar";
        return report;
    }
    backward(loss);
    const double floor = std::max(options.denominator_floor,
                                  options.resolution_factor * std::numeric_limits<double>::epsilon() *
                                      std::abs(loss.item()) / options.step);

    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::string& name = params[k].first;
        Tensor<double> param = params[k].second;
        ParamGradReport entry;
        entry.name = name;
        std::vector<double> analytic(param.numel(), 0.0);
        if (param.has_grad()) {
            std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
        }
        auto values = param.mutable_data();
        for (std::size_t i : pick_elements(param.numel(), options, k)) {
            const double saved = values[i];
            values[i] = saved + options.step;
            const double plus = eval_scalar(loss_fn);
            values[i] = saved - options.step;
            const double minus = eval_scalar(loss_fn);
            values[i] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                report.failure = "non-finite loss while perturbing " + name + "[" + std::to_string(i) + "]";
                report.params.push_back(entry);
                return report;
            }
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
            const double err = std::abs(analytic[i] - numeric) / denom;
            if (err > entry.max_rel_error || entry.checked == 0) {
                entry.max_rel_error = std::max(entry.max_rel_error, err);
                entry.worst_index = i;
                entry.worst_analytic = analytic[i];
                entry.worst_numeric = numeric;
            }
            ++entry.checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.params.push_back(entry);
    }
    report.passed = report.max_rel_error < options.tolerance;
    if (!report.passed) {
        const auto worst = std::max_element(report.params.begin(), report.params.end(),
                                            [](const auto& a, const auto& b) {
                                                return a.max_rel_error < b.max_rel_error;
                                            });
        std::ostringstream os;
        os << worst->name << ": max relative error " << worst->max_rel_error << " at element "
           << worst->worst_index << " (analytic " << worst->worst_analytic << ", numeric "
           << worst->worst_numeric << ")";
        report.failure = os.str();
    }
    return report;
}

}  // namespace manetl
