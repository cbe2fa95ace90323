// SPDX-License-Identifier: Apache-2.0

#include "mgfn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mgfn/errors.hpp"

namespace mgfn {

namespace {

double evaluate(const ScalarObjective& f) {
    Tape tape(Tape::Mode::kNoGrad);
    const double value = f(tape).item();
    if (!std::isfinite(value)) {
        throw NumericalError("grad_check: objective evaluated to a non-finite value");
    }
    return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarObjective& f, std::vector<NamedParam> params,
                           const GradCheckOptions& options) {
    Tape tape;
    const Tensor root = f(tape);
    if (!std::isfinite(root.item())) {
        throw NumericalError("grad_check: objective evaluated to a non-finite value");
    }
    tape.backward(root);

    GradCheckReport report;
    for (auto& param : params) {
        ParamGradError err;
        err.name = param.name;
        const std::vector<double> analytic =
            param.tensor.has_grad()
                ? std::vector<double>(param.tensor.grad().begin(), param.tensor.grad().end())
                : std::vector<double>(param.tensor.numel(), 0.0);
        auto values = param.tensor.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + options.eps;
            const double plus = evaluate(f);
            values[i] = saved - options.eps;
            const double minus = evaluate(f);
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * options.eps);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom =
                std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
            const double rel = abs_err / denom;
            if (rel > err.max_rel_error) {
                err.max_rel_error = rel;
                err.worst_index = i;
            }
            err.max_abs_error = std::max(err.max_abs_error, abs_err);
        }
        report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
        report.params.push_back(std::move(err));
    }
    report.passed = report.max_rel_error < options.tol;
    return report;
}

}  // namespace mgfn
