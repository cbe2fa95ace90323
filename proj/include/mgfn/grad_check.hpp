// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mgfn/tensor.hpp"

namespace mgfn {

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is ~0 are judged on an absolute scale.
    double floor = 1e-6;
};

struct ParamGradError {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<ParamGradError> params;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Builds the scalar objective on the given tape. Must be deterministic.
using ScalarObjective = std::function<Tensor(Tape&)>;

/// Compares the tape gradient of `f` with central differences
/// (f(p+eps) - f(p-eps)) / (2 eps) for every entry of every parameter.
/// Relative error per entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// Throws NumericalError when f is non-finite.
GradCheckReport grad_check(const ScalarObjective& f, std::vector<NamedParam> params,
                           const GradCheckOptions& options = {});

}  // namespace mgfn
