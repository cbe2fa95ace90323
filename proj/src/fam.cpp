// SPDX-License-Identifier: Apache-2.0

#include "mgfn/fam.hpp"

#include <cmath>

#include "mgfn/errors.hpp"
#include "mgfn/ops.hpp"

namespace mgfn {

FamParams FamParams::init(std::size_t channels, std::size_t kernel_size, double alpha, Rng rng) {
    if (kernel_size % 2 == 0) {
        throw ConfigError("FAM kernel size must be odd");
    }
    if (!(alpha >= 0.0)) {
        throw ConfigError("FAM alpha must be non-negative");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel_size));
    std::vector<double> w(channels * kernel_size);
    for (auto& x : w) {
        x = rng.uniform(-bound, bound);
    }
    return FamParams{Tensor::from({channels, 1, kernel_size}, std::move(w), true),
                     Tensor::zeros({channels}, true), alpha};
}

void FamParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".bias", bias});
}

Tensor magnitude(Tape& tape, const Tensor& features) {
    if (features.rank() != 4) {
        throw DimensionError("magnitude: expects B x T x P x C, got " + shape_str(features.shape()));
    }
    return ops::l2_norm_over_channels(tape, features);
}

Tensor amplify(Tape& tape, const Tensor& features, const FamParams& params) {
    const auto norms = magnitude(tape, features);
    const auto lifted =
        ops::conv1d_clips(tape, norms, params.kernel, params.bias, params.kernel.dim(2) / 2);
    return ops::add(tape, features, ops::scale(tape, lifted, params.alpha));
}

}  // namespace mgfn
