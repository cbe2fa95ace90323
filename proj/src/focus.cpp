// SPDX-License-Identifier: Apache-2.0

#include "mgfn/focus.hpp"

#include "mgfn/errors.hpp"

namespace mgfn {

FocusParams FocusParams::init(std::size_t in, std::size_t width, std::size_t scc_kernel,
                              std::size_t ffn_mult, ops::SacWindow sac, Rng rng) {
    if (width == 0) {
        throw ConfigError("focus block width must be positive");
    }
    if (!sac.full && sac.width % 2 == 0) {
        throw ConfigError("SAC window must be odd");
    }
    return FocusParams{
        ConvLayer::init(in, width, 1, rng.split("expand")),
        ConvLayer::init(width, width, scc_kernel, rng.split("scc")),
        FeedForward::init(width, ffn_mult, rng.split("ffn")),
        sac,
    };
}

void FocusParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    expand.collect(prefix + ".expand", out);
    scc.collect(prefix + ".scc", out);
    ffn.collect(prefix + ".ffn", out);
}

Tensor sac(Tape& tape, const Tensor& x, const ops::SacWindow& window) {
    return ops::sac(tape, x, window);
}

Tensor focus_forward(Tape& tape, const Tensor& features, const FocusParams& params) {
    if (features.rank() != 4 || features.dim(3) != params.expand.weight.dim(1)) {
        throw DimensionError("focus: input " + shape_str(features.shape()) + " does not have " +
                             std::to_string(params.expand.weight.dim(1)) + " channels");
    }
    auto x = params.expand(tape, features);
    x = ops::add(tape, x, params.scc(tape, x));
    x = ops::add(tape, x, mgfn::sac(tape, x, params.sac));
    x = ops::add(tape, x, params.ffn(tape, x));
    return x;
}

}  // namespace mgfn
