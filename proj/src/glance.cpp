// SPDX-License-Identifier: Apache-2.0

#include "mgfn/glance.hpp"

#include <cmath>

#include "mgfn/errors.hpp"
#include "mgfn/ops.hpp"

namespace mgfn {

GlanceParams GlanceParams::init(std::size_t in, std::size_t width, std::size_t scc_kernel,
                                std::size_t ffn_mult, bool scale_attention, Rng rng) {
    if (width == 0) {
        throw ConfigError("glance block width must be positive");
    }
    return GlanceParams{
        ConvLayer::init(in, width, 1, rng.split("reduce")),
        ConvLayer::init(width, width, scc_kernel, rng.split("scc")),
        ConvLayer::init(width, width, 1, rng.split("query")),
        ConvLayer::init(width, width, 1, rng.split("key")),
        ConvLayer::init(width, width, 1, rng.split("value")),
        FeedForward::init(width, ffn_mult, rng.split("ffn")),
        scale_attention,
    };
}

void GlanceParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    reduce.collect(prefix + ".reduce", out);
    scc.collect(prefix + ".scc", out);
    query.collect(prefix + ".query", out);
    key.collect(prefix + ".key", out);
    value.collect(prefix + ".value", out);
    ffn.collect(prefix + ".ffn", out);
}

Tensor attention_logits(Tape& tape, const Tensor& x, const GlanceParams& params) {
    const double scale =
        params.scale_attention ? 1.0 / std::sqrt(static_cast<double>(params.width())) : 1.0;
    return ops::attention_logits(tape, params.query(tape, x), params.key(tape, x), scale);
}

Tensor attention_weights(Tape& tape, const Tensor& logits) {
    return ops::softmax(tape, logits, 2);
}

Tensor vct(Tape& tape, const Tensor& x, const GlanceParams& params) {
    const auto weights = attention_weights(tape, attention_logits(tape, x, params));
    return ops::attention_apply(tape, weights, params.value(tape, x));
}

Tensor glance_forward(Tape& tape, const Tensor& features, const GlanceParams& params) {
    if (features.rank() != 4 || features.dim(3) != params.reduce.weight.dim(1)) {
        throw DimensionError("glance: input " + shape_str(features.shape()) + " does not have " +
                             std::to_string(params.reduce.weight.dim(1)) + " channels");
    }
    auto x = params.reduce(tape, features);
    x = ops::add(tape, x, params.scc(tape, x));
    x = ops::add(tape, x, vct(tape, x, params));
    x = ops::add(tape, x, params.ffn(tape, x));
    return x;
}

}  // namespace mgfn
