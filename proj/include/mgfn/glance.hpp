// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mgfn/layers.hpp"

namespace mgfn {

/// Global stage: channel reduction, short-cut convolution, clip-level
/// attention across all T clips of each video (per crop), feed-forward.
struct GlanceParams {
    ConvLayer reduce;  ///< Cin -> D, K = 1
    ConvLayer scc;     ///< D -> D, K = 3
    ConvLayer query;   ///< D -> D, K = 1
    ConvLayer key;
    ConvLayer value;
    FeedForward ffn;
    bool scale_attention = false;  ///< multiply logits by 1/sqrt(D)

    static GlanceParams init(std::size_t in, std::size_t width, std::size_t scc_kernel,
                             std::size_t ffn_mult, bool scale_attention, Rng rng);
    std::size_t width() const { return reduce.weight.dim(0); }
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// A[b,t1,t2,p] = sum_c Q(x)[b,t1,p,c] * K(x)[b,t2,p,c]; x is B x T x P x D.
Tensor attention_logits(Tape& tape, const Tensor& x, const GlanceParams& params);

/// Softmax of the logits over t2: each (b, t1, :, p) row is a distribution.
Tensor attention_weights(Tape& tape, const Tensor& logits);

/// Clip-level transformer: out[b,t1,p,:] = sum_t2 a[b,t1,t2,p] * V(x)[b,t2,p,:].
Tensor vct(Tape& tape, const Tensor& x, const GlanceParams& params);

/// x = reduce(F); x += scc(x); x += vct(x); x += ffn(x).
Tensor glance_forward(Tape& tape, const Tensor& features, const GlanceParams& params);

}  // namespace mgfn
