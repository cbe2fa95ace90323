// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mgfn/layers.hpp"
#include "mgfn/ops.hpp"

namespace mgfn {

/// Local stage: channel expansion, short-cut convolution, weight-free
/// self-attentional convolution over channel neighbourhoods, feed-forward.
struct FocusParams {
    ConvLayer expand;  ///< Cin -> D, K = 1
    ConvLayer scc;     ///< D -> D, K = 3
    FeedForward ffn;
    ops::SacWindow sac;

    static FocusParams init(std::size_t in, std::size_t width, std::size_t scc_kernel,
                            std::size_t ffn_mult, ops::SacWindow sac, Rng rng);
    std::size_t width() const { return expand.weight.dim(0); }
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Self-attentional convolution at every (video, clip, crop) position.
Tensor sac(Tape& tape, const Tensor& x, const ops::SacWindow& window);

/// x = expand(F); x += scc(x); x += sac(x); x += ffn(x).
Tensor focus_forward(Tape& tape, const Tensor& features, const FocusParams& params);

}  // namespace mgfn
