// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mgfn/layers.hpp"

namespace mgfn {

/// Feature amplification: re-injects each clip's feature magnitude as a
/// convolution-modulated residual.
struct FamParams {
    Tensor kernel;  ///< C x 1 x K_fam, convolves magnitudes along the clip axis
    Tensor bias;    ///< C
    double alpha = 0.1;

    /// kernel ~ U(-1/sqrt(K_fam), 1/sqrt(K_fam)), bias = 0. K_fam must be odd.
    static FamParams init(std::size_t channels, std::size_t kernel_size, double alpha, Rng rng);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Per-crop L2 norm over channels: B x T x P x C -> B x T x P x 1.
Tensor magnitude(Tape& tape, const Tensor& features);

/// F + alpha * Conv1D(magnitude(F)); the 1 -> C convolution runs along T
/// for each crop, so the output shape equals the input shape.
Tensor amplify(Tape& tape, const Tensor& features, const FamParams& params);

}  // namespace mgfn
