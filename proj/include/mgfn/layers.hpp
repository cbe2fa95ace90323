// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "mgfn/rng.hpp"
#include "mgfn/tensor.hpp"

namespace mgfn {

/// Convolution along the clip axis of a B x T x P x C map ("same" padding).
struct ConvLayer {
    Tensor weight;  ///< Cout x Cin x K
    Tensor bias;    ///< Cout
    std::size_t padding = 0;

    /// weight ~ U(-1/sqrt(Cin*K), 1/sqrt(Cin*K)), bias = 0.
    static ConvLayer init(std::size_t in, std::size_t out, std::size_t kernel, Rng rng);
    Tensor operator()(Tape& tape, const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Dense layer over the channel axis.
struct DenseLayer {
    Tensor weight;  ///< Cout x Cin
    Tensor bias;    ///< Cout

    /// weight ~ U(-1/sqrt(Cin), 1/sqrt(Cin)), bias = 0.
    static DenseLayer init(std::size_t in, std::size_t out, Rng rng);
    Tensor operator()(Tape& tape, const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Two dense layers with a GeLU in between: width -> mult*width -> width.
struct FeedForward {
    DenseLayer up;
    DenseLayer down;

    static FeedForward init(std::size_t width, std::size_t mult, Rng rng);
    Tensor operator()(Tape& tape, const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Sets every parameter value to zero (used to build pass-through fixtures).
void zero_params(const std::vector<NamedParam>& params);

}  // namespace mgfn
