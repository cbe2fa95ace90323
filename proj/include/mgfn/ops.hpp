// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mgfn/rng.hpp"
#include "mgfn/tensor.hpp"

/// Differentiable operations over `Tensor`. Every op records its backward
/// closure on the supplied tape when any input requires a gradient.
namespace mgfn::ops {

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);

/// Stride-1 cross-correlation along the length axis of an `L x Cin` input.
/// `kernel` is `Cout x Cin x K`; zero padding on both sides must keep the
/// output length equal to L, i.e. K == 2 * padding + 1.
Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t padding);

/// The same convolution applied along the clip axis of a `B x T x P x Cin`
/// feature map, independently for every (video, crop).
Tensor conv1d_clips(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                    std::size_t padding);

/// Dense layer over the last axis: `weight` is `Cout x Cin`.
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

/// sqrt(sum_c x_c^2) over the last axis, kept as an extent-1 axis.
/// The gradient at the zero vector is defined as 0.
Tensor l2_norm_over_channels(Tape& tape, const Tensor& input);

/// Exact GeLU, x * Phi(x) with Phi the Gaussian CDF.
Tensor gelu(Tape& tape, const Tensor& input);
Tensor sigmoid(Tape& tape, const Tensor& input);

/// Max-subtracted softmax along `axis`.
Tensor softmax(Tape& tape, const Tensor& input, std::size_t axis);

/// Arithmetic mean over `axis`; the axis is removed from the shape.
Tensor mean_axis(Tape& tape, const Tensor& input, std::size_t axis);

Tensor reshape(Tape& tape, const Tensor& input, Shape shape);

/// Inverted dropout with drop probability `p`; identity when p == 0.
Tensor dropout(Tape& tape, const Tensor& input, double p, Rng& rng);

/// A[b,t1,t2,p] = scale * sum_c q[b,t1,p,c] * k[b,t2,p,c] for `B x T x P x D`
/// inputs; computed per crop.
Tensor attention_logits(Tape& tape, const Tensor& query, const Tensor& key, double scale = 1.0);

/// out[b,t1,p,c] = sum_t2 w[b,t1,t2,p] * v[b,t2,p,c].
Tensor attention_apply(Tape& tape, const Tensor& weights, const Tensor& value);

struct SacWindow {
    std::size_t width = 5;  ///< odd channel-window width
    bool full = false;      ///< sum over every channel instead of the window
    bool normalize = false; ///< divide the output by the window width
};

/// Weight-free self-product over a channel neighbourhood of the last axis:
/// out[k1] = sum_{k2 in window(k1)} x[k1] * x[k2], zero padded at the edges.
Tensor sac(Tape& tape, const Tensor& input, SacWindow window);

/// sum_i x_i * w_i against a constant weight vector; returns a scalar.
Tensor dot_const(Tape& tape, const Tensor& input, std::span<const double> weights);
Tensor sum_squares(Tape& tape, const Tensor& input);

/// sum_i weights[i] * terms[i] over scalar tensors.
Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& terms, const std::vector<double>& weights);

/// Backward for `custom`: receives d(root)/d(output) and must add into the
/// gradient buffers of the inputs that require it.
using CustomBackward = std::function<void(std::span<const double> grad_out, std::vector<Tensor>& inputs)>;

/// Records an op whose forward was computed by the caller.
Tensor custom(Tape& tape, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              CustomBackward backward);

struct TopK {
    std::vector<double> values;
    std::vector<std::size_t> indices;
};

/// k largest entries in descending order; ties go to the lower index.
/// Throws ArgumentError when k exceeds the input length.
TopK topk(std::span<const double> input, std::size_t k);
TopK topk(const Tensor& input, std::size_t k);

}  // namespace mgfn::ops
