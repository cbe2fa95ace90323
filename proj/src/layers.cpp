// SPDX-License-Identifier: Apache-2.0

#include "mgfn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "mgfn/ops.hpp"

namespace mgfn {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = rng.uniform(-bound, bound);
    }
    return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

ConvLayer ConvLayer::init(std::size_t in, std::size_t out, std::size_t kernel, Rng rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    return ConvLayer{uniform_tensor({out, in, kernel}, bound, rng), Tensor::zeros({out}, true),
                     kernel / 2};
}

Tensor ConvLayer::operator()(Tape& tape, const Tensor& x) const {
    return ops::conv1d_clips(tape, x, weight, bias, padding);
}

void ConvLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

DenseLayer DenseLayer::init(std::size_t in, std::size_t out, Rng rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return DenseLayer{uniform_tensor({out, in}, bound, rng), Tensor::zeros({out}, true)};
}

Tensor DenseLayer::operator()(Tape& tape, const Tensor& x) const {
    return ops::linear(tape, x, weight, bias);
}

void DenseLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

FeedForward FeedForward::init(std::size_t width, std::size_t mult, Rng rng) {
    return FeedForward{DenseLayer::init(width, mult * width, rng.split("up")),
                       DenseLayer::init(mult * width, width, rng.split("down"))};
}

Tensor FeedForward::operator()(Tape& tape, const Tensor& x) const {
    return down(tape, ops::gelu(tape, up(tape, x)));
}

void FeedForward::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    up.collect(prefix + ".up", out);
    down.collect(prefix + ".down", out);
}

void zero_params(const std::vector<NamedParam>& params) {
    for (auto p : params) {
        auto d = p.tensor.mutable_data();
        std::fill(d.begin(), d.end(), 0.0);
    }
}

}  // namespace mgfn
