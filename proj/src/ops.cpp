// SPDX-License-Identifier: Apache-2.0

#include "mgfn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mgfn/errors.hpp"

namespace mgfn::ops {

namespace {

/// Sum that depends only on the multiset of terms: they are added in
/// ascending order (-0 before +0), so permuting the operands of a reduction
/// cannot change a single bit of the result. Used for reductions over the
/// clip axis, where attention must be exactly permutation-equivariant.
double order_free_sum(std::span<double> terms) {
    std::sort(terms.begin(), terms.end(), [](double a, double b) {
        return a < b || (a == b && std::signbit(a) && !std::signbit(b));
    });
    double s = 0.0;
    for (double t : terms) {
        s += t;
    }
    return s;
}

/// Gradient sink for an input, empty when the input is not differentiable.
std::span<double> sink(const Tensor& t) {
    return t.requires_grad() ? t.grad_buffer() : std::span<double>{};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                             std::to_string(rank) + ", got " + shape_str(t.shape()));
    }
}

/// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisView {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i < axis) {
            v.outer *= shape[i];
        } else if (i == axis) {
            v.extent = shape[i];
        } else {
            v.inner *= shape[i];
        }
    }
    return v;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    auto result = Tensor::adopt(a.shape(), std::move(out), tape.wants_grad({&a, &b}));
    if (result.requires_grad()) {
        tape.record({a, b}, result, [a, b, result]() mutable {
            const auto g = result.grad();
            for (auto* t : {&a, &b}) {
                if (auto s = sink(*t); !s.empty()) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        s[i] += g[i];
                    }
                }
            }
        });
    }
    return result;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * factor;
    }
    auto result = Tensor::adopt(a.shape(), std::move(out), tape.wants_grad({&a}));
    if (result.requires_grad()) {
        tape.record({a}, result, [a, result, factor]() mutable {
            const auto g = result.grad();
            auto s = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                s[i] += g[i] * factor;
            }
        });
    }
    return result;
}

Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t padding) {
    require_rank(input, 2, "conv1d", "input");
    auto lifted = reshape(tape, input, {1, input.dim(0), 1, input.dim(1)});
    auto out = conv1d_clips(tape, lifted, kernel, bias, padding);
    return reshape(tape, out, {input.dim(0), kernel.dim(0)});
}

Tensor conv1d_clips(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                    std::size_t padding) {
    require_rank(input, 4, "conv1d", "input");
    require_rank(kernel, 3, "conv1d", "kernel");
    require_rank(bias, 1, "conv1d", "bias");
    const std::size_t batch = input.dim(0), len = input.dim(1), crops = input.dim(2),
                      cin = input.dim(3);
    const std::size_t cout = kernel.dim(0), width = kernel.dim(2);
    if (kernel.dim(1) != cin) {
        throw DimensionError("conv1d: kernel expects " + std::to_string(kernel.dim(1)) +
                             " input channels, input has " + std::to_string(cin));
    }
    if (bias.dim(0) != cout) {
        throw DimensionError("conv1d: bias length " + std::to_string(bias.dim(0)) +
                             " != output channels " + std::to_string(cout));
    }
    if (width != 2 * padding + 1) {
        throw DimensionError("conv1d: kernel size " + std::to_string(width) +
                             " with padding " + std::to_string(padding) +
                             " does not preserve length");
    }

    // Kernel repacked as [K][Cout][Cin] so the channel loop is contiguous.
    std::vector<double> packed(kernel.numel());
    const auto w = kernel.data();
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t j = 0; j < width; ++j) {
                packed[(j * cout + o) * cin + c] = w[(o * cin + c) * width + j];
            }
        }
    }

    const auto x = input.data();
    const auto b = bias.data();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
    std::vector<double> out(batch * len * crops * cout);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t p = 0; p < crops; ++p) {
                double* y = &out[((n * len + t) * crops + p) * cout];
                for (std::size_t o = 0; o < cout; ++o) {
                    double acc = b[o];
                    for (std::size_t j = 0; j < width; ++j) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) {
                            continue;
                        }
                        const double* xs = &x[((n * len + src) * crops + p) * cin];
                        const double* ws = &packed[(j * cout + o) * cin];
                        for (std::size_t c = 0; c < cin; ++c) {
                            acc += ws[c] * xs[c];
                        }
                    }
                    y[o] = acc;
                }
            }
        }
    }

    auto result = Tensor::adopt({batch, len, crops, cout}, std::move(out),
                                tape.wants_grad({&input, &kernel, &bias}));
    if (!result.requires_grad()) {
        return result;
    }
    tape.record({input, kernel, bias}, result,
                [=, input = input, kernel = kernel, bias = bias, packed = std::move(packed)]() mutable {
        const auto g = result.grad();
        const auto xv = input.data();
        auto gx = sink(input);
        auto gw = sink(kernel);
        auto gb = sink(bias);
        std::vector<double> gpacked(gw.empty() ? 0 : packed.size(), 0.0);
        for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t p = 0; p < crops; ++p) {
                    const double* gy = &g[((n * len + t) * crops + p) * cout];
                    for (std::size_t o = 0; o < cout; ++o) {
                        const double go = gy[o];
                        if (!gb.empty()) {
                            gb[o] += go;
                        }
                        if (go == 0.0) {
                            continue;
                        }
                        for (std::size_t j = 0; j < width; ++j) {
                            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) {
                                continue;
                            }
                            const std::size_t base = ((n * len + src) * crops + p) * cin;
                            const std::size_t wbase = (j * cout + o) * cin;
                            if (!gx.empty()) {
                                for (std::size_t c = 0; c < cin; ++c) {
                                    gx[base + c] += go * packed[wbase + c];
                                }
                            }
                            if (!gpacked.empty()) {
                                for (std::size_t c = 0; c < cin; ++c) {
                                    gpacked[wbase + c] += go * xv[base + c];
                                }
                            }
                        }
                    }
                }
            }
        }
        if (!gw.empty()) {
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t c = 0; c < cin; ++c) {
                    for (std::size_t j = 0; j < width; ++j) {
                        gw[(o * cin + c) * width + j] += gpacked[(j * cout + o) * cin + c];
                    }
                }
            }
        }
    });
    return result;
}

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(weight, 2, "linear", "weight");
    require_rank(bias, 1, "linear", "bias");
    if (input.rank() == 0) {
        throw DimensionError("linear: scalar input");
    }
    const std::size_t cin = input.shape().back();
    const std::size_t cout = weight.dim(0);
    if (weight.dim(1) != cin || bias.dim(0) != cout) {
        throw DimensionError("linear: weight " + shape_str(weight.shape()) + " / bias " +
                             shape_str(bias.shape()) + " incompatible with input " +
                             shape_str(input.shape()));
    }
    const std::size_t rows = input.numel() / cin;
    const auto x = input.data();
    const auto w = weight.data();
    const auto b = bias.data();
    std::vector<double> out(rows * cout);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = &x[r * cin];
        for (std::size_t o = 0; o < cout; ++o) {
            const double* wr = &w[o * cin];
            double acc = b[o];
            for (std::size_t c = 0; c < cin; ++c) {
                acc += wr[c] * xr[c];
            }
            out[r * cout + o] = acc;
        }
    }
    Shape shape = input.shape();
    shape.back() = cout;
    auto result = Tensor::adopt(std::move(shape), std::move(out),
                                tape.wants_grad({&input, &weight, &bias}));
    if (!result.requires_grad()) {
        return result;
    }
    tape.record({input, weight, bias}, result,
                [=, input = input, weight = weight, bias = bias]() mutable {
        const auto g = result.grad();
        const auto xv = input.data();
        const auto wv = weight.data();
        auto gx = sink(input);
        auto gw = sink(weight);
        auto gb = sink(bias);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < cout; ++o) {
                const double go = g[r * cout + o];
                if (!gb.empty()) {
                    gb[o] += go;
                }
                if (!gx.empty()) {
                    for (std::size_t c = 0; c < cin; ++c) {
                        gx[r * cin + c] += go * wv[o * cin + c];
                    }
                }
                if (!gw.empty()) {
                    for (std::size_t c = 0; c < cin; ++c) {
                        gw[o * cin + c] += go * xv[r * cin + c];
                    }
                }
            }
        }
    });
    return result;
}

Tensor l2_norm_over_channels(Tape& tape, const Tensor& input) {
    if (input.rank() == 0) {
        throw DimensionError("l2_norm_over_channels: scalar input");
    }
    const std::size_t channels = input.shape().back();
    const std::size_t rows = channels == 0 ? 0 : input.numel() / channels;
    const auto x = input.data();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            ss += x[r * channels + c] * x[r * channels + c];
        }
        out[r] = std::sqrt(ss);
    }
    Shape shape = input.shape();
    shape.back() = 1;
    auto result = Tensor::adopt(std::move(shape), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [=, input = input]() mutable {
            const auto g = result.grad();
            const auto norms = result.data();
            const auto xv = input.data();
            auto gx = input.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                if (norms[r] == 0.0) {
                    continue;
                }
                const double f = g[r] / norms[r];
                for (std::size_t c = 0; c < channels; ++c) {
                    gx[r * channels + c] += f * xv[r * channels + c];
                }
            }
        });
    }
    return result;
}

Tensor gelu(Tape& tape, const Tensor& input) {
    const auto x = input.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    }
    auto result = Tensor::adopt(input.shape(), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result]() mutable {
            const auto g = result.grad();
            const auto xv = input.data();
            auto gx = input.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = xv[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += g[i] * (cdf + v * pdf);
            }
        });
    }
    return result;
}

Tensor sigmoid(Tape& tape, const Tensor& input) {
    const auto x = input.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                             : std::exp(x[i]) / (1.0 + std::exp(x[i]));
    }
    auto result = Tensor::adopt(input.shape(), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result]() mutable {
            const auto g = result.grad();
            const auto y = result.data();
            auto gx = input.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * y[i] * (1.0 - y[i]);
            }
        });
    }
    return result;
}

Tensor softmax(Tape& tape, const Tensor& input, std::size_t axis) {
    if (axis >= input.rank()) {
        throw ArgumentError("softmax: axis " + std::to_string(axis) + " out of range for " +
                            shape_str(input.shape()));
    }
    const auto v = axis_view(input.shape(), axis);
    const auto x = input.data();
    std::vector<double> out(x.size());
    std::vector<double> terms(v.extent);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.extent * v.inner + i;
            double mx = x[base];
            for (std::size_t a = 1; a < v.extent; ++a) {
                mx = std::max(mx, x[base + a * v.inner]);
            }
            for (std::size_t a = 0; a < v.extent; ++a) {
                const double e = std::exp(x[base + a * v.inner] - mx);
                out[base + a * v.inner] = e;
                terms[a] = e;
            }
            const double total = order_free_sum(terms);
            for (std::size_t a = 0; a < v.extent; ++a) {
                out[base + a * v.inner] /= total;
            }
        }
    }
    auto result = Tensor::adopt(input.shape(), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result, v]() mutable {
            const auto g = result.grad();
            const auto y = result.data();
            auto gx = input.grad_buffer();
            for (std::size_t o = 0; o < v.outer; ++o) {
                for (std::size_t i = 0; i < v.inner; ++i) {
                    const std::size_t base = o * v.extent * v.inner + i;
                    double dot = 0.0;
                    for (std::size_t a = 0; a < v.extent; ++a) {
                        dot += g[base + a * v.inner] * y[base + a * v.inner];
                    }
                    for (std::size_t a = 0; a < v.extent; ++a) {
                        const std::size_t at = base + a * v.inner;
                        gx[at] += y[at] * (g[at] - dot);
                    }
                }
            }
        });
    }
    return result;
}

Tensor mean_axis(Tape& tape, const Tensor& input, std::size_t axis) {
    if (axis >= input.rank()) {
        throw ArgumentError("mean_axis: axis " + std::to_string(axis) + " out of range for " +
                            shape_str(input.shape()));
    }
    const auto v = axis_view(input.shape(), axis);
    if (v.extent == 0) {
        throw DimensionError("mean_axis: empty axis");
    }
    const auto x = input.data();
    std::vector<double> out(v.outer * v.inner, 0.0);
    const double inv = 1.0 / static_cast<double>(v.extent);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t a = 0; a < v.extent; ++a) {
            for (std::size_t i = 0; i < v.inner; ++i) {
                out[o * v.inner + i] += x[(o * v.extent + a) * v.inner + i];
            }
        }
    }
    for (auto& value : out) {
        value *= inv;
    }
    Shape shape = input.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    auto result = Tensor::adopt(std::move(shape), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result, v, inv]() mutable {
            const auto g = result.grad();
            auto gx = input.grad_buffer();
            for (std::size_t o = 0; o < v.outer; ++o) {
                for (std::size_t a = 0; a < v.extent; ++a) {
                    for (std::size_t i = 0; i < v.inner; ++i) {
                        gx[(o * v.extent + a) * v.inner + i] += g[o * v.inner + i] * inv;
                    }
                }
            }
        });
    }
    return result;
}

Tensor reshape(Tape& tape, const Tensor& input, Shape shape) {
    if (shape_numel(shape) != input.numel()) {
        throw DimensionError("reshape: " + shape_str(input.shape()) + " -> " + shape_str(shape));
    }
    auto result = Tensor::adopt(std::move(shape), input.values(), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result]() mutable {
            const auto g = result.grad();
            auto gx = input.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i];
            }
        });
    }
    return result;
}

Tensor dropout(Tape& tape, const Tensor& input, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ArgumentError("dropout: probability must lie in [0, 1)");
    }
    if (p == 0.0) {
        return input;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(input.numel());
    std::vector<double> out(input.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
        out[i] = input[i] * mask[i];
    }
    auto result = Tensor::adopt(input.shape(), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result, mask = std::move(mask)]() mutable {
            const auto g = result.grad();
            auto gx = input.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * mask[i];
            }
        });
    }
    return result;
}

Tensor attention_logits(Tape& tape, const Tensor& query, const Tensor& key, double scale) {
    require_rank(query, 4, "attention_logits", "query");
    require_same_shape(query, key, "attention_logits");
    const std::size_t batch = query.dim(0), clips = query.dim(1), crops = query.dim(2),
                      width = query.dim(3);
    const auto q = query.data();
    const auto k = key.data();
    auto qi = [&](std::size_t n, std::size_t t, std::size_t p) {
        return ((n * clips + t) * crops + p) * width;
    };
    auto ai = [=](std::size_t n, std::size_t t1, std::size_t t2, std::size_t p) {
        return ((n * clips + t1) * clips + t2) * crops + p;
    };
    std::vector<double> out(batch * clips * clips * crops);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t t1 = 0; t1 < clips; ++t1) {
            for (std::size_t t2 = 0; t2 < clips; ++t2) {
                for (std::size_t p = 0; p < crops; ++p) {
                    const double* a = &q[qi(n, t1, p)];
                    const double* b = &k[qi(n, t2, p)];
                    double acc = 0.0;
                    for (std::size_t c = 0; c < width; ++c) {
                        acc += a[c] * b[c];
                    }
                    out[ai(n, t1, t2, p)] = scale * acc;
                }
            }
        }
    }
    auto result = Tensor::adopt({batch, clips, clips, crops}, std::move(out),
                                tape.wants_grad({&query, &key}));
    if (result.requires_grad()) {
        tape.record({query, key}, result, [=, query = query, key = key]() mutable {
            const auto g = result.grad();
            const auto qv = query.data();
            const auto kv = key.data();
            auto gq = sink(query);
            auto gk = sink(key);
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t t1 = 0; t1 < clips; ++t1) {
                    for (std::size_t t2 = 0; t2 < clips; ++t2) {
                        for (std::size_t p = 0; p < crops; ++p) {
                            const double ga = scale * g[ai(n, t1, t2, p)];
                            const std::size_t i1 = ((n * clips + t1) * crops + p) * width;
                            const std::size_t i2 = ((n * clips + t2) * crops + p) * width;
                            for (std::size_t c = 0; c < width; ++c) {
                                if (!gq.empty()) {
                                    gq[i1 + c] += ga * kv[i2 + c];
                                }
                                if (!gk.empty()) {
                                    gk[i2 + c] += ga * qv[i1 + c];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return result;
}

Tensor attention_apply(Tape& tape, const Tensor& weights, const Tensor& value) {
    require_rank(weights, 4, "attention_apply", "weights");
    require_rank(value, 4, "attention_apply", "value");
    const std::size_t batch = value.dim(0), clips = value.dim(1), crops = value.dim(2),
                      width = value.dim(3);
    if (weights.shape() != Shape{batch, clips, clips, crops}) {
        throw DimensionError("attention_apply: weights " + shape_str(weights.shape()) +
                             " do not match value " + shape_str(value.shape()));
    }
    const auto a = weights.data();
    const auto v = value.data();
    std::vector<double> out(value.numel(), 0.0);
    std::vector<double> terms(clips * width);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t t1 = 0; t1 < clips; ++t1) {
            for (std::size_t p = 0; p < crops; ++p) {
                double* y = &out[((n * clips + t1) * crops + p) * width];
                // terms laid out [c][t2] so each output sums a contiguous run
                for (std::size_t t2 = 0; t2 < clips; ++t2) {
                    const double w = a[((n * clips + t1) * clips + t2) * crops + p];
                    const double* src = &v[((n * clips + t2) * crops + p) * width];
                    for (std::size_t c = 0; c < width; ++c) {
                        terms[c * clips + t2] = w * src[c];
                    }
                }
                for (std::size_t c = 0; c < width; ++c) {
                    y[c] = order_free_sum(std::span(terms).subspan(c * clips, clips));
                }
            }
        }
    }
    auto result = Tensor::adopt(value.shape(), std::move(out), tape.wants_grad({&weights, &value}));
    if (result.requires_grad()) {
        tape.record({weights, value}, result, [=, weights = weights, value = value]() mutable {
            const auto g = result.grad();
            const auto av = weights.data();
            const auto vv = value.data();
            auto ga = sink(weights);
            auto gv = sink(value);
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t t1 = 0; t1 < clips; ++t1) {
                    for (std::size_t p = 0; p < crops; ++p) {
                        const double* gy = &g[((n * clips + t1) * crops + p) * width];
                        for (std::size_t t2 = 0; t2 < clips; ++t2) {
                            const std::size_t wi = ((n * clips + t1) * clips + t2) * crops + p;
                            const std::size_t vi = ((n * clips + t2) * crops + p) * width;
                            if (!ga.empty()) {
                                double acc = 0.0;
                                for (std::size_t c = 0; c < width; ++c) {
                                    acc += gy[c] * vv[vi + c];
                                }
                                ga[wi] += acc;
                            }
                            if (!gv.empty()) {
                                for (std::size_t c = 0; c < width; ++c) {
                                    gv[vi + c] += av[wi] * gy[c];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return result;
}

Tensor sac(Tape& tape, const Tensor& input, SacWindow window) {
    if (input.rank() == 0) {
        throw DimensionError("sac: scalar input");
    }
    if (!window.full && window.width % 2 == 0) {
        throw ArgumentError("sac: window width must be odd, got " + std::to_string(window.width));
    }
    const std::size_t channels = input.shape().back();
    const std::size_t rows = channels == 0 ? 0 : input.numel() / channels;
    const std::size_t half = window.full ? channels : window.width / 2;
    const double norm = !window.normalize ? 1.0
                        : window.full     ? 1.0 / static_cast<double>(channels)
                                          : 1.0 / static_cast<double>(window.width);
    auto lo_of = [=](std::size_t k) { return k >= half ? k - half : 0; };
    auto hi_of = [=](std::size_t k) { return std::min(channels, k + half + 1); };

    const auto x = input.data();
    // window_sum[r, k] = sum of x over the window around k
    std::vector<double> window_sum(input.numel());
    std::vector<double> out(input.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = &x[r * channels];
        for (std::size_t k = 0; k < channels; ++k) {
            double s = 0.0;
            for (std::size_t j = lo_of(k); j < hi_of(k); ++j) {
                s += xr[j];
            }
            window_sum[r * channels + k] = s;
            out[r * channels + k] = norm * xr[k] * s;
        }
    }
    auto result = Tensor::adopt(input.shape(), std::move(out), tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result,
                    [=, input = input, window_sum = std::move(window_sum)]() mutable {
            const auto g = result.grad();
            const auto xv = input.data();
            auto gx = input.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t base = r * channels;
                for (std::size_t j = 0; j < channels; ++j) {
                    // Windows are symmetric: k1 covers j iff j covers k1.
                    double cross = 0.0;
                    for (std::size_t k1 = lo_of(j); k1 < hi_of(j); ++k1) {
                        cross += g[base + k1] * xv[base + k1];
                    }
                    gx[base + j] += norm * (g[base + j] * window_sum[base + j] + cross);
                }
            }
        });
    }
    return result;
}

Tensor dot_const(Tape& tape, const Tensor& input, std::span<const double> weights) {
    if (weights.size() != input.numel()) {
        throw DimensionError("dot_const: weight count differs from input size");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += input[i] * weights[i];
    }
    auto result = Tensor::adopt({}, {acc}, tape.wants_grad({&input}));
    if (result.requires_grad()) {
        std::vector<double> w(weights.begin(), weights.end());
        tape.record({input}, result, [input, result, w = std::move(w)]() mutable {
            const double g = result.grad()[0];
            auto gx = input.grad_buffer();
            for (std::size_t i = 0; i < w.size(); ++i) {
                gx[i] += g * w[i];
            }
        });
    }
    return result;
}

Tensor sum_squares(Tape& tape, const Tensor& input) {
    double acc = 0.0;
    for (double v : input.data()) {
        acc += v * v;
    }
    auto result = Tensor::adopt({}, {acc}, tape.wants_grad({&input}));
    if (result.requires_grad()) {
        tape.record({input}, result, [input, result]() mutable {
            const double g = result.grad()[0];
            const auto xv = input.data();
            auto gx = input.grad_buffer();
            for (std::size_t i = 0; i < xv.size(); ++i) {
                gx[i] += 2.0 * g * xv[i];
            }
        });
    }
    return result;
}

Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& terms, const std::vector<double>& weights) {
    if (terms.size() != weights.size()) {
        throw ArgumentError("weighted_sum: term and weight counts differ");
    }
    double acc = 0.0;
    bool grad = false;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        acc += weights[i] * terms[i].item();
        grad = grad || tape.wants_grad({&terms[i]});
    }
    auto result = Tensor::adopt({}, {acc}, grad);
    if (grad) {
        tape.record(terms, result, [terms, weights, result]() mutable {
            const double g = result.grad()[0];
            for (std::size_t i = 0; i < terms.size(); ++i) {
                if (terms[i].requires_grad()) {
                    terms[i].grad_buffer()[0] += g * weights[i];
                }
            }
        });
    }
    return result;
}

Tensor custom(Tape& tape, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              CustomBackward backward) {
    bool grad = false;
    for (const auto& in : inputs) {
        grad = grad || tape.wants_grad({&in});
    }
    auto result = Tensor::adopt(std::move(shape), std::move(values), grad);
    if (grad) {
        tape.record(inputs, result, [inputs, result, backward = std::move(backward)]() mutable {
            backward(result.grad(), inputs);
        });
    }
    return result;
}

TopK topk(std::span<const double> input, std::size_t k) {
    if (k > input.size()) {
        throw ArgumentError("topk: k=" + std::to_string(k) + " exceeds length " +
                            std::to_string(input.size()));
    }
    std::vector<std::size_t> order(input.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return input[a] > input[b] || (input[a] == input[b] && a < b);
                      });
    TopK result;
    result.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    for (auto i : result.indices) {
        result.values.push_back(input[i]);
    }
    return result;
}

TopK topk(const Tensor& input, std::size_t k) {
    if (input.rank() != 1) {
        throw DimensionError("topk: expects a rank-1 tensor, got " + shape_str(input.shape()));
    }
    return topk(input.data(), k);
}

}  // namespace mgfn::ops
