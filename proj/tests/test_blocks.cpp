// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mgfn/errors.hpp"
#include "mgfn/fam.hpp"
#include "mgfn/focus.hpp"
#include "mgfn/glance.hpp"
#include "mgfn/grad_check.hpp"
#include "mgfn/model.hpp"
#include "mgfn/ops.hpp"
#include "mgfn/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mgfn;
using mgfn::test::random_tensor;

namespace {

void set_identity(ConvLayer& layer) {
    auto w = layer.weight.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    const std::size_t out = layer.weight.dim(0), in = layer.weight.dim(1), k = layer.weight.dim(2);
    for (std::size_t i = 0; i < std::min(out, in); ++i) {
        w[(i * in + i) * k + k / 2] = 1.0;
    }
}

/// Copy of `x` (B x T x P x D) with clips reordered by `perm`.
Tensor permute_clips(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t b = x.dim(0), t = x.dim(1), row = x.dim(2) * x.dim(3);
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            std::copy_n(&x.data()[(i * t + perm[j]) * row], row, &out[(i * t + j) * row]);
        }
    }
    return Tensor::from(x.shape(), std::move(out));
}

ArchitectureDescriptor micro_arch(BlockOrder order) {
    ArchitectureDescriptor a;
    a.block_order = order;
    a.channels = 64;
    a.clips = 4;
    a.crops = 2;
    return a;
}

}  // namespace

TEST_SUITE("fam") {

TEST_CASE("magnitude: unit vectors, Pythagoras and oracle") {
    Tape tape;
    std::vector<double> v(8, 0.0);
    v[5] = 1.0;
    CHECK(magnitude(tape, Tensor::from({1, 1, 1, 8}, v))[0] == 1.0);
    std::vector<double> p(8, 0.0);
    p[0] = 3.0;
    p[1] = 4.0;
    CHECK(magnitude(tape, Tensor::from({1, 1, 1, 8}, p))[0] == 5.0);

    Rng rng(0);
    auto f = random_tensor({1, 4, 2, 8}, rng);
    auto m = magnitude(tape, f);
    CHECK(m.shape() == Shape{1, 4, 2, 1});
    for (std::size_t i = 0; i < 8; ++i) {
        double sq = 0.0;
        for (std::size_t c = 0; c < 8; ++c) {
            sq += f[i * 8 + c] * f[i * 8 + c];
        }
        CHECK(std::abs(m[i] - std::sqrt(sq)) < 1e-14);
    }
}

TEST_CASE("magnitude is invariant to channel permutation") {
    Tape tape;
    Rng rng(1);
    auto f = random_tensor({2, 3, 2, 16}, rng);
    std::vector<std::size_t> perm(16);
    for (std::size_t i = 0; i < 16; ++i) {
        perm[i] = (i * 7 + 3) % 16;
    }
    std::vector<double> g(f.numel());
    for (std::size_t row = 0; row < f.numel() / 16; ++row) {
        for (std::size_t c = 0; c < 16; ++c) {
            g[row * 16 + c] = f[row * 16 + perm[c]];
        }
    }
    auto a = magnitude(tape, f);
    auto b = magnitude(tape, Tensor::from(f.shape(), g));
    CHECK(test::max_abs_diff(a.values(), b.values()) < 1e-13);
}

TEST_CASE("amplify: degenerate cases and composed oracle") {
    Tape tape;
    Rng rng(0);
    auto f = random_tensor({1, 4, 1, 3}, rng);

    auto p0 = FamParams::init(3, 3, 0.0, Rng(0));
    CHECK(amplify(tape, f, p0).values() == f.values());

    auto zero = FamParams::init(3, 3, 0.1, Rng(0));
    auto z = amplify(tape, Tensor::zeros({1, 4, 1, 3}), zero);
    for (double v : z.values()) {
        CHECK(v == 0.0);
    }

    auto params = FamParams::init(3, 3, 0.1, Rng(0).split("fam"));
    Rng brng(9);
    auto bias = params.bias.mutable_data();
    for (auto& b : bias) {
        b = brng.normal();
    }
    auto out = amplify(tape, f, params);
    // magnitude -> conv1d(1 -> C) along T -> scale -> add
    std::vector<double> mags(4);
    for (std::size_t t = 0; t < 4; ++t) {
        double sq = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            sq += f[t * 3 + c] * f[t * 3 + c];
        }
        mags[t] = std::sqrt(sq);
    }
    const auto conv = oracle::conv1d(mags, 4, 1, params.kernel.values(), 3, 3, params.bias.values(), 1);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(std::abs(out[i] - (f[i] + 0.1 * conv[i])) < 1e-14);
    }
}

TEST_CASE("amplify: shape preservation and alpha-linearity over shape sweeps") {
    Rng rng(5);
    for (std::size_t c : {32u, 64u, 128u}) {
        for (int trial = 0; trial < 8; ++trial) {
            const std::size_t b = 1 + rng.below(4), t = 1 + rng.below(8), p = 1 + rng.below(4);
            Tape tape;
            auto f = random_tensor({b, t, p, c}, rng);
            const double a = 0.05 + rng.uniform();
            auto pa = FamParams::init(c, 3, a, rng.split(static_cast<std::uint64_t>(trial)));
            auto p2 = pa;
            p2.alpha = 2.0 * a;
            auto ya = amplify(tape, f, pa);
            auto y2 = amplify(tape, f, p2);
            CHECK(ya.shape() == f.shape());
            double worst = 0.0;
            for (std::size_t i = 0; i < f.numel(); ++i) {
                worst = std::max(worst, std::abs((y2[i] - f[i]) - 2.0 * (ya[i] - f[i])) /
                                            std::max(1.0, std::abs(y2[i])));
            }
            CHECK(worst < 1e-12);
        }
    }
}

TEST_CASE("amplify gradients") {
    Rng rng(2);
    auto f = random_tensor({2, 4, 2, 8}, rng, true);
    auto params = FamParams::init(8, 3, 0.3, rng.split("p"));
    params.kernel = params.kernel.clone(true);
    params.bias = random_tensor({8}, rng, true);
    std::vector<double> w = test::normals(f.numel(), rng);
    auto report = grad_check([&](Tape& t) { return ops::dot_const(t, amplify(t, f, params), w); },
                             {{"f", f}, {"kernel", params.kernel}, {"bias", params.bias}});
    CHECK(report.passed);
    CHECK_THROWS_AS(FamParams::init(8, 2, 0.1, Rng(0)), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("glance") {

TEST_CASE("attention logits: Gram of orthonormal clips, zero input, oracle") {
    auto g = GlanceParams::init(4, 4, 3, 4, false, Rng(0));
    set_identity(g.query);
    set_identity(g.key);
    Tape tape;
    // three orthonormal rows in R^4
    auto x = Tensor::from({1, 3, 1, 4}, {1, 0, 0, 0, 0, 0.6, 0.8, 0, 0, 0.8, -0.6, 0});
    auto a = attention_logits(tape, x, g);
    CHECK(a.shape() == Shape{1, 3, 3, 1});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(a[i * 3 + j] - (i == j ? 1.0 : 0.0)) < 1e-15);
        }
    }
    auto zero = attention_logits(tape, Tensor::zeros({1, 3, 1, 4}), g);
    for (double v : zero.values()) {
        CHECK(v == 0.0);
    }

    Rng rng(0);
    auto r = GlanceParams::init(4, 4, 3, 4, false, rng.split("g"));
    auto xr = random_tensor({1, 3, 1, 4}, rng);
    auto ar = attention_logits(tape, xr, r);
    // Q and K are K=1 convolutions: per-clip matrix products
    auto proj = [&](const ConvLayer& l, std::size_t t, std::size_t c) {
        double s = l.bias[c];
        for (std::size_t i = 0; i < 4; ++i) {
            s += l.weight[c * 4 + i] * xr[t * 4 + i];
        }
        return s;
    };
    for (std::size_t t1 = 0; t1 < 3; ++t1) {
        for (std::size_t t2 = 0; t2 < 3; ++t2) {
            double dot = 0.0;
            for (std::size_t c = 0; c < 4; ++c) {
                dot += proj(r.query, t1, c) * proj(r.key, t2, c);
            }
            CHECK(std::abs(ar[t1 * 3 + t2] - dot) < 1e-12);
        }
    }
}

TEST_CASE("attention weights: uniform, saturated, rows sum to one") {
    Tape tape;
    auto u = attention_weights(tape, Tensor::zeros({1, 4, 4, 2}));
    for (double v : u.values()) {
        CHECK(v == 0.25);
    }
    std::vector<double> logits(1 * 3 * 3 * 1, 0.0);
    logits[0 * 3 + 1] = 50.0;
    auto s = attention_weights(tape, Tensor::from({1, 3, 3, 1}, logits));
    CHECK(std::abs(s[1] - 1.0) < 1e-9);

    Rng rng(0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 1 + rng.below(8), p = 1 + rng.below(3);
        auto w = attention_weights(tape, random_tensor({2, t, t, p}, rng, false, 10.0));
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t t1 = 0; t1 < t; ++t1) {
                for (std::size_t q = 0; q < p; ++q) {
                    double sum = 0.0;
                    for (std::size_t t2 = 0; t2 < t; ++t2) {
                        const double a = w[((b * t + t1) * t + t2) * p + q];
                        CHECK(a >= 0.0);
                        sum += a;
                    }
                    CHECK(std::abs(sum - 1.0) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("vct: single clip, identical clips, explicit sum") {
    Rng rng(0);
    auto g = GlanceParams::init(4, 4, 3, 4, false, rng.split("g"));
    Tape tape;
    auto one = random_tensor({2, 1, 2, 4}, rng);
    CHECK(test::max_abs_diff(vct(tape, one, g).values(), g.value(tape, one).values()) < 1e-15);

    auto id = g;
    id.value = ConvLayer::init(4, 4, 1, Rng(0));
    set_identity(id.value);
    std::vector<double> row = test::normals(4, rng);
    std::vector<double> same;
    for (int i = 0; i < 5; ++i) {
        same.insert(same.end(), row.begin(), row.end());
    }
    auto xs = Tensor::from({1, 5, 1, 4}, same);
    CHECK(test::max_abs_diff(vct(tape, xs, id).values(), xs.values()) < 1e-14);

    auto x = random_tensor({1, 3, 2, 4}, rng);
    auto out = vct(tape, x, g);
    auto a = attention_weights(tape, attention_logits(tape, x, g));
    auto v = g.value(tape, x);
    for (std::size_t t1 = 0; t1 < 3; ++t1) {
        for (std::size_t p = 0; p < 2; ++p) {
            for (std::size_t c = 0; c < 4; ++c) {
                double s = 0.0;
                for (std::size_t t2 = 0; t2 < 3; ++t2) {
                    s += a[(t1 * 3 + t2) * 2 + p] * v[(t2 * 2 + p) * 4 + c];
                }
                CHECK(std::abs(out[(t1 * 2 + p) * 4 + c] - s) < 1e-13);
            }
        }
    }
}

TEST_CASE("vct is exactly equivariant to clip permutation") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 2 + rng.below(7);
        auto g = GlanceParams::init(8, 8, 3, 4, false, rng.split(static_cast<std::uint64_t>(trial)));
        auto x = random_tensor({2, t, 2, 8}, rng);
        std::vector<std::size_t> perm(t);
        for (std::size_t i = 0; i < t; ++i) {
            perm[i] = i;
        }
        for (std::size_t i = t - 1; i > 0; --i) {
            std::swap(perm[i], perm[rng.below(i + 1)]);
        }
        Tape tape;
        auto lhs = vct(tape, permute_clips(x, perm), g);
        auto rhs = permute_clips(vct(tape, x, g), perm);
        CHECK(lhs.values() == rhs.values());
    }
}

TEST_CASE("glance_forward: zero residues and output shape") {
    Rng rng(0);
    auto g = GlanceParams::init(64, 2, 3, 4, false, rng.split("g"));
    std::vector<NamedParam> residues;
    g.scc.collect("scc", residues);
    g.query.collect("q", residues);
    g.key.collect("k", residues);
    g.value.collect("v", residues);
    g.ffn.collect("ffn", residues);
    zero_params(residues);
    Tape tape;
    auto f = random_tensor({2, 4, 2, 64}, rng);
    auto out = glance_forward(tape, f, g);
    CHECK(out.shape() == Shape{2, 4, 2, 2});
    CHECK(out.values() == g.reduce(tape, f).values());
}

TEST_CASE("glance_forward gradient on the micro dims") {
    Rng rng(0);
    auto g = GlanceParams::init(64, 2, 3, 4, false, rng.split("g"));
    auto f = random_tensor({1, 4, 2, 64}, rng, true);
    std::vector<NamedParam> params{{"f", f}};
    g.collect("glance", params);
    for (const auto& p : params) {
        CHECK(p.tensor.requires_grad());
    }
    auto w = test::normals(1 * 4 * 2 * 2, rng);
    auto report = grad_check([&](Tape& t) { return ops::dot_const(t, glance_forward(t, f, g), w); }, params);
    CHECK(report.passed);
}

}  // TEST_SUITE

TEST_SUITE("focus") {

TEST_CASE("sac: window-product oracle, quadratic law, locality") {
    Rng rng(0);
    Tape tape;
    auto x = random_tensor({2, 3, 2, 8}, rng);
    auto y = mgfn::sac(tape, x, {});
    for (std::size_t r = 0; r < 12; ++r) {
        std::vector<double> row(&x.data()[r * 8], &x.data()[r * 8] + 8);
        const auto expect = oracle::sac(row, 5);
        for (std::size_t k = 0; k < 8; ++k) {
            CHECK(std::abs(y[r * 8 + k] - expect[k]) < 1e-12);
        }
    }

    for (double lambda : {2.0, 0.5, -4.0}) {
        auto scaled = mgfn::sac(tape, ops::scale(tape, x, lambda), {});
        for (std::size_t i = 0; i < x.numel(); ++i) {
            CHECK(scaled[i] == lambda * lambda * y[i]);
        }
    }
    const double lambda = -1.37;
    auto scaled = mgfn::sac(tape, ops::scale(tape, x, lambda), {});
    for (std::size_t i = 0; i < x.numel(); ++i) {
        CHECK(std::abs(scaled[i] - lambda * lambda * y[i]) <= 1e-12 * std::max(1.0, std::abs(y[i])));
    }

    auto row = random_tensor({16}, rng);
    auto base = mgfn::sac(tape, row, {});
    for (std::size_t j = 0; j < 16; ++j) {
        auto bumped = row.clone();
        bumped.mutable_data()[j] += 0.75;
        auto out = mgfn::sac(tape, bumped, {});
        for (std::size_t k = 0; k < 16; ++k) {
            const std::size_t dist = k > j ? k - j : j - k;
            if (dist > 2) {
                CHECK(out[k] == base[k]);
            }
        }
    }
}

TEST_CASE("focus_forward: zero residues, zero input, shape") {
    Rng rng(0);
    auto fp = FocusParams::init(2, 4, 3, 4, {}, rng.split("f"));
    std::vector<NamedParam> residues;
    fp.scc.collect("scc", residues);
    fp.ffn.collect("ffn", residues);
    zero_params(residues);
    Tape tape;
    auto x = random_tensor({2, 4, 2, 2}, rng);
    auto out = focus_forward(tape, x, fp);
    CHECK(out.shape() == Shape{2, 4, 2, 4});
    auto e = fp.expand(tape, x);
    auto s = mgfn::sac(tape, e, fp.sac);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(out[i] == e[i] + s[i]);
    }

    auto fresh = FocusParams::init(2, 4, 3, 4, {}, rng.split("g"));
    const auto silent = focus_forward(tape, Tensor::zeros({1, 4, 2, 2}), fresh);
    for (double v : silent.values()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("focus_forward gradient on the micro dims") {
    Rng rng(1);
    auto fp = FocusParams::init(2, 4, 3, 4, {}, rng.split("f"));
    auto x = random_tensor({1, 4, 2, 2}, rng, true);
    std::vector<NamedParam> params{{"x", x}};
    fp.collect("focus", params);
    auto w = test::normals(1 * 4 * 2 * 4, rng);
    auto report = grad_check([&](Tape& t) { return ops::dot_const(t, focus_forward(t, x, fp), w); }, params);
    CHECK(report.passed);
}

}  // TEST_SUITE

TEST_SUITE("model") {

TEST_CASE("architecture widths per block order") {
    auto gf = micro_arch(BlockOrder::kGlanceFocus);
    CHECK(gf.output_width() == 4);
    CHECK(micro_arch(BlockOrder::kFocusFocus).output_width() == 4);
    CHECK(micro_arch(BlockOrder::kFocusGlance).output_width() == 2);
    CHECK(micro_arch(BlockOrder::kFusion).output_width() == 4);
    auto bad = gf;
    bad.channels = 48;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(MgfnModel(bad, 0), ConfigError);
    CHECK(parse_block_order("GF_Fusion") == BlockOrder::kFusion);
    CHECK_THROWS_AS(parse_block_order("gg"), ConfigError);
}

TEST_CASE("forward ranges and shapes for every block order") {
    Rng rng(0);
    auto x = random_tensor({3, 4, 2, 64}, rng, false, 3.0);
    for (auto order : {BlockOrder::kGlanceFocus, BlockOrder::kFocusFocus, BlockOrder::kFocusGlance,
                       BlockOrder::kFusion}) {
        CAPTURE(to_string(order));
        MgfnModel model(micro_arch(order), 1);
        Tape tape(Tape::Mode::kNoGrad);
        auto out = model.forward(tape, x);
        CHECK(out.clip_scores.shape() == Shape{3, 4});
        CHECK(out.clip_magnitudes.shape() == Shape{3, 4});
        CHECK(out.features.shape() == Shape{3, 4, 2, model.arch().output_width()});
        for (double s : out.clip_scores.values()) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
        for (double m : out.clip_magnitudes.values()) {
            CHECK(m >= 0.0);
        }
        // magnitudes are the crop mean of per-crop feature norms
        const std::size_t d = model.arch().output_width();
        for (std::size_t bt = 0; bt < 12; ++bt) {
            double mean = 0.0;
            for (std::size_t p = 0; p < 2; ++p) {
                double sq = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double v = out.features[(bt * 2 + p) * d + c];
                    sq += v * v;
                }
                mean += std::sqrt(sq) / 2.0;
            }
            CHECK(std::abs(out.clip_magnitudes[bt] - mean) < 1e-12 * std::max(1.0, mean));
        }
    }
}

TEST_CASE("block order changes the output") {
    Rng rng(0);
    auto x = random_tensor({1, 4, 2, 64}, rng);
    Tape tape(Tape::Mode::kNoGrad);
    auto gf = MgfnModel(micro_arch(BlockOrder::kGlanceFocus), 0).forward(tape, x);
    auto fg = MgfnModel(micro_arch(BlockOrder::kFocusGlance), 0).forward(tape, x);
    CHECK(gf.clip_scores.values() != fg.clip_scores.values());
}

TEST_CASE("forward is deterministic; dropout only acts with an rng") {
    Rng rng(0);
    auto x = random_tensor({2, 4, 2, 64}, rng);
    MgfnModel a(micro_arch(BlockOrder::kGlanceFocus), 5);
    MgfnModel b(micro_arch(BlockOrder::kGlanceFocus), 5);
    Tape tape(Tape::Mode::kNoGrad);
    CHECK(a.forward(tape, x).clip_scores.values() == b.forward(tape, x).clip_scores.values());
    Rng d1(1), d2(1), d3(2);
    auto t1 = a.forward(tape, x, &d1).clip_scores.values();
    CHECK(t1 == a.forward(tape, x, &d2).clip_scores.values());
    CHECK(t1 != a.forward(tape, x, &d3).clip_scores.values());
    CHECK(t1 != a.forward(tape, x).clip_scores.values());
}

TEST_CASE("total-loss gradient check on the micro fixture, every order and loss") {
    for (auto order : {BlockOrder::kGlanceFocus, BlockOrder::kFocusFocus, BlockOrder::kFocusGlance,
                       BlockOrder::kFusion}) {
        for (auto loss : {LossVariant::kMagnitudeContrastive, LossVariant::kRtfm, LossVariant::kSceOnly}) {
            CAPTURE(to_string(order));
            CAPTURE(to_string(loss));
            auto report = gradcheck_micro(order, loss, 0);
            CHECK(report.passed);
            CHECK(report.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("infer_video: constant input, repeatability, dimension check") {
    VideoRecord r;
    r.id = "c";
    r.snippets = Tensor::full({4, 2, 64}, 0.3);
    r.frame_count = 37;

    // With one clip there is no temporal boundary, so the series is flat.
    auto single = micro_arch(BlockOrder::kGlanceFocus);
    single.clips = 1;
    single.topk = 1;
    auto flat = infer_video(MgfnModel(single, 0), r);
    REQUIRE(flat.size() == 37);
    for (double s : flat) {
        CHECK(s == flat.front());
    }

    // With T > 1 the zero-padded temporal convolutions see the sequence
    // edges, so only frames of the same clip are guaranteed equal.
    MgfnModel model(micro_arch(BlockOrder::kGlanceFocus), 0);
    auto series = infer_video(model, r);
    const auto b = partition_bounds(37, 4);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t f = b[t]; f < b[t + 1]; ++f) {
            CHECK(series[f] == series[b[t]]);
        }
    }

    Rng rng(0);
    r.snippets = random_tensor({9, 2, 64}, rng);
    CHECK(infer_video(model, r) == infer_video(model, r));

    r.snippets = random_tensor({9, 3, 64}, rng);
    CHECK_THROWS_AS(infer_video(model, r), DimensionError);
    r.snippets = random_tensor({9, 2, 32}, rng);
    CHECK_THROWS_AS(infer_video(model, r), DimensionError);
}

}  // TEST_SUITE
