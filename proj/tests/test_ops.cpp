// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mgfn/errors.hpp"
#include "mgfn/grad_check.hpp"
#include "mgfn/ops.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mgfn;
using mgfn::test::random_tensor;

namespace {

/// Scalarizes an op output with fixed random weights so every output entry
/// contributes a distinct slope.
GradCheckReport check_op(const std::function<Tensor(Tape&)>& op, std::vector<NamedParam> params,
                         std::uint64_t seed = 7) {
    std::vector<double> weights;
    auto f = [&](Tape& tape) {
        auto y = op(tape);
        if (weights.size() != y.numel()) {
            Rng rng(seed);
            weights = test::normals(y.numel(), rng);
        }
        return ops::dot_const(tape, y, weights);
    };
    return grad_check(f, std::move(params));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction validates values and sizes") {
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, NAN}), ArgumentError);
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, INFINITY}), ArgumentError);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Tensor::zeros({1, 1, 1, 1, 1}), DimensionError);
    auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.dim(1) == 3);
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("copies share storage, clone does not") {
    auto a = Tensor::full({3}, 2.0);
    auto b = a;
    auto c = a.clone();
    a.mutable_data()[0] = 5.0;
    CHECK(b[0] == 5.0);
    CHECK(c[0] == 2.0);
    CHECK(a.same_storage(b));
    CHECK_FALSE(a.same_storage(c));
}

TEST_CASE("backward fills leaf gradients exactly once per call") {
    auto x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    for (int round = 0; round < 3; ++round) {
        Tape tape;
        auto y = ops::sum_squares(tape, ops::add(tape, x, x));
        tape.backward(y);
        // d/dx sum (2x)^2 = 8x, independent of how many times backward ran
        CHECK(x.grad()[0] == doctest::Approx(8.0));
        CHECK(x.grad()[1] == doctest::Approx(-16.0));
        CHECK(x.grad()[2] == doctest::Approx(4.0));
    }
}

TEST_CASE("no-grad tape records nothing") {
    auto x = Tensor::from({2}, {1.0, 2.0}, true);
    Tape tape(Tape::Mode::kNoGrad);
    auto y = ops::gelu(tape, x);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.requires_grad());
}

}  // TEST_SUITE

TEST_SUITE("ops") {

TEST_CASE("conv1d: zero input gives the bias everywhere") {
    Tape tape;
    Rng rng(0);
    auto x = Tensor::zeros({5, 3});
    auto w = random_tensor({4, 3, 3}, rng);
    auto b = Tensor::from({4}, {0.5, -1.0, 2.0, 0.0});
    auto y = ops::conv1d(tape, x, w, b, 1);
    for (std::size_t l = 0; l < 5; ++l) {
        for (std::size_t o = 0; o < 4; ++o) {
            CHECK(y[l * 4 + o] == b[o]);
        }
    }
}

TEST_CASE("conv1d: identity kernel is a pass-through") {
    Tape tape;
    Rng rng(1);
    auto x = random_tensor({6, 4}, rng);
    std::vector<double> w(4 * 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        w[i * 4 + i] = 1.0;
    }
    auto y = ops::conv1d(tape, x, Tensor::from({4, 4, 1}, w), Tensor::zeros({4}), 0);
    CHECK(y.values() == x.values());
}

TEST_CASE("conv1d: equals the triple-loop cross-correlation") {
    Rng rng(0);
    SUBCASE("L=4, Cin=Cout=1, K=3") {
        Tape tape;
        auto x = random_tensor({4, 1}, rng);
        auto w = random_tensor({1, 1, 3}, rng);
        auto b = random_tensor({1}, rng);
        auto y = ops::conv1d(tape, x, w, b, 1);
        CHECK(y.values() == oracle::conv1d(x.values(), 4, 1, w.values(), 1, 3, b.values(), 1));
    }
    SUBCASE("random shapes") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t len = 1 + rng.below(9), cin = 1 + rng.below(5), cout = 1 + rng.below(5);
            const std::size_t pad = rng.below(3), width = 2 * pad + 1;
            Tape tape;
            auto x = random_tensor({len, cin}, rng);
            auto w = random_tensor({cout, cin, width}, rng);
            auto b = random_tensor({cout}, rng);
            auto y = ops::conv1d(tape, x, w, b, pad);
            CHECK(y.values() == oracle::conv1d(x.values(), len, cin, w.values(), cout, width, b.values(), pad));
        }
    }
}

TEST_CASE("conv1d: channel mismatch is a dimension error") {
    Tape tape;
    CHECK_THROWS_AS(ops::conv1d(tape, Tensor::zeros({4, 3}), Tensor::zeros({2, 2, 3}), Tensor::zeros({2}), 1),
                    DimensionError);
    CHECK_THROWS_AS(ops::conv1d(tape, Tensor::zeros({4, 3}), Tensor::zeros({2, 3, 3}), Tensor::zeros({2}), 0),
                    DimensionError);
}

TEST_CASE("softmax: analytic and oracle values") {
    Tape tape;
    auto uniform = ops::softmax(tape, Tensor::full({7}, 3.25), 0);
    for (double v : uniform.values()) {
        CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    }
    auto two = ops::softmax(tape, Tensor::from({2}, {0.0, std::log(3.0)}), 0);
    CHECK(std::abs(two[0] - 0.25) < 1e-15);
    CHECK(std::abs(two[1] - 0.75) < 1e-15);

    Rng rng(0);
    auto x = random_tensor({8}, rng);
    auto y = ops::softmax(tape, x, 0);
    CHECK(test::max_abs_diff(y.values(), oracle::softmax(x.values())) < 1e-12);
}

TEST_CASE("softmax: rows along any axis are distributions") {
    Rng rng(3);
    Tape tape;
    auto x = random_tensor({2, 3, 4}, rng, false, 5.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        auto y = ops::softmax(tape, x, axis);
        // sum along `axis` via mean * extent
        auto m = ops::mean_axis(tape, y, axis);
        for (double v : m.values()) {
            CHECK(std::abs(v * static_cast<double>(x.dim(axis)) - 1.0) < 1e-12);
        }
        for (double v : y.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(ops::softmax(tape, x, 3), ArgumentError);
}

TEST_CASE("softmax: large logits do not overflow") {
    Tape tape;
    auto y = ops::softmax(tape, Tensor::from({3}, {1000.0, 0.0, -1000.0}), 0);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[2] == 0.0);
}

TEST_CASE("l2 norm over channels") {
    Tape tape;
    auto y = ops::l2_norm_over_channels(tape, Tensor::from({2}, {3.0, 4.0}));
    CHECK(y.shape() == Shape{1});
    CHECK(y[0] == 5.0);

    auto z = Tensor::zeros({1, 4}, true);
    Tape t2;
    auto n = ops::l2_norm_over_channels(t2, z);
    t2.backward(ops::dot_const(t2, n, std::vector<double>{1.0}));
    CHECK(n[0] == 0.0);
    for (double g : z.grad()) {
        CHECK(g == 0.0);
    }

    Rng rng(0);
    auto x = random_tensor({16}, rng);
    double sq = 0.0;
    for (double v : x.values()) {
        sq += v * v;
    }
    CHECK(std::abs(ops::l2_norm_over_channels(tape, x)[0] - std::sqrt(sq)) < 1e-14);
}

TEST_CASE("gelu") {
    Tape tape;
    auto y = ops::gelu(tape, Tensor::from({3}, {0.0, 10.0, 1.0}));
    CHECK(y[0] == 0.0);
    CHECK(std::abs(y[1] - 10.0) < 1e-6);
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::numbers::sqrt2));
    CHECK(std::abs(y[2] - phi1) < 1e-15);
    CHECK(y[2] == doctest::Approx(0.8413447460685429));
}

TEST_CASE("topk: ties, full sort and oracle") {
    auto r = ops::topk(std::vector<double>{5, 1, 9, 9}, 2);
    CHECK(r.values == std::vector<double>{9, 9});
    CHECK(r.indices == std::vector<std::size_t>{2, 3});

    auto all = ops::topk(std::vector<double>{0.5, -1, 3, 2}, 4);
    CHECK(all.values == std::vector<double>{3, 2, 0.5, -1});

    CHECK_THROWS_AS(ops::topk(std::vector<double>{1, 2}, 3), ArgumentError);

    Rng rng(0);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = test::normals(32, rng);
        // quantize so ties actually occur
        for (auto& v : x) {
            v = std::round(v * 2.0);
        }
        auto got = ops::topk(x, 3);
        CHECK(got.indices == oracle::topk(x, 3));
        // applying it twice (k=T, then k) selects the same values
        auto sorted = ops::topk(x, x.size());
        CHECK(ops::topk(sorted.values, 3).values == got.values);
    }
}

TEST_CASE("sac: one-hot, constant and oracle") {
    Tape tape;
    std::vector<double> onehot(9, 0.0);
    onehot[4] = 1.0;
    auto y = ops::sac(tape, Tensor::from({9}, onehot), {});
    for (std::size_t k = 0; k < 9; ++k) {
        CHECK(y[k] == (k == 4 ? 1.0 : 0.0));
    }

    const double v = 1.5;
    auto c = ops::sac(tape, Tensor::full({8}, v), {});
    const double expect[8] = {3, 4, 5, 5, 5, 5, 4, 3};
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(c[k] == doctest::Approx(expect[k] * v * v));
    }

    Rng rng(0);
    auto x = random_tensor({8}, rng);
    CHECK(test::max_abs_diff(ops::sac(tape, x, {}).values(), oracle::sac(x.values(), 5)) < 1e-12);

    CHECK_THROWS_AS(ops::sac(tape, x, {4, false, false}), ArgumentError);
}

TEST_CASE("sac: full window and normalization options") {
    Tape tape;
    Rng rng(2);
    auto x = random_tensor({6}, rng);
    auto full = ops::sac(tape, x, {5, true, false});
    double total = 0.0;
    for (double v : x.values()) {
        total += v;
    }
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(full[k] == doctest::Approx(x[k] * total));
    }
    auto norm = ops::sac(tape, x, {5, false, true});
    auto plain = ops::sac(tape, x, {5, false, false});
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(norm[k] == doctest::Approx(plain[k] / 5.0));
    }
}

TEST_CASE("dropout is inverted and seeded") {
    Tape tape;
    auto x = Tensor::full({1000}, 2.0);
    Rng a(5), b(5);
    auto ya = ops::dropout(tape, x, 0.7, a);
    auto yb = ops::dropout(tape, x, 0.7, b);
    CHECK(ya.values() == yb.values());
    std::size_t kept = 0;
    for (double v : ya.values()) {
        CHECK((v == 0.0 || std::abs(v - 2.0 / 0.3) < 1e-12));
        kept += v != 0.0;
    }
    CHECK(kept > 230);
    CHECK(kept < 370);
    Rng c(5);
    CHECK(ops::dropout(tape, x, 0.0, c).values() == x.values());
}

TEST_CASE("backward of every op matches finite differences") {
    Rng rng(11);
    auto x4 = random_tensor({2, 3, 2, 4}, rng, true);
    auto x2 = random_tensor({5, 3}, rng, true);

    SUBCASE("add / scale") {
        auto y = random_tensor({5, 3}, rng, true);
        auto r = check_op([&](Tape& t) { return ops::scale(t, ops::add(t, x2, y), -1.7); },
                          {{"x", x2}, {"y", y}});
        CHECK(r.passed);
    }
    SUBCASE("conv1d") {
        auto w = random_tensor({2, 3, 3}, rng, true);
        auto b = random_tensor({2}, rng, true);
        auto r = check_op([&](Tape& t) { return ops::conv1d(t, x2, w, b, 1); },
                          {{"x", x2}, {"w", w}, {"b", b}});
        CHECK(r.passed);
    }
    SUBCASE("conv1d_clips") {
        auto w = random_tensor({3, 4, 3}, rng, true);
        auto b = random_tensor({3}, rng, true);
        auto r = check_op([&](Tape& t) { return ops::conv1d_clips(t, x4, w, b, 1); },
                          {{"x", x4}, {"w", w}, {"b", b}});
        CHECK(r.passed);
    }
    SUBCASE("linear") {
        auto w = random_tensor({5, 4}, rng, true);
        auto b = random_tensor({5}, rng, true);
        auto r = check_op([&](Tape& t) { return ops::linear(t, x4, w, b); }, {{"x", x4}, {"w", w}, {"b", b}});
        CHECK(r.passed);
    }
    SUBCASE("l2 norm, gelu, sigmoid") {
        auto r = check_op(
            [&](Tape& t) { return ops::sigmoid(t, ops::gelu(t, ops::l2_norm_over_channels(t, x4))); },
            {{"x", x4}});
        CHECK(r.passed);
    }
    SUBCASE("softmax on each axis") {
        for (std::size_t axis = 0; axis < 4; ++axis) {
            auto r = check_op([&](Tape& t) { return ops::softmax(t, x4, axis); }, {{"x", x4}});
            CHECK(r.passed);
        }
    }
    SUBCASE("mean_axis and reshape") {
        auto r = check_op(
            [&](Tape& t) { return ops::reshape(t, ops::mean_axis(t, x4, 2), {6, 4}); }, {{"x", x4}});
        CHECK(r.passed);
    }
    SUBCASE("attention") {
        auto k = random_tensor({2, 3, 2, 4}, rng, true);
        auto v = random_tensor({2, 3, 2, 4}, rng, true);
        auto r = check_op(
            [&](Tape& t) {
                auto a = ops::softmax(t, ops::attention_logits(t, x4, k, 0.5), 2);
                return ops::attention_apply(t, a, v);
            },
            {{"q", x4}, {"k", k}, {"v", v}});
        CHECK(r.passed);
    }
    SUBCASE("sac") {
        auto r = check_op([&](Tape& t) { return ops::sac(t, x4, {3, false, false}); }, {{"x", x4}});
        CHECK(r.passed);
        auto full = check_op([&](Tape& t) { return ops::sac(t, x4, {5, true, true}); }, {{"x", x4}});
        CHECK(full.passed);
    }
    SUBCASE("sum_squares and weighted_sum") {
        auto r = check_op(
            [&](Tape& t) {
                return ops::weighted_sum(t, {ops::sum_squares(t, x2), ops::sum_squares(t, x4)}, {0.3, -2.0});
            },
            {{"x2", x2}, {"x4", x4}});
        CHECK(r.passed);
    }
    SUBCASE("dropout with a fixed mask") {
        Rng base(4);
        auto r = check_op(
            [&](Tape& t) {
                Rng mask = base;
                return ops::dropout(t, x4, 0.5, mask);
            },
            {{"x", x4}});
        CHECK(r.passed);
    }
}

}  // TEST_SUITE

TEST_SUITE("grad_check") {

TEST_CASE("quadratic: analytic 2p") {
    Rng rng(0);
    auto p = random_tensor({10}, rng, true);
    auto report = grad_check([&](Tape& t) { return ops::sum_squares(t, p); }, {{"p", p}});
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-8);
    Tape tape;
    tape.backward(ops::sum_squares(tape, p));
    for (std::size_t i = 0; i < p.numel(); ++i) {
        CHECK(std::abs(p.grad()[i] - 2.0 * p[i]) < 1e-12);
    }
}

TEST_CASE("constant objective has zero gradient") {
    auto p = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
    auto report = grad_check(
        [&](Tape& t) { return ops::weighted_sum(t, {ops::sum_squares(t, p)}, {0.0}); }, {{"p", p}});
    CHECK(report.passed);
    CHECK(report.params.at(0).max_abs_error < 1e-10);
}

TEST_CASE("non-finite objective raises") {
    auto p = Tensor::from({1}, {1e100}, true);
    CHECK_THROWS_AS(grad_check([&](Tape& t) { return ops::sum_squares(t, ops::sum_squares(t, p)); },
                               {{"p", p}}),
                    NumericalError);
}

TEST_CASE("a wrong backward is caught") {
    auto p = Tensor::from({2}, {0.3, -0.4}, true);
    auto report = grad_check(
        [&](Tape& t) {
            std::vector<double> v = {p[0] * p[0], p[1] * p[1]};
            return ops::dot_const(t,
                                  ops::custom(t, {p}, {2}, v,
                                              [](std::span<const double> g, std::vector<Tensor>& in) {
                                                  auto gx = in[0].grad_buffer();
                                                  gx[0] += g[0] * 3.0 * in[0][0];  // should be 2x
                                                  gx[1] += g[1] * 2.0 * in[0][1];
                                              }),
                                  std::vector<double>{1.0, 1.0});
        },
        {{"p", p}});
    CHECK_FALSE(report.passed);
    CHECK(report.params.at(0).worst_index == 0);
}

}  // TEST_SUITE
