// SPDX-License-Identifier: Apache-2.0

#include "mgfn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mgfn/errors.hpp"

namespace mgfn {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_rank(const Shape& shape) {
    if (shape.size() > Tensor::kMaxRank) {
        throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
    }
}

void check_finite(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw ArgumentError("non-finite tensor value at flat index " + std::to_string(i));
        }
    }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_rank(shape);
    if (!std::isfinite(value)) {
        throw ArgumentError("non-finite fill value");
    }
    const auto n = shape_numel(shape);
    return adopt(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    check_rank(shape);
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    check_finite(values);
    return adopt(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

Tensor Tensor::adopt(Shape shape, std::vector<double> values, bool requires_grad) {
#ifndef NDEBUG
    check_rank(shape);
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("op produced mismatched shape " + shape_str(shape));
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericalError("op produced a non-finite value for shape " + shape_str(shape));
        }
    }
#endif
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

std::span<double> Tensor::grad_buffer() const {
    if (impl_->grad.size() != impl_->data.size()) {
        impl_->grad.assign(impl_->data.size(), 0.0);
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
    return adopt(impl_->shape, impl_->data, requires_grad);
}

bool Tape::wants_grad(std::initializer_list<const Tensor*> inputs) const {
    if (!recording()) {
        return false;
    }
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->requires_grad(); });
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
    if (!recording()) {
        return;
    }
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& root) {
    if (root.numel() != 1) {
        throw DimensionError("backward root must be a scalar, got " + shape_str(root.shape()));
    }
    std::unordered_set<const void*> zeroed;
    auto reset = [&](Tensor& t) {
        if (t.requires_grad() && zeroed.insert(t.impl_.get()).second) {
            t.zero_grad();
        }
    };
    for (auto& e : entries_) {
        reset(e.output);
        for (auto& in : e.inputs) {
            reset(in);
        }
    }
    Tensor seed = root;
    seed.grad_buffer()[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        it->backward();
    }
}

}  // namespace mgfn
