// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mgfn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major f64 array of rank 0..4 with an optional gradient slot.
///
/// `Tensor` is a shared handle: copies alias the same storage. Values are
/// finite at construction; ops never write into their inputs. Parameters are
/// the only tensors whose values change after creation, and only through
/// `mutable_data()` (optimizer, checkpoint restore).
class Tensor {
public:
    static constexpr std::size_t kMaxRank = 4;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    /// Throws ArgumentError on NaN/Inf and DimensionError on size mismatch.
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }
    bool requires_grad() const { return impl_->requires_grad; }

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    /// Empty span until a backward pass has touched this tensor.
    std::span<const double> grad() const { return impl_->grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    /// Allocates a zeroed gradient buffer on first use.
    std::span<double> grad_buffer() const;
    void zero_grad();

    double item() const;
    double operator[](std::size_t flat) const { return impl_->data[flat]; }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    /// Deep copy of values; the copy has no gradient.
    Tensor clone(bool requires_grad = false) const;

    /// Unchecked construction used by ops; validated only in debug builds.
    static Tensor adopt(Shape shape, std::vector<double> values, bool requires_grad);

private:
    friend class Tape;
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

/// A parameter tensor together with its stable, dotted name.
struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Records differentiable operations in execution order.
///
/// `backward(root)` zeroes the gradient of every tensor seen by the tape,
/// seeds d(root)/d(root) = 1, then replays the recorded closures in reverse
/// registration order. Gradients of leaves therefore hold exactly the
/// derivative of `root` after each call.
class Tape {
public:
    enum class Mode { kRecord, kNoGrad };

    explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return mode_ == Mode::kRecord; }

    /// Output requires grad iff recording and any input requires grad.
    bool wants_grad(std::initializer_list<const Tensor*> inputs) const;

    void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);
    void backward(const Tensor& root);

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
    };

    Mode mode_;
    std::vector<Entry> entries_;
};

}  // namespace mgfn
