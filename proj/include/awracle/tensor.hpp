// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "awracle/errors.hpp"

namespace awracle {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t numel(const Shape& shape);

/// Lets non-finite values through tensor construction. Debug use only.
void set_allow_nonfinite(bool allow);
bool allow_nonfinite();

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
};

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy. Tensors that are not recorded on a tape are never mutated by
/// ops, so they can be shared freely across threads.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, T value, bool requires_grad = false);
    static Tensor scalar(T value);
    // Unchecked construction for op outputs; skips the finiteness scan.
    static Tensor from_op(Shape shape, std::vector<T> data);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    std::span<T> mutable_data() { return impl_->data; }
    T item() const;
    T operator[](std::size_t i) const { return impl_->data[i]; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool value) { impl_->requires_grad = value; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> mutable_grad();  // allocates zeros on first use
    void zero_grad();

    Tensor clone() const;
    Tensor detach() const;

    template <typename U>
    Tensor<U> cast() const;

    TensorImpl<T>* impl() const { return impl_.get(); }

   private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of differentiable ops. Entries are appended in execution
/// order, so the tape is topologically sorted by construction.
template <typename T>
class Tape {
   public:
    using BackwardFn = std::function<void(std::span<const T> grad_out)>;

    void record(Tensor<T> output, BackwardFn backward);
    /// Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. Leaf grads
    /// accumulate across calls; intermediate grads are reset each call.
    void backward(const Tensor<T>& loss);
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

   private:
    struct Entry {
        Tensor<T> output;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
};

/// Makes a tape the recording target for ops on this thread while in scope.
template <typename T>
class TapeScope {
   public:
    explicit TapeScope(Tape<T>& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

   private:
    Tape<T>* previous_;
};

template <typename T>
Tape<T>* active_tape();

/// Temporarily disables recording (inference paths).
template <typename T>
class NoGradScope {
   public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

   private:
    Tape<T>* previous_;
};

template <typename T>
void backward(const Tensor<T>& loss);

// Adds `values` into t's grad buffer if t participates in differentiation.
template <typename T>
void accumulate_grad(const Tensor<T>& t, std::span<const T> values);

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace awracle
