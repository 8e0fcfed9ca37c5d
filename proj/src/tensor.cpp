// SPDX-License-Identifier: Apache-2.0
#include "awracle/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace awracle {

namespace {
std::atomic<bool> g_allow_nonfinite{false};

template <typename T>
thread_local Tape<T>* t_active_tape = nullptr;
}  // namespace

void set_allow_nonfinite(bool allow) { g_allow_nonfinite.store(allow); }
bool allow_nonfinite() { return g_allow_nonfinite.load(); }

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero dimension");
    }
    if (awracle::numel(shape) != data.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                             std::to_string(awracle::numel(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    if (!allow_nonfinite()) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!std::isfinite(data[i])) {
                throw ParameterError("non-finite value at flat index " + std::to_string(i));
            }
        }
    }
    impl_ = std::make_shared<TensorImpl<T>>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(shape, std::vector<T>(awracle::numel(shape), T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
    return Tensor(shape, std::vector<T>(awracle::numel(shape), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> data) {
    Tensor out;
    out.impl_ = std::make_shared<TensorImpl<T>>();
    out.impl_->shape = std::move(shape);
    out.impl_->data = std::move(data);
    return out;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(impl_->shape));
    }
    return impl_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    impl_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor out = from_op(impl_->shape, impl_->data);
    out.impl_->grad = impl_->grad;
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from_op(impl_->shape, impl_->data);
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
    std::vector<U> values(impl_->data.begin(), impl_->data.end());
    Tensor<U> out = Tensor<U>::from_op(impl_->shape, std::move(values));
    out.set_requires_grad(impl_->requires_grad);
    return out;
}

template <typename T>
void accumulate_grad(const Tensor<T>& t, std::span<const T> values) {
    auto* impl = t.impl();
    if (!impl->requires_grad) return;
    if (impl->grad.empty()) {
        impl->grad.assign(values.begin(), values.end());
        return;
    }
    for (std::size_t i = 0; i < values.size(); ++i) impl->grad[i] += values[i];
}

template <typename T>
void Tape<T>::record(Tensor<T> output, BackwardFn backward) {
    output.set_requires_grad(true);
    entries_.push_back(Entry{std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    std::size_t loss_index = entries_.size();
    for (std::size_t i = entries_.size(); i-- > 0;) {
        if (entries_[i].output.impl() == loss.impl()) {
            loss_index = i;
            break;
        }
    }
    if (loss_index == entries_.size()) {
        throw UsageError("backward() loss is not connected to the active tape");
    }
    for (auto& entry : entries_) entry.output.impl()->grad.clear();
    loss.impl()->grad.assign(1, T(1));
    for (std::size_t i = loss_index + 1; i-- > 0;) {
        auto& entry = entries_[i];
        const auto& g = entry.output.impl()->grad;
        if (g.empty()) continue;
        entry.backward(std::span<const T>(g));
    }
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(t_active_tape<T>) {
    t_active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
    t_active_tape<T> = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(t_active_tape<T>) {
    t_active_tape<T> = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
    t_active_tape<T> = previous_;
}

template <typename T>
Tape<T>* active_tape() {
    return t_active_tape<T>;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    auto* tape = active_tape<T>();
    if (!tape) throw UsageError("backward() called without an active tape");
    tape->backward(loss);
}

#define AWRACLE_INSTANTIATE(T)                                                \
    template class Tensor<T>;                                                 \
    template class Tape<T>;                                                   \
    template class TapeScope<T>;                                              \
    template class NoGradScope<T>;                                            \
    template Tape<T>* active_tape<T>();                                       \
    template void backward<T>(const Tensor<T>&);                              \
    template void accumulate_grad<T>(const Tensor<T>&, std::span<const T>);

AWRACLE_INSTANTIATE(float)
AWRACLE_INSTANTIATE(double)
#undef AWRACLE_INSTANTIATE

template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;

}  // namespace awracle
