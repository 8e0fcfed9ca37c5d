// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops. Each op records itself on the thread's active tape when
// a tape is active and at least one input requires grad; otherwise it is a
// plain forward computation. Shapes must match exactly except for the bias
// patterns (add_row_bias, conv2d bias).
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "awracle/tensor.hpp"

namespace awracle {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Concatenation/splitting along the leading axis. For a token matrix this is
// the row axis, for a feature map the channel axis.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    return concat_rows(a, b);
}
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_rows(const Tensor<T>& x, std::size_t first_rows);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t width);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> indices);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// Exact GELU: x * Phi(x) with the erf form of the normal CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Row-wise layer norm over the last axis of a [rows x c] matrix, population
/// variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Cross-correlation of a [c_in x h x w] map with a [c_out x c_in x k x k]
/// kernel, k in {1, 3}, zero padding k/2. Stride 2 halves the spatial size.
/// `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride = 1);

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Mean absolute error. Subgradient at zero difference is zero.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace awracle
