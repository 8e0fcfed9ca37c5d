// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "awracle/ops.hpp"
#include "awracle/rng.hpp"
#include "awracle/tensor.hpp"

namespace awracle {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

/// Uniform(-bound, bound) parameter tensor with requires_grad set.
template <typename T>
Tensor<T> uniform_param(const Shape& shape, double bound, Rng& rng);

template <typename T>
struct Linear {
    Tensor<T> weight;  // [out x in]
    Tensor<T> bias;    // [out], undefined for bias-free layers

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }
    Tensor<T> forward(const Tensor<T>& x) const;
    void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    T eps = T(1e-5);

    LayerNorm() = default;
    explicit LayerNorm(std::size_t width);

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
    void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [out x in x k x k]
    Tensor<T> bias;    // [out]
    std::size_t stride = 1;

    Conv2d() = default;
    Conv2d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng, std::size_t stride = 1);

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride); }
    void collect(const std::string& prefix, NamedParams<T>& out) const;
};

/// Scaled dot-product attention with `heads` heads over a shared width.
/// No positional encoding and no masking: self-attention is equivariant to
/// token permutations and cross-attention is invariant to permutations of
/// the context tokens.
template <typename T>
class MultiHeadAttention {
   public:
    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t width, std::size_t heads, Rng& rng);

    std::size_t width() const { return heads_ * head_dim_; }
    std::size_t heads() const { return heads_; }
    std::size_t head_dim() const { return head_dim_; }

    Tensor<T> self_attention(const Tensor<T>& x) const { return cross_attention(x, x); }
    Tensor<T> cross_attention(const Tensor<T>& query_tokens, const Tensor<T>& context_tokens) const;
    /// Per-head [t_q x t_kv] softmax weights, for inspection.
    std::vector<Tensor<T>> attention_weights(const Tensor<T>& query_tokens,
                                             const Tensor<T>& context_tokens) const;

    void collect(const std::string& prefix, NamedParams<T>& out) const;

    Linear<T> wq, wk, wv, wo;

   private:
    void check_width(const Tensor<T>& x, const char* which) const;

    std::size_t heads_ = 0;
    std::size_t head_dim_ = 0;
};

template <typename T>
Tensor<T> linear_forward(const Linear<T>& layer, const Tensor<T>& x) {
    return layer.forward(x);
}

template <typename T>
Tensor<T> mhsa(const MultiHeadAttention<T>& att, const Tensor<T>& x) {
    return att.self_attention(x);
}

template <typename T>
Tensor<T> mhca(const MultiHeadAttention<T>& att, const Tensor<T>& query_tokens,
               const Tensor<T>& context_tokens) {
    return att.cross_attention(query_tokens, context_tokens);
}

}  // namespace awracle
