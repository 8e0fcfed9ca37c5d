// SPDX-License-Identifier: Apache-2.0
#include "awracle/nn.hpp"

#include <cmath>

namespace awracle {

template <typename T>
Tensor<T> uniform_param(const Shape& shape, double bound, Rng& rng) {
    std::vector<T> values(numel(shape));
    for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(shape, std::move(values), true);
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(uniform_param<T>({out, in}, 1.0 / std::sqrt(double(in)), rng)) {
    if (with_bias) bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
    if (x.ndim() != 2 || x.dim(1) != in_features()) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match layer width " +
                             std::to_string(in_features()));
    }
    auto y = matmul(x, transpose(weight));
    return bias.defined() ? add_row_bias(y, bias) : y;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t width)
    : gamma(Tensor<T>::full({width}, T(1), true)), beta(Tensor<T>::zeros({width}, true)) {}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng, std::size_t stride_)
    : weight(uniform_param<T>({out, in, kernel, kernel}, 1.0 / std::sqrt(double(in * kernel * kernel)), rng)),
      bias(Tensor<T>::zeros({out}, true)),
      stride(stride_) {}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(std::size_t width, std::size_t heads, Rng& rng)
    // A key bias shifts every logit of a query row equally, which softmax
    // cancels; the key projection is therefore bias-free.
    : wq(width, width, rng), wk(width, width, rng, false), wv(width, width, rng), wo(width, width, rng),
      heads_(heads) {
    if (heads == 0 || width % heads != 0) {
        throw ParameterError("attention width " + std::to_string(width) + " is not divisible by " +
                             std::to_string(heads) + " heads");
    }
    head_dim_ = width / heads;
}

template <typename T>
void MultiHeadAttention<T>::check_width(const Tensor<T>& x, const char* which) const {
    if (x.ndim() != 2 || x.dim(1) != width()) {
        throw DimensionError(std::string("attention: ") + which + " tokens " + shape_str(x.shape()) +
                             " do not match width " + std::to_string(width()));
    }
}

template <typename T>
std::vector<Tensor<T>> MultiHeadAttention<T>::attention_weights(const Tensor<T>& query_tokens,
                                                                const Tensor<T>& context_tokens) const {
    check_width(query_tokens, "query");
    check_width(context_tokens, "context");
    const T inv_scale = T(1) / std::sqrt(T(head_dim_));
    const auto q = wq.forward(query_tokens);
    const auto k = wk.forward(context_tokens);
    std::vector<Tensor<T>> weights;
    for (std::size_t h = 0; h < heads_; ++h) {
        auto qh = slice_cols(q, h * head_dim_, head_dim_);
        auto kh = slice_cols(k, h * head_dim_, head_dim_);
        weights.push_back(softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale)));
    }
    return weights;
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::cross_attention(const Tensor<T>& query_tokens,
                                                 const Tensor<T>& context_tokens) const {
    check_width(query_tokens, "query");
    check_width(context_tokens, "context");
    const T inv_scale = T(1) / std::sqrt(T(head_dim_));
    const auto q = wq.forward(query_tokens);
    const auto k = wk.forward(context_tokens);
    const auto v = wv.forward(context_tokens);
    std::vector<Tensor<T>> heads;
    heads.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
        const std::size_t off = h * head_dim_;
        auto qh = heads_ == 1 ? q : slice_cols(q, off, head_dim_);
        auto kh = heads_ == 1 ? k : slice_cols(k, off, head_dim_);
        auto vh = heads_ == 1 ? v : slice_cols(v, off, head_dim_);
        auto weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
        heads.push_back(matmul(weights, vh));
    }
    auto merged = heads_ == 1 ? heads.front() : concat_cols(heads);
    return wo.forward(merged);
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
}

template Tensor<float> uniform_param<float>(const Shape&, double, Rng&);
template Tensor<double> uniform_param<double>(const Shape&, double, Rng&);
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;

}  // namespace awracle
