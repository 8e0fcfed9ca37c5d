// SPDX-License-Identifier: Apache-2.0
#include "awracle/ops.hpp"

// Always take the packed GEMM path: the small-size coefficient path picks
// its reduction order from buffer alignment, which breaks run-to-run
// reproducibility inside one process.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace awracle {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
    if (!active_tape<T>()) return false;
    for (const auto* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

// Grad buffer of an input, allocated on demand; empty when the input does
// not take part in differentiation.
template <typename T>
std::span<T> grad_of(const Tensor<T>& t) {
    if (!t.defined() || !t.requires_grad()) return {};
    auto* impl = t.impl();
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
    return impl->grad;
}

template <typename T>
Tensor<T> finish(Tensor<T> out, bool track, typename Tape<T>::BackwardFn fn) {
    if (track) active_tape<T>()->record(out, std::move(fn));
    return out;
}

void require(bool cond, const std::string& message) {
    if (!cond) throw DimensionError(message);
}

template <typename T>
void require_ndim(const Tensor<T>& x, std::size_t n, const char* op) {
    require(x.defined() && x.ndim() == n, std::string(op) + ": expected a " + std::to_string(n) +
                                              "-D tensor, got " +
                                              (x.defined() ? shape_str(x.shape()) : "<undefined>"));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_ndim(a, 2, "matmul");
    require_ndim(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    require(b.dim(0) == k, "matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                               shape_str(b.shape()));
    // Plain row-by-row accumulation, k ascending. Every output row sees the
    // same sequence of roundings, so permuting rows of `a` permutes the result
    // exactly (a blocked GEMM treats edge rows differently).
    std::vector<T> out(m * n, T(0));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T s = pa[i * k + p];
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    }
    auto result = Tensor<T>::from_op({m, n}, std::move(out));
    const bool track = tracking<T>({&a, &b});
    return finish<T>(result, track, [a, b, m, k, n](std::span<const T> g) {
        CMapMat<T> dc(g.data(), m, n);
        if (auto da = grad_of(a); !da.empty()) {
            MapMat<T>(da.data(), m, k).noalias() += dc * CMapMat<T>(b.data().data(), k, n).transpose();
        }
        if (auto db = grad_of(b); !db.empty()) {
            MapMat<T>(db.data(), k, n).noalias() += CMapMat<T>(a.data().data(), m, k).transpose() * dc;
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    require_ndim(x, 2, "transpose");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r * c);
    MapMat<T>(out.data(), c, r) = CMapMat<T>(x.data().data(), r, c).transpose();
    auto result = Tensor<T>::from_op({c, r}, std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, r, c](std::span<const T> g) {
        auto dx = grad_of(x);
        MapMat<T>(dx.data(), r, c) += CMapMat<T>(g.data(), c, r).transpose();
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " +
                                           shape_str(shape));
    auto result = Tensor<T>::from_op(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
    return finish<T>(result, tracking<T>({&x}), [x](std::span<const T> g) {
        auto dx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.ndim() == b.ndim() && a.ndim() >= 1, "concat: rank mismatch " + shape_str(a.shape()) +
                                                        " vs " + shape_str(b.shape()));
    Shape shape = a.shape();
    for (std::size_t i = 1; i < shape.size(); ++i) {
        require(shape[i] == b.dim(i), "concat: trailing dims disagree " + shape_str(a.shape()) + " vs " +
                                          shape_str(b.shape()));
    }
    shape[0] += b.dim(0);
    std::vector<T> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    auto result = Tensor<T>::from_op(std::move(shape), std::move(out));
    const std::size_t na = a.numel();
    return finish<T>(result, tracking<T>({&a, &b}), [a, b, na](std::span<const T> g) {
        if (auto da = grad_of(a); !da.empty()) {
            for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
        }
        if (auto db = grad_of(b); !db.empty()) {
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[na + i];
        }
    });
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_rows(const Tensor<T>& x, std::size_t first_rows) {
    require(x.ndim() >= 1 && first_rows > 0 && first_rows < x.dim(0),
            "split_rows: cannot split " + shape_str(x.shape()) + " after " + std::to_string(first_rows) +
                " rows");
    const std::size_t row = x.numel() / x.dim(0);
    const std::size_t cut = first_rows * row;
    Shape sa = x.shape(), sb = x.shape();
    sa[0] = first_rows;
    sb[0] = x.dim(0) - first_rows;
    auto a = Tensor<T>::from_op(sa, std::vector<T>(x.data().begin(), x.data().begin() + cut));
    auto b = Tensor<T>::from_op(sb, std::vector<T>(x.data().begin() + cut, x.data().end()));
    const bool track = tracking<T>({&x});
    a = finish<T>(a, track, [x](std::span<const T> g) {
        auto dx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
    b = finish<T>(b, track, [x, cut](std::span<const T> g) {
        auto dx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[cut + i] += g[i];
    });
    return {a, b};
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t width) {
    require_ndim(x, 2, "slice_cols");
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(width > 0 && start + width <= c, "slice_cols: columns [" + std::to_string(start) + ", " +
                                                 std::to_string(start + width) + ") out of range for " +
                                                 shape_str(x.shape()));
    std::vector<T> out(r * width);
    MapMat<T>(out.data(), r, width) = CMapMat<T>(x.data().data(), r, c).middleCols(start, width);
    auto result = Tensor<T>::from_op({r, width}, std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, r, c, start, width](std::span<const T> g) {
        auto dx = grad_of(x);
        MapMat<T>(dx.data(), r, c).middleCols(start, width) += CMapMat<T>(g.data(), r, width);
    });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t r = parts.front().dim(0);
    std::size_t total = 0;
    bool track = false;
    for (const auto& p : parts) {
        require_ndim(p, 2, "concat_cols");
        require(p.dim(0) == r, "concat_cols: row counts disagree " + shape_str(parts.front().shape()) +
                                   " vs " + shape_str(p.shape()));
        total += p.dim(1);
        track = track || tracking<T>({&p});
    }
    std::vector<T> out(r * total);
    MapMat<T> dst(out.data(), r, total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        dst.middleCols(offset, p.dim(1)) = CMapMat<T>(p.data().data(), r, p.dim(1));
        offset += p.dim(1);
    }
    auto result = Tensor<T>::from_op({r, total}, std::move(out));
    return finish<T>(result, track, [parts, r, total](std::span<const T> g) {
        CMapMat<T> src(g.data(), r, total);
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t w = p.dim(1);
            if (auto dp = grad_of(p); !dp.empty()) MapMat<T>(dp.data(), r, w) += src.middleCols(off, w);
            off += w;
        }
    });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> indices) {
    require_ndim(x, 2, "gather_rows");
    require(!indices.empty(), "gather_rows: empty index list");
    const std::size_t n = x.dim(0), c = x.dim(1);
    std::vector<T> out(indices.size() * c);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < n, "gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                                    shape_str(x.shape()));
        std::copy_n(x.data().begin() + indices[i] * c, c, out.begin() + i * c);
    }
    auto result = Tensor<T>::from_op({indices.size(), c}, std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, idx = std::move(indices), c](std::span<const T> g) {
        auto dx = grad_of(x);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < c; ++j) dx[idx[i] * c + j] += g[i * c + j];
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto result = Tensor<T>::from_op(a.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&a, &b}), [a, b](std::span<const T> g) {
        for (const auto* t : {&a, &b}) {
            if (auto d = grad_of(*t); !d.empty()) {
                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            }
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    auto result = Tensor<T>::from_op(a.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&a, &b}), [a, b](std::span<const T> g) {
        if (auto da = grad_of(a); !da.empty()) {
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        }
        if (auto db = grad_of(b); !db.empty()) {
            for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto result = Tensor<T>::from_op(a.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&a, &b}), [a, b](std::span<const T> g) {
        if (auto da = grad_of(a); !da.empty()) {
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
        }
        if (auto db = grad_of(b); !db.empty()) {
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
    auto result = Tensor<T>::from_op(x.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, factor](std::span<const T> g) {
        auto dx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require_ndim(x, 2, "add_row_bias");
    require(bias.ndim() == 1 && bias.dim(0) == x.dim(1), "add_row_bias: bias " + shape_str(bias.shape()) +
                                                             " does not match " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias[j];
    }
    auto result = Tensor<T>::from_op(x.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&x, &bias}), [x, bias, r, c](std::span<const T> g) {
        if (auto dx = grad_of(x); !dx.empty()) {
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        }
        if (auto db = grad_of(bias); !db.empty()) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
            }
        }
    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x[i];
        out[i] = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    }
    auto result = Tensor<T>::from_op(x.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, inv_sqrt2](std::span<const T> g) {
        const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
        auto dx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = x[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
            dx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    require_ndim(x, 2, "layer_norm");
    if (!(eps > T(0))) throw ParameterError("layer_norm: eps must be positive");
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(gamma.ndim() == 1 && gamma.dim(0) == c && beta.ndim() == 1 && beta.dim(0) == c,
            "layer_norm: affine params " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                " do not match " + shape_str(x.shape()));
    std::vector<T> out(r * c), xhat(r * c), rstd(r);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data().data() + i * c;
        T mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= T(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(c);
        rstd[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * rstd[i];
            out[i * c + j] = xhat[i * c + j] * gamma[j] + beta[j];
        }
    }
    auto result = Tensor<T>::from_op(x.shape(), std::move(out));
    const bool track = tracking<T>({&x, &gamma, &beta});
    return finish<T>(result, track, [x, gamma, beta, r, c, xhat = std::move(xhat),
                                     rstd = std::move(rstd)](std::span<const T> g) {
        auto dg = grad_of(gamma);
        auto db = grad_of(beta);
        auto dx = grad_of(x);
        std::vector<T> dxhat(c);
        for (std::size_t i = 0; i < r; ++i) {
            const T* gr = g.data() + i * c;
            const T* xh = xhat.data() + i * c;
            T mean_d = 0, mean_dx = 0;
            for (std::size_t j = 0; j < c; ++j) {
                if (!dg.empty()) dg[j] += gr[j] * xh[j];
                if (!db.empty()) db[j] += gr[j];
                dxhat[j] = gr[j] * gamma[j];
                mean_d += dxhat[j];
                mean_dx += dxhat[j] * xh[j];
            }
            if (dx.empty()) continue;
            mean_d /= T(c);
            mean_dx /= T(c);
            for (std::size_t j = 0; j < c; ++j) {
                dx[i * c + j] += rstd[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
    });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    require_ndim(x, 2, "softmax_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data().data() + i * c;
        T* o = out.data() + i * c;
        const T mx = *std::max_element(row, row + c);
        T total = 0;
        for (std::size_t j = 0; j < c; ++j) {
            o[j] = std::exp(row[j] - mx);
            total += o[j];
        }
        const T inv = T(1) / total;
        for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
    }
    auto result = Tensor<T>::from_op(x.shape(), std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, result_data = result, r, c](std::span<const T> g) {
        auto dx = grad_of(x);
        const auto y = result_data.data();
        for (std::size_t i = 0; i < r; ++i) {
            T dot = 0;
            for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
            for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
    });
}

namespace {

// Column layout: row (ci, ky, kx), column (oy, ox).
// Output columns ox in [lo, hi) read input column ox * stride + kx - pad inside [0, w).
inline void valid_range(std::size_t k_off, std::size_t pad, std::size_t stride, std::size_t in, std::size_t out,
                        std::size_t& lo, std::size_t& hi) {
    lo = k_off >= pad ? 0 : (pad - k_off + stride - 1) / stride;
    const std::size_t limit = in + pad - k_off;  // ox * stride < limit
    hi = std::min(out, (limit + stride - 1) / stride);
    if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t ho, std::size_t wo, T* cols) {
    const std::size_t pad = k / 2;
    const std::size_t plane = ho * wo;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            std::size_t ylo, yhi;
            valid_range(ky, pad, stride, h, ho, ylo, yhi);
            for (std::size_t kx = 0; kx < k; ++kx) {
                std::size_t xlo, xhi;
                valid_range(kx, pad, stride, w, wo, xlo, xhi);
                T* dst = cols + ((ci * k + ky) * k + kx) * plane;
                std::fill(dst, dst + ylo * wo, T(0));
                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                    T* row = dst + oy * wo;
                    const T* src = x + (ci * h + oy * stride + ky - pad) * w;
                    std::fill(row, row + xlo, T(0));
                    if (stride == 1) {
                        std::copy(src + xlo + kx - pad, src + xhi + kx - pad, row + xlo);
                    } else {
                        for (std::size_t ox = xlo; ox < xhi; ++ox) row[ox] = src[ox * stride + kx - pad];
                    }
                    std::fill(row + xhi, row + wo, T(0));
                }
                std::fill(dst + yhi * wo, dst + plane, T(0));
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t ho, std::size_t wo, T* dx) {
    const std::size_t pad = k / 2;
    const std::size_t plane = ho * wo;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            std::size_t ylo, yhi;
            valid_range(ky, pad, stride, h, ho, ylo, yhi);
            for (std::size_t kx = 0; kx < k; ++kx) {
                std::size_t xlo, xhi;
                valid_range(kx, pad, stride, w, wo, xlo, xhi);
                const T* src = cols + ((ci * k + ky) * k + kx) * plane;
                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                    const T* row = src + oy * wo;
                    T* dst = dx + (ci * h + oy * stride + ky - pad) * w;
                    for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox * stride + kx - pad] += row[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride) {
    require_ndim(x, 3, "conv2d");
    require_ndim(kernel, 4, "conv2d");
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
    require(k == 1 || k == 3, "conv2d: kernel size must be 1 or 3, got " + shape_str(kernel.shape()));
    require(kernel.dim(3) == k, "conv2d: kernel must be square, got " + shape_str(kernel.shape()));
    require(kernel.dim(1) == cin, "conv2d: kernel " + shape_str(kernel.shape()) + " expects " +
                                      std::to_string(kernel.dim(1)) + " input channels, input is " +
                                      shape_str(x.shape()));
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    require(!bias.defined() || (bias.ndim() == 1 && bias.dim(0) == cout),
            "conv2d: bias does not match " + std::to_string(cout) + " output channels");
    const std::size_t pad = k / 2;
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (w + 2 * pad - k) / stride + 1;
    const std::size_t rows = cin * k * k, plane = ho * wo;

    // A 1x1 stride-1 conv reads the input directly as its column matrix.
    const bool direct = (k == 1 && stride == 1);
    std::vector<T> cols;
    if (!direct) {
        cols.resize(rows * plane);
        im2col(x.data().data(), cin, h, w, k, stride, ho, wo, cols.data());
    }
    const T* col_ptr = direct ? x.data().data() : cols.data();

    std::vector<T> out(cout * plane);
    MapMat<T> y(out.data(), cout, plane);
    y.noalias() = CMapMat<T>(kernel.data().data(), cout, rows) * CMapMat<T>(col_ptr, rows, plane);
    if (bias.defined()) {
        for (std::size_t co = 0; co < cout; ++co) y.row(co).array() += bias[co];
    }
    auto result = Tensor<T>::from_op({cout, ho, wo}, std::move(out));
    const bool track = tracking<T>({&x, &kernel, &bias});
    return finish<T>(result, track, [=, cols = std::move(cols)](std::span<const T> g) {
        CMapMat<T> dy(g.data(), cout, plane);
        const T* cp = direct ? x.data().data() : cols.data();
        if (auto dk = grad_of(kernel); !dk.empty()) {
            MapMat<T>(dk.data(), cout, rows).noalias() += dy * CMapMat<T>(cp, rows, plane).transpose();
        }
        if (auto db = grad_of(bias); !db.empty()) {
            // fixed-order sum; Eigen's redux splits by buffer alignment
            for (std::size_t co = 0; co < cout; ++co) {
                T acc = T(0);
                for (std::size_t p = 0; p < plane; ++p) acc += g[co * plane + p];
                db[co] += acc;
            }
        }
        if (auto dx = grad_of(x); !dx.empty()) {
            CMapMat<T> wm(kernel.data().data(), cout, rows);
            if (direct) {
                MapMat<T>(dx.data(), rows, plane).noalias() += wm.transpose() * dy;
            } else {
                std::vector<T> dcols(rows * plane);
                MapMat<T>(dcols.data(), rows, plane).noalias() = wm.transpose() * dy;
                col2im_add(dcols.data(), cin, h, w, k, stride, ho, wo, dx.data());
            }
        }
    });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    require_ndim(x, 3, "upsample_nearest2x");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t h2 = 2 * h, w2 = 2 * w;
    std::vector<T> out(c * h2 * w2);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h2; ++y) {
            for (std::size_t xx = 0; xx < w2; ++xx) {
                out[(ch * h2 + y) * w2 + xx] = x[(ch * h + y / 2) * w + xx / 2];
            }
        }
    }
    auto result = Tensor<T>::from_op({c, h2, w2}, std::move(out));
    return finish<T>(result, tracking<T>({&x}), [x, c, h, w](std::span<const T> g) {
        auto dx = grad_of(x);
        const std::size_t h2 = 2 * h, w2 = 2 * w;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h2; ++y) {
                for (std::size_t xx = 0; xx < w2; ++xx) {
                    dx[(ch * h + y / 2) * w + xx / 2] += g[(ch * h2 + y) * w2 + xx];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (auto v : x.data()) total += v;
    auto result = Tensor<T>::from_op({1}, {total});
    return finish<T>(result, tracking<T>({&x}), [x](std::span<const T> g) {
        auto dx = grad_of(x);
        for (auto& d : dx) d += g[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require_same_shape(pred, target, "l1_loss");
    const std::size_t n = pred.numel();
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) total += std::abs(pred[i] - target[i]);
    auto result = Tensor<T>::from_op({1}, {total / T(n)});
    return finish<T>(result, tracking<T>({&pred, &target}), [pred, target, n](std::span<const T> g) {
        const T s = g[0] / T(n);
        auto dp = grad_of(pred);
        auto dt = grad_of(target);
        for (std::size_t i = 0; i < n; ++i) {
            const T diff = pred[i] - target[i];
            const T sign = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
            if (!dp.empty()) dp[i] += s * sign;
            if (!dt.empty()) dt[i] -= s * sign;
        }
    });
}

#define AWRACLE_INSTANTIATE(T)                                                                    \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> transpose(const Tensor<T>&);                                               \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
    template Tensor<T> concat_rows(const Tensor<T>&, const Tensor<T>&);                           \
    template std::pair<Tensor<T>, Tensor<T>> split_rows(const Tensor<T>&, std::size_t);           \
    template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                    \
    template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                \
    template Tensor<T> gather_rows(const Tensor<T>&, std::vector<std::size_t>);                   \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> scale(const Tensor<T>&, T);                                                \
    template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> gelu(const Tensor<T>&);                                                    \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);       \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                            \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
    template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                      \
    template Tensor<T> sum(const Tensor<T>&);                                                     \
    template Tensor<T> mean(const Tensor<T>&);                                                    \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);

AWRACLE_INSTANTIATE(float)
AWRACLE_INSTANTIATE(double)
#undef AWRACLE_INSTANTIATE

}  // namespace awracle
