#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "fslpn/kernels.hpp"
#include "fslpn/tensor.hpp"

// Per-layer forward/backward passes. Every forward takes an optional cache;
// passing one enables the matching backward. Forwards never mutate their
// inputs (batch-norm running stats are the documented exception, train mode
// only), so eval-mode inference on frozen parameters is safe to run from
// several threads as long as each thread owns its caches.
//
// Convolution here is cross-correlation: kernels are never flipped.

namespace fslpn {

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

template <typename T>
struct Conv1dCache {
    Tensor<T> input;  // [B,Cin,L]
    int stride = 1;
    int pad = 0;
};

inline std::size_t conv1d_out_len(std::size_t len, std::size_t k, int stride, int pad) {
    return (len + 2 * static_cast<std::size_t>(pad) - k) / static_cast<std::size_t>(stride) + 1;
}

namespace detail {

template <typename T>
constexpr std::size_t vec_lanes() {
    return std::is_same_v<T, float> ? 8 : 4;
}

// Scratch row stride with zero slack past the data: lets the fused conv
// kernels run full vectors with no tail or bounds handling.
template <typename T>
std::size_t slacked_stride(std::size_t data_len, std::size_t k) {
    const std::size_t lanes = vec_lanes<T>();
    return ((data_len + k + lanes - 1) / lanes) * lanes + lanes;
}

}  // namespace detail

// input [B,Cin,L] * kernel [Cout,Cin,K] + bias [Cout] -> [B,Cout,L'].
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                         int pad, Conv1dCache<T>* cache = nullptr) {
    require_rank(x, 3, "conv1d input");
    require_rank(w, 3, "conv1d kernel");
    require_rank(b, 1, "conv1d bias");
    require_extent(w, 1, x.extent(1), "conv1d kernel (in-channel axis)");
    require_extent(b, 0, w.extent(0), "conv1d bias");
    if (stride < 1) throw_contract("conv1d: stride must be positive");
    if (pad < 0) throw_contract("conv1d: padding must be non-negative");

    const std::size_t B = x.extent(0), Cin = x.extent(1), L = x.extent(2);
    const std::size_t Cout = w.extent(0), K = w.extent(2);
    if (L + 2 * static_cast<std::size_t>(pad) < K)
        throw_contract("conv1d: padded length " + std::to_string(L + 2 * pad) +
                       " shorter than kernel " + std::to_string(K));
    const std::size_t Lout = conv1d_out_len(L, K, stride, pad);

    Tensor<T> y({B, Cout, Lout});
    if (stride == 1) {
        // Fused path: zero-slacked padded input rows, one kernel call per
        // output row.
        const std::size_t xstride = detail::slacked_stride<T>(L + 2 * pad, K);
        std::vector<T> xpad(Cin * xstride);
        for (std::size_t bi = 0; bi < B; ++bi) {
            std::fill(xpad.begin(), xpad.end(), T(0));
            for (std::size_t ci = 0; ci < Cin; ++ci)
                std::copy(x.row(bi, ci), x.row(bi, ci) + L, xpad.data() + ci * xstride + pad);
            for (std::size_t co = 0; co < Cout; ++co)
                kern::table<T>().conv_row_fwd(xpad.data(), Cin, xstride, w.row(co, 0), K, K,
                                              b(co), y.row(bi, co), Lout);
        }
    } else {
        for (std::size_t bi = 0; bi < B; ++bi) {
            for (std::size_t co = 0; co < Cout; ++co) {
                T* yrow = y.row(bi, co);
                std::fill(yrow, yrow + Lout, b(co));
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const T* xrow = x.row(bi, ci);
                    const T* wrow = w.row(co, ci);
                    for (std::size_t k = 0; k < K; ++k) {
                        const T wk = wrow[k];
                        if (wk == T(0)) continue;
                        const long off = static_cast<long>(k) - pad;
                        for (std::size_t l = 0; l < Lout; ++l) {
                            const long pos = static_cast<long>(l) * stride + off;
                            if (pos >= 0 && pos < static_cast<long>(L)) yrow[l] += wk * xrow[pos];
                        }
                    }
                }
            }
        }
    }
    if (cache != nullptr) {
        cache->input = x;
        cache->stride = stride;
        cache->pad = pad;
    }
    return y;
}

// Accumulates dL/dw into w.g and dL/db into b.g; returns dL/dx.
template <typename T>
Tensor<T> conv1d_backward(const Tensor<T>& dy, const Conv1dCache<T>& cache, Tensor<T>& w,
                          Tensor<T>& b) {
    if (cache.input.size() == 0) throw_contract("conv1d_backward: no cached forward input");
    const Tensor<T>& x = cache.input;
    const int stride = cache.stride, pad = cache.pad;
    const std::size_t B = x.extent(0), Cin = x.extent(1), L = x.extent(2);
    const std::size_t Cout = w.extent(0), K = w.extent(2);
    const std::size_t Lout = conv1d_out_len(L, K, stride, pad);
    require_rank(dy, 3, "conv1d upstream gradient");
    require_extent(dy, 0, B, "conv1d upstream gradient");
    require_extent(dy, 1, Cout, "conv1d upstream gradient");
    require_extent(dy, 2, Lout, "conv1d upstream gradient");
    w.ensure_grad();
    b.ensure_grad();

    Tensor<T> dx(x.shape);
    if (stride == 1) {
        const std::size_t pl = L + 2 * static_cast<std::size_t>(pad);
        const std::size_t lane = detail::vec_lanes<T>();
        const std::size_t xstride = detail::slacked_stride<T>(pl, K);
        // dy rows carry a zeroed front margin for the shifted backward loads
        const std::size_t dystride = lane + detail::slacked_stride<T>(Lout, K);
        std::vector<T> xpad(Cin * xstride);
        std::vector<T> dypad(Cout * dystride);
        std::vector<T> dxpad(Cin * xstride);
        T* const dybase = dypad.data() + lane;
        const auto& table = kern::table<T>();
        for (std::size_t bi = 0; bi < B; ++bi) {
            std::fill(xpad.begin(), xpad.end(), T(0));
            std::fill(dypad.begin(), dypad.end(), T(0));
            std::fill(dxpad.begin(), dxpad.end(), T(0));
            for (std::size_t ci = 0; ci < Cin; ++ci)
                std::copy(x.row(bi, ci), x.row(bi, ci) + L, xpad.data() + ci * xstride + pad);
            for (std::size_t co = 0; co < Cout; ++co) {
                std::copy(dy.row(bi, co), dy.row(bi, co) + Lout, dybase + co * dystride);
                b.g[co] += kern::sum(dy.row(bi, co), Lout);
                table.conv_row_bwd_weight(dybase + co * dystride, xpad.data(), Cin, xstride,
                                          K, w.g.data() + co * Cin * K, K, Lout);
            }
            for (std::size_t ci = 0; ci < Cin; ++ci) {
                table.conv_row_bwd_input(dybase, Cout, dystride, w.v.data() + ci * K,
                                         Cin * K, K, dxpad.data() + ci * xstride, Lout);
                std::copy(dxpad.data() + ci * xstride + pad, dxpad.data() + ci * xstride + pad + L,
                          dx.row(bi, ci));
            }
        }
    } else {
        for (std::size_t bi = 0; bi < B; ++bi) {
            for (std::size_t co = 0; co < Cout; ++co) {
                const T* dyrow = dy.row(bi, co);
                b.g[co] += kern::sum(dyrow, Lout);
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const T* xrow = x.row(bi, ci);
                    T* dxrow = dx.row(bi, ci);
                    const T* wrow = w.row(co, ci);
                    T* gwrow = w.g.data() + (co * Cin + ci) * K;
                    for (std::size_t k = 0; k < K; ++k) {
                        const long off = static_cast<long>(k) - pad;
                        for (std::size_t l = 0; l < Lout; ++l) {
                            const long pos = static_cast<long>(l) * stride + off;
                            if (pos >= 0 && pos < static_cast<long>(L)) {
                                gwrow[k] += dyrow[l] * xrow[pos];
                                dxrow[pos] += wrow[k] * dyrow[l];
                            }
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// batch norm (per channel over the B and L axes)
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;            // [B,C,L]
    std::vector<T> inv_std;    // [C], train mode
    std::vector<T> eval_scale; // [C] = gamma / sqrt(running_var + eps), eval mode
    bool train = false;
};

// Train mode normalizes with batch statistics (biased variance) and folds an
// unbiased variance estimate into the running stats; eval mode is a pure
// function of the running stats.
template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                             T momentum, T eps, BatchNormCache<T>* cache = nullptr) {
    require_rank(x, 3, "batch_norm input");
    const std::size_t B = x.extent(0), C = x.extent(1), L = x.extent(2);
    require_extent(gamma, 0, C, "batch_norm gamma");
    require_extent(beta, 0, C, "batch_norm beta");
    require_extent(running_mean, 0, C, "batch_norm running mean");
    require_extent(running_var, 0, C, "batch_norm running variance");
    const std::size_t n = B * L;
    if (train && n < 2)
        throw_contract("batch_norm: degenerate batch, B*L = " + std::to_string(n) +
                       " but train mode needs at least 2");

    Tensor<T> y(x.shape);
    if (cache != nullptr) {
        cache->train = train;
        cache->xhat = Tensor<T>(x.shape);
        cache->inv_std.assign(C, T(0));
        cache->eval_scale.assign(C, T(0));
    }

    for (std::size_t c = 0; c < C; ++c) {
        T mean, var;
        if (train) {
            T s = T(0), sq = T(0);
            for (std::size_t bi = 0; bi < B; ++bi) {
                const T* row = x.row(bi, c);
                s += kern::sum(row, L);
                sq += kern::sumsq(row, L);
            }
            mean = s / static_cast<T>(n);
            var = sq / static_cast<T>(n) - mean * mean;
            if (var < T(0)) var = T(0);  // guard against cancellation
            const T unbiased = var * static_cast<T>(n) / static_cast<T>(n - 1);
            running_mean(c) = (T(1) - momentum) * running_mean(c) + momentum * mean;
            running_var(c) = (T(1) - momentum) * running_var(c) + momentum * unbiased;
        } else {
            mean = running_mean(c);
            var = running_var(c);
        }
        const T inv_std = T(1) / std::sqrt(var + eps);
        const T a = gamma(c) * inv_std;
        const T shift = beta(c) - a * mean;
        for (std::size_t bi = 0; bi < B; ++bi) {
            kern::affine(a, shift, x.row(bi, c), y.row(bi, c), L);
            if (cache != nullptr)
                kern::affine(inv_std, -mean * inv_std, x.row(bi, c), cache->xhat.row(bi, c), L);
        }
        if (cache != nullptr) {
            cache->inv_std[c] = inv_std;
            cache->eval_scale[c] = a;
        }
    }
    return y;
}

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, Tensor<T>& gamma,
                              Tensor<T>& beta) {
    if (cache.xhat.size() == 0) throw_contract("batch_norm_backward: no cached forward state");
    const std::size_t B = cache.xhat.extent(0), C = cache.xhat.extent(1), L = cache.xhat.extent(2);
    require_rank(dy, 3, "batch_norm upstream gradient");
    require_extent(dy, 1, C, "batch_norm upstream gradient");
    gamma.ensure_grad();
    beta.ensure_grad();

    const T n = static_cast<T>(B * L);
    Tensor<T> dx(cache.xhat.shape);
    for (std::size_t c = 0; c < C; ++c) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::size_t bi = 0; bi < B; ++bi) {
            const T* dyrow = dy.row(bi, c);
            const T* xhrow = cache.xhat.row(bi, c);
            sum_dy += kern::sum(dyrow, L);
            sum_dy_xhat += kern::dot(dyrow, xhrow, L);
        }
        gamma.g[c] += sum_dy_xhat;
        beta.g[c] += sum_dy;

        if (cache.train) {
            const T a = gamma(c) * cache.inv_std[c] / n;
            for (std::size_t bi = 0; bi < B; ++bi) {
                const T* dyrow = dy.row(bi, c);
                const T* xhrow = cache.xhat.row(bi, c);
                T* dxrow = dx.row(bi, c);
                for (std::size_t l = 0; l < L; ++l)
                    dxrow[l] = a * (n * dyrow[l] - sum_dy - xhrow[l] * sum_dy_xhat);
            }
        } else {
            // Running stats are constants in eval mode.
            for (std::size_t bi = 0; bi < B; ++bi)
                kern::affine(cache.eval_scale[c], T(0), dy.row(bi, c), dx.row(bi, c), L);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <typename T>
struct ReluCache {
    Tensor<T> input;
};

// Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x, ReluCache<T>* cache = nullptr) {
    Tensor<T> y(x.shape);
    kern::relu(x.data(), y.data(), x.size());
    if (cache != nullptr) cache->input = x;
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const ReluCache<T>& cache) {
    if (cache.input.size() != dy.size()) throw_contract("relu_backward: cache/upstream size mismatch");
    Tensor<T> dx(dy.shape);
    kern::relu_grad(cache.input.data(), dy.data(), dx.data(), dy.size());
    return dx;
}

// ---------------------------------------------------------------------------
// global average pool  [B,C,L] -> [B,C]
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
    require_rank(x, 3, "global_avg_pool input");
    const std::size_t B = x.extent(0), C = x.extent(1), L = x.extent(2);
    Tensor<T> y({B, C});
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t c = 0; c < C; ++c)
            y(bi, c) = kern::sum(x.row(bi, c), L) / static_cast<T>(L);
    return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, const std::vector<std::size_t>& in_shape) {
    Tensor<T> dx(in_shape);
    const std::size_t B = in_shape[0], C = in_shape[1], L = in_shape[2];
    require_rank(dy, 2, "global_avg_pool upstream gradient");
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t c = 0; c < C; ++c) {
            const T v = dy(bi, c) / static_cast<T>(L);
            T* row = dx.row(bi, c);
            std::fill(row, row + L, v);
        }
    return dx;
}

// ---------------------------------------------------------------------------
// dense  [B,Din] * W[Dout,Din] + b[Dout] -> [B,Dout]
// ---------------------------------------------------------------------------

template <typename T>
struct DenseCache {
    Tensor<T> input;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                        DenseCache<T>* cache = nullptr) {
    require_rank(x, 2, "dense input");
    require_rank(w, 2, "dense weight");
    require_extent(w, 1, x.extent(1), "dense weight (input axis)");
    require_extent(b, 0, w.extent(0), "dense bias");
    const std::size_t B = x.extent(0), Din = x.extent(1), Dout = w.extent(0);
    Tensor<T> y({B, Dout});
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t j = 0; j < Dout; ++j)
            y(bi, j) = kern::dot(x.row(bi), w.row(j), Din) + b(j);
    if (cache != nullptr) cache->input = x;
    return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& dy, const DenseCache<T>& cache, Tensor<T>& w, Tensor<T>& b) {
    if (cache.input.size() == 0) throw_contract("dense_backward: no cached forward input");
    const Tensor<T>& x = cache.input;
    const std::size_t B = x.extent(0), Din = x.extent(1), Dout = w.extent(0);
    require_rank(dy, 2, "dense upstream gradient");
    require_extent(dy, 0, B, "dense upstream gradient");
    require_extent(dy, 1, Dout, "dense upstream gradient");
    w.ensure_grad();
    b.ensure_grad();

    Tensor<T> dx({B, Din});
    for (std::size_t bi = 0; bi < B; ++bi) {
        const T* xrow = x.row(bi);
        T* dxrow = dx.row(bi);
        for (std::size_t j = 0; j < Dout; ++j) {
            const T d = dy(bi, j);
            if (d == T(0)) continue;
            kern::axpy(d, w.row(j), dxrow, Din);
            kern::axpy(d, xrow, w.g.data() + j * Din, Din);
            b.g[j] += d;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// row-wise L2 normalization  [B,D] -> [B,D]
// ---------------------------------------------------------------------------

template <typename T>
struct L2NormCache {
    Tensor<T> output;
    std::vector<T> inv_norm;  // 0 marks a zero row (identity map there)
};

template <typename T>
struct L2NormResult {
    Tensor<T> y;
    std::size_t zero_rows = 0;  // zero rows pass through unchanged, flagged not fatal
};

template <typename T>
L2NormResult<T> l2_normalize_rows(const Tensor<T>& x, L2NormCache<T>* cache = nullptr) {
    require_rank(x, 2, "l2_normalize_rows input");
    const std::size_t B = x.extent(0), D = x.extent(1);
    L2NormResult<T> out;
    out.y = Tensor<T>(x.shape);
    if (cache != nullptr) cache->inv_norm.assign(B, T(0));
    for (std::size_t bi = 0; bi < B; ++bi) {
        const T* row = x.row(bi);
        const T norm = std::sqrt(kern::sumsq(row, D));
        T* yrow = out.y.row(bi);
        if (norm == T(0)) {
            std::copy(row, row + D, yrow);
            ++out.zero_rows;
        } else {
            kern::affine(T(1) / norm, T(0), row, yrow, D);
            if (cache != nullptr) cache->inv_norm[bi] = T(1) / norm;
        }
    }
    if (cache != nullptr) cache->output = out.y;
    return out;
}

// dx = (dy - y * (y . dy)) / ||x||; identity on zero rows.
template <typename T>
Tensor<T> l2_normalize_rows_backward(const Tensor<T>& dy, const L2NormCache<T>& cache) {
    if (cache.output.size() == 0) throw_contract("l2_normalize_rows_backward: no cached state");
    const std::size_t B = cache.output.extent(0), D = cache.output.extent(1);
    require_rank(dy, 2, "l2_normalize upstream gradient");
    Tensor<T> dx(dy.shape);
    for (std::size_t bi = 0; bi < B; ++bi) {
        const T* yrow = cache.output.row(bi);
        const T* dyrow = dy.row(bi);
        T* dxrow = dx.row(bi);
        const T inv = cache.inv_norm[bi];
        if (inv == T(0)) {
            std::copy(dyrow, dyrow + D, dxrow);
            continue;
        }
        const T proj = kern::dot(yrow, dyrow, D);
        for (std::size_t d = 0; d < D; ++d) dxrow[d] = (dyrow[d] - yrow[d] * proj) * inv;
    }
    return dx;
}

}  // namespace fslpn
