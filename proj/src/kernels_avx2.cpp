// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma on x86_64 only; the
// dispatcher never hands these out unless CPUID reports both features.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "fslpn/kernels.hpp"

namespace fslpn::kern::detail {

namespace {

// ---------------------------------------------------------------------------
// float (8 lanes)
// ---------------------------------------------------------------------------

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

float dot_f(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float r = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void axpy_f(float a, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f(float a, float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void affine_f(float a, float b, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    const __m256 vb = _mm256_set1_ps(b);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vb));
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

float sum_f(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

float sumsq_f(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float r = hsum(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

void relu_f(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_f(const float* x, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        __m256 pass = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), pass));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) dx[i] += dy[i];
}

void sgd_update_f(float* w, const float* g, float lr, std::size_t n) {
    const __m256 vlr = _mm256_set1_ps(lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vw = _mm256_fnmadd_ps(vlr, _mm256_loadu_ps(g + i), _mm256_loadu_ps(w + i));
        _mm256_storeu_ps(w + i, vw);
    }
    for (; i < n; ++i) w[i] -= lr * g[i];
}

// Fused stride-1 convolution rows. Buffers carry zero slack past lout (see
// the table contract), so every loop runs full vectors. The short-row path
// keeps the whole output row in registers across the channel/tap loops.

void conv_row_fwd_f(const float* xpad, std::size_t cin, std::size_t xstride, const float* w,
                    std::size_t wstride, std::size_t k, float bias, float* y, std::size_t lout) {
    const std::size_t nvec = (lout + 7) / 8;
    if (nvec <= 4) {
        __m256 acc[4];
        for (std::size_t v = 0; v < nvec; ++v) acc[v] = _mm256_set1_ps(bias);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* xr = xpad + ci * xstride;
            const float* wr = w + ci * wstride;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 wv = _mm256_set1_ps(wr[kk]);
                for (std::size_t v = 0; v < nvec; ++v)
                    acc[v] = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xr + 8 * v + kk), acc[v]);
            }
        }
        std::size_t l = 0;
        for (std::size_t v = 0; v < nvec; ++v) {
            alignas(32) float lanes[8];
            _mm256_store_ps(lanes, acc[v]);
            for (std::size_t j = 0; j < 8 && l < lout; ++j, ++l) y[l] = lanes[j];
        }
        return;
    }
    for (std::size_t l = 0; l < lout; ++l) y[l] = bias;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const float* xr = xpad + ci * xstride;
        const float* wr = w + ci * wstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const __m256 wv = _mm256_set1_ps(wr[kk]);
            std::size_t l = 0;
            for (; l + 8 <= lout; l += 8) {
                __m256 vy = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xr + l + kk),
                                            _mm256_loadu_ps(y + l));
                _mm256_storeu_ps(y + l, vy);
            }
            for (; l < lout; ++l) y[l] += wr[kk] * xr[l + kk];
        }
    }
}

void conv_row_bwd_input_f(const float* dypad, std::size_t cout, std::size_t dystride,
                          const float* w, std::size_t wstride, std::size_t k, float* dxpad,
                          std::size_t lout) {
    // transposed form dx[j] += w_k * dy[j-k]: the row accumulates in
    // registers, shifted loads hit the zeroed front margin of dy
    const std::size_t out_len = lout + k - 1;
    const std::size_t nvec = (out_len + 7) / 8;
    if (nvec <= 4) {
        __m256 acc[4];
        for (std::size_t v = 0; v < nvec; ++v) acc[v] = _mm256_loadu_ps(dxpad + 8 * v);
        for (std::size_t co = 0; co < cout; ++co) {
            const float* dyr = dypad + co * dystride;
            const float* wr = w + co * wstride;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 wv = _mm256_set1_ps(wr[kk]);
                for (std::size_t v = 0; v < nvec; ++v)
                    acc[v] = _mm256_fmadd_ps(
                        wv, _mm256_loadu_ps(dyr + 8 * v - static_cast<long>(kk)), acc[v]);
            }
        }
        for (std::size_t v = 0; v < nvec; ++v) _mm256_storeu_ps(dxpad + 8 * v, acc[v]);
        return;
    }
    for (std::size_t co = 0; co < cout; ++co) {
        const float* dyr = dypad + co * dystride;
        const float* wr = w + co * wstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const __m256 wv = _mm256_set1_ps(wr[kk]);
            for (std::size_t v = 0; v < nvec; ++v) {
                __m256 dx = _mm256_loadu_ps(dxpad + 8 * v);
                dx = _mm256_fmadd_ps(wv, _mm256_loadu_ps(dyr + 8 * v - static_cast<long>(kk)), dx);
                _mm256_storeu_ps(dxpad + 8 * v, dx);
            }
        }
    }
}

void conv_row_bwd_weight_f(const float* dypad, const float* xpad, std::size_t cin,
                           std::size_t xstride, std::size_t k, float* dw, std::size_t wstride,
                           std::size_t lout) {
    const std::size_t nvec = (lout + 7) / 8;
    if (nvec <= 4) {
        __m256 dy[4];
        for (std::size_t v = 0; v < nvec; ++v) dy[v] = _mm256_loadu_ps(dypad + 8 * v);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* xr = xpad + ci * xstride;
            for (std::size_t kk = 0; kk < k; ++kk) {
                __m256 acc = _mm256_mul_ps(dy[0], _mm256_loadu_ps(xr + kk));
                for (std::size_t v = 1; v < nvec; ++v)
                    acc = _mm256_fmadd_ps(dy[v], _mm256_loadu_ps(xr + 8 * v + kk), acc);
                dw[ci * wstride + kk] += hsum(acc);
            }
        }
        return;
    }
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const float* xr = xpad + ci * xstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            __m256 acc = _mm256_setzero_ps();
            for (std::size_t v = 0; v < nvec; ++v)
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(dypad + 8 * v),
                                      _mm256_loadu_ps(xr + 8 * v + kk), acc);
            dw[ci * wstride + kk] += hsum(acc);
        }
    }
}

// ---------------------------------------------------------------------------
// double (4 lanes)
// ---------------------------------------------------------------------------

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_d(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double r = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void axpy_d(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_d(double a, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void affine_d(double a, double b, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vb));
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

double sum_d(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double sumsq_d(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

void relu_d(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_d(const double* x, const double* dy, double* dx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        __m256d pass = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), pass));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) dx[i] += dy[i];
}

void sgd_update_d(double* w, const double* g, double lr, std::size_t n) {
    const __m256d vlr = _mm256_set1_pd(lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vw = _mm256_fnmadd_pd(vlr, _mm256_loadu_pd(g + i), _mm256_loadu_pd(w + i));
        _mm256_storeu_pd(w + i, vw);
    }
    for (; i < n; ++i) w[i] -= lr * g[i];
}

void conv_row_fwd_d(const double* xpad, std::size_t cin, std::size_t xstride, const double* w,
                    std::size_t wstride, std::size_t k, double bias, double* y, std::size_t lout) {
    const std::size_t nvec = (lout + 3) / 4;
    if (nvec <= 6) {
        __m256d acc[6];
        for (std::size_t v = 0; v < nvec; ++v) acc[v] = _mm256_set1_pd(bias);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xr = xpad + ci * xstride;
            const double* wr = w + ci * wstride;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d wv = _mm256_set1_pd(wr[kk]);
                for (std::size_t v = 0; v < nvec; ++v)
                    acc[v] = _mm256_fmadd_pd(wv, _mm256_loadu_pd(xr + 4 * v + kk), acc[v]);
            }
        }
        std::size_t l = 0;
        for (std::size_t v = 0; v < nvec; ++v) {
            alignas(32) double lanes[4];
            _mm256_store_pd(lanes, acc[v]);
            for (std::size_t j = 0; j < 4 && l < lout; ++j, ++l) y[l] = lanes[j];
        }
        return;
    }
    for (std::size_t l = 0; l < lout; ++l) y[l] = bias;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xr = xpad + ci * xstride;
        const double* wr = w + ci * wstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const __m256d wv = _mm256_set1_pd(wr[kk]);
            std::size_t l = 0;
            for (; l + 4 <= lout; l += 4) {
                __m256d vy = _mm256_fmadd_pd(wv, _mm256_loadu_pd(xr + l + kk),
                                             _mm256_loadu_pd(y + l));
                _mm256_storeu_pd(y + l, vy);
            }
            for (; l < lout; ++l) y[l] += wr[kk] * xr[l + kk];
        }
    }
}

void conv_row_bwd_input_d(const double* dypad, std::size_t cout, std::size_t dystride,
                          const double* w, std::size_t wstride, std::size_t k, double* dxpad,
                          std::size_t lout) {
    const std::size_t out_len = lout + k - 1;
    const std::size_t nvec = (out_len + 3) / 4;
    if (nvec <= 6) {
        __m256d acc[6];
        for (std::size_t v = 0; v < nvec; ++v) acc[v] = _mm256_loadu_pd(dxpad + 4 * v);
        for (std::size_t co = 0; co < cout; ++co) {
            const double* dyr = dypad + co * dystride;
            const double* wr = w + co * wstride;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d wv = _mm256_set1_pd(wr[kk]);
                for (std::size_t v = 0; v < nvec; ++v)
                    acc[v] = _mm256_fmadd_pd(
                        wv, _mm256_loadu_pd(dyr + 4 * v - static_cast<long>(kk)), acc[v]);
            }
        }
        for (std::size_t v = 0; v < nvec; ++v) _mm256_storeu_pd(dxpad + 4 * v, acc[v]);
        return;
    }
    for (std::size_t co = 0; co < cout; ++co) {
        const double* dyr = dypad + co * dystride;
        const double* wr = w + co * wstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const __m256d wv = _mm256_set1_pd(wr[kk]);
            for (std::size_t v = 0; v < nvec; ++v) {
                __m256d dx = _mm256_loadu_pd(dxpad + 4 * v);
                dx = _mm256_fmadd_pd(wv, _mm256_loadu_pd(dyr + 4 * v - static_cast<long>(kk)), dx);
                _mm256_storeu_pd(dxpad + 4 * v, dx);
            }
        }
    }
}

void conv_row_bwd_weight_d(const double* dypad, const double* xpad, std::size_t cin,
                           std::size_t xstride, std::size_t k, double* dw, std::size_t wstride,
                           std::size_t lout) {
    const std::size_t nvec = (lout + 3) / 4;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xr = xpad + ci * xstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            __m256d acc = _mm256_setzero_pd();
            for (std::size_t v = 0; v < nvec; ++v)
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(dypad + 4 * v),
                                      _mm256_loadu_pd(xr + 4 * v + kk), acc);
            dw[ci * wstride + kk] += hsum(acc);
        }
    }
}

}  // namespace

const Table<float>& avx2_f32() {
    static constexpr Table<float> t{dot_f,  axpy_f,      scale_f,      affine_f,
                                    sum_f,  sumsq_f,     relu_f,       relu_grad_f,
                                    sgd_update_f, conv_row_fwd_f, conv_row_bwd_input_f,
                                    conv_row_bwd_weight_f};
    return t;
}

const Table<double>& avx2_f64() {
    static constexpr Table<double> t{dot_d,  axpy_d,      scale_d,      affine_d,
                                     sum_d,  sumsq_d,     relu_d,       relu_grad_d,
                                     sgd_update_d, conv_row_fwd_d, conv_row_bwd_input_d,
                                     conv_row_bwd_weight_d};
    return t;
}

}  // namespace fslpn::kern::detail

#endif  // x86_64
