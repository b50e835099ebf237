#include "fslpn/kernels.hpp"

// Scalar reference kernels. These define the semantics; the SIMD variants are
// tested against them.

namespace fslpn::kern::detail {

namespace {

template <typename T>
T dot_(const T* a, const T* b, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
void axpy_(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale_(T a, T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

template <typename T>
void affine_(T a, T b, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <typename T>
T sum_(const T* x, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
T sumsq_(const T* x, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <typename T>
void relu_(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad_(const T* x, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
void sgd_update_(T* w, const T* g, T lr, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) w[i] -= lr * g[i];
}

template <typename T>
void conv_row_fwd_(const T* xpad, std::size_t cin, std::size_t xstride, const T* w,
                   std::size_t wstride, std::size_t k, T bias, T* y, std::size_t lout) {
    for (std::size_t l = 0; l < lout; ++l) y[l] = bias;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* xr = xpad + ci * xstride;
        const T* wr = w + ci * wstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T wv = wr[kk];
            if (wv == T(0)) continue;
            for (std::size_t l = 0; l < lout; ++l) y[l] += wv * xr[l + kk];
        }
    }
}

template <typename T>
void conv_row_bwd_input_(const T* dypad, std::size_t cout, std::size_t dystride, const T* w,
                         std::size_t wstride, std::size_t k, T* dxpad, std::size_t lout) {
    for (std::size_t co = 0; co < cout; ++co) {
        const T* dyr = dypad + co * dystride;
        const T* wr = w + co * wstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T wv = wr[kk];
            if (wv == T(0)) continue;
            for (std::size_t l = 0; l < lout; ++l) dxpad[l + kk] += wv * dyr[l];
        }
    }
}

template <typename T>
void conv_row_bwd_weight_(const T* dypad, const T* xpad, std::size_t cin, std::size_t xstride,
                          std::size_t k, T* dw, std::size_t wstride, std::size_t lout) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* xr = xpad + ci * xstride;
        for (std::size_t kk = 0; kk < k; ++kk) {
            T acc = T(0);
            for (std::size_t l = 0; l < lout; ++l) acc += dypad[l] * xr[l + kk];
            dw[ci * wstride + kk] += acc;
        }
    }
}

template <typename T>
constexpr Table<T> make_table() {
    return Table<T>{dot_<T>,  axpy_<T>,      scale_<T>,      affine_<T>,
                    sum_<T>,  sumsq_<T>,     relu_<T>,       relu_grad_<T>,
                    sgd_update_<T>, conv_row_fwd_<T>, conv_row_bwd_input_<T>,
                    conv_row_bwd_weight_<T>};
}

}  // namespace

const Table<float>& scalar_f32() {
    static constexpr Table<float> t = make_table<float>();
    return t;
}

const Table<double>& scalar_f64() {
    static constexpr Table<double> t = make_table<double>();
    return t;
}

}  // namespace fslpn::kern::detail
