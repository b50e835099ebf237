#pragma once

#include <cstddef>

// Data-parallel inner loops behind every layer and loss. Scalar reference
// implementations always exist; an AVX2/FMA variant is selected at runtime on
// CPUs that support it. The two are equivalence-tested against each other
// (reductions reassociate, so comparisons carry a small tolerance).
//
// Selection order: FSLPN_KERNELS env var ("scalar" | "avx2") if set, then
// CPUID. kern::force() overrides both (used by the equivalence tests).

namespace fslpn::kern {

enum class Backend { scalar, avx2 };

Backend active();
void force(Backend b);                // throws fslpn::Error(contract) if unsupported
bool cpu_supports(Backend b);
const char* name(Backend b);

// Per-type kernel table. All pointers are non-null once selected.
//
// The conv_row_* kernels are the fused stride-1 convolution inner loops. They
// operate on zero-slacked scratch rows: the caller guarantees at least
// round-up-to-lane(lout) + k readable (and, for dxpad, writable) elements per
// row, with zeros in the slack, so the vector loops need no tail handling.
// Exactly the first `lout` outputs are meaningful.
template <typename T>
struct Table {
    T (*dot)(const T*, const T*, std::size_t);
    void (*axpy)(T, const T*, T*, std::size_t);          // y += a*x
    void (*scale)(T, T*, std::size_t);                   // x *= a
    void (*affine)(T, T, const T*, T*, std::size_t);     // y = a*x + b
    T (*sum)(const T*, std::size_t);
    T (*sumsq)(const T*, std::size_t);
    void (*relu)(const T*, T*, std::size_t);             // y = max(x, 0)
    void (*relu_grad)(const T*, const T*, T*, std::size_t);  // dx += dy * [x > 0]
    void (*sgd_update)(T*, const T*, T, std::size_t);    // w -= lr*g

    // y[l] = bias + sum_ci sum_k w[ci*wstride + k] * xpad[ci*xstride + l + k]
    void (*conv_row_fwd)(const T* xpad, std::size_t cin, std::size_t xstride, const T* w,
                         std::size_t wstride, std::size_t k, T bias, T* y, std::size_t lout);
    // dxpad[j] += sum_co sum_k w[co*wstride + k] * dypad[co*dystride + j - k]
    // for j in [0, lout + k - 1). dypad rows additionally carry k-1 readable
    // zeros before index 0 (front margin) so the shifted loads stay in bounds.
    void (*conv_row_bwd_input)(const T* dypad, std::size_t cout, std::size_t dystride, const T* w,
                               std::size_t wstride, std::size_t k, T* dxpad, std::size_t lout);
    // dw[ci*wstride + k] += dot(dypad[0..lout), xpad[ci*xstride + k ..])
    void (*conv_row_bwd_weight)(const T* dypad, const T* xpad, std::size_t cin,
                                std::size_t xstride, std::size_t k, T* dw, std::size_t wstride,
                                std::size_t lout);
};

const Table<float>& table_f32();
const Table<double>& table_f64();

template <typename T>
const Table<T>& table();
template <>
inline const Table<float>& table<float>() { return table_f32(); }
template <>
inline const Table<double>& table<double>() { return table_f64(); }

// Convenience forwarders.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) { return table<T>().dot(a, b, n); }
template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) { table<T>().axpy(a, x, y, n); }
template <typename T>
inline void scale(T a, T* x, std::size_t n) { table<T>().scale(a, x, n); }
template <typename T>
inline void affine(T a, T b, const T* x, T* y, std::size_t n) { table<T>().affine(a, b, x, y, n); }
template <typename T>
inline T sum(const T* x, std::size_t n) { return table<T>().sum(x, n); }
template <typename T>
inline T sumsq(const T* x, std::size_t n) { return table<T>().sumsq(x, n); }
template <typename T>
inline void relu(const T* x, T* y, std::size_t n) { table<T>().relu(x, y, n); }
template <typename T>
inline void relu_grad(const T* x, const T* dy, T* dx, std::size_t n) { table<T>().relu_grad(x, dy, dx, n); }
template <typename T>
inline void sgd_update(T* w, const T* g, T lr, std::size_t n) { table<T>().sgd_update(w, g, lr, n); }

// Raw tables, exposed for the scalar-vs-SIMD equivalence tests.
namespace detail {
const Table<float>& scalar_f32();
const Table<double>& scalar_f64();
#if defined(__x86_64__) || defined(_M_X64)
const Table<float>& avx2_f32();
const Table<double>& avx2_f64();
#endif
}  // namespace detail

}  // namespace fslpn::kern
