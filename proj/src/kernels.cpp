#include "fslpn/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "fslpn/errors.hpp"

namespace fslpn::kern {

namespace {

Backend detect() {
    const char* env = std::getenv("FSLPN_KERNELS");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_supports(Backend::avx2))
                throw_contract("FSLPN_KERNELS=avx2 but this CPU lacks AVX2/FMA");
            return Backend::avx2;
        }
        throw_contract(std::string("unknown FSLPN_KERNELS value: ") + env);
    }
    return cpu_supports(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& selected() {
    static std::atomic<Backend> b{detect()};
    return b;
}

}  // namespace

bool cpu_supports(Backend b) {
    if (b == Backend::scalar) return true;
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    (void)b;
    return false;
#endif
}

Backend active() { return selected().load(std::memory_order_relaxed); }

void force(Backend b) {
    if (!cpu_supports(b))
        throw_contract(std::string("kernel backend not supported on this CPU: ") + name(b));
    selected().store(b, std::memory_order_relaxed);
}

const char* name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

const Table<float>& table_f32() {
#if defined(__x86_64__) || defined(_M_X64)
    if (active() == Backend::avx2) return detail::avx2_f32();
#endif
    return detail::scalar_f32();
}

const Table<double>& table_f64() {
#if defined(__x86_64__) || defined(_M_X64)
    if (active() == Backend::avx2) return detail::avx2_f64();
#endif
    return detail::scalar_f64();
}

}  // namespace fslpn::kern
