#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "fslpn/errors.hpp"
#include "fslpn/rng.hpp"

namespace fslpn {

// Dense row-major n-d array with an optional same-shape gradient buffer.
// Scalar type is float in training mode and double in gradient-check mode.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> v;  // values
    std::vector<T> g;  // gradient; empty, or v.size() elements

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        v.assign(count(shape), T(0));
    }

    Tensor(std::vector<std::size_t> s, std::vector<T> vals) : shape(std::move(s)), v(std::move(vals)) {
        if (v.size() != count(shape))
            throw_contract("tensor value count " + std::to_string(v.size()) +
                           " does not match shape product " + std::to_string(count(shape)));
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    std::size_t size() const { return v.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t extent(std::size_t axis) const { return shape[axis]; }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& operator()(std::size_t i) { return v[i]; }
    T operator()(std::size_t i) const { return v[i]; }
    T& operator()(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
    T operator()(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }
    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return v[(i * shape[1] + j) * shape[2] + k];
    }
    T operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return v[(i * shape[1] + j) * shape[2] + k];
    }

    // Pointer to row (i, j, :) of a rank-3 tensor / row (i, :) of a rank-2 one.
    T* row(std::size_t i, std::size_t j) { return v.data() + (i * shape[1] + j) * shape[2]; }
    const T* row(std::size_t i, std::size_t j) const { return v.data() + (i * shape[1] + j) * shape[2]; }
    T* row(std::size_t i) { return v.data() + i * shape[1]; }
    const T* row(std::size_t i) const { return v.data() + i * shape[1]; }

    bool has_grad() const { return !g.empty(); }
    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), T(0));
    }
    void zero_grad() {
        if (!g.empty()) std::fill(g.begin(), g.end(), T(0));
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    void fill_gaussian(Rng& rng, T stddev) {
        for (auto& x : v) x = static_cast<T>(rng.gaussian()) * stddev;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }
};

// Shape guard used at op entry; names the offending axes.
template <typename T>
inline void require_rank(const Tensor<T>& t, std::size_t r, const char* what) {
    if (t.rank() != r)
        throw_contract(std::string(what) + ": expected rank " + std::to_string(r) + ", got shape " +
                       t.shape_str());
}

template <typename T>
inline void require_extent(const Tensor<T>& t, std::size_t axis, std::size_t want, const char* what) {
    if (t.extent(axis) != want)
        throw_contract(std::string(what) + ": axis " + std::to_string(axis) + " has extent " +
                       std::to_string(t.extent(axis)) + ", expected " + std::to_string(want));
}

}  // namespace fslpn
