#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>

#include "fslpn/kernels.hpp"
#include "fslpn/tensor.hpp"

namespace fslpn {

// Parameter partitions. theta = extractor + head (stage 1), phi = classifier
// (stage 2). Freezing a partition makes the optimizer skip it.
enum class Partition { extractor, head, classifier };

inline const char* partition_name(Partition p) {
    switch (p) {
        case Partition::extractor: return "extractor";
        case Partition::head: return "head";
        case Partition::classifier: return "classifier";
    }
    return "?";
}

// Partition is carried in the entry name prefix ("extractor.stem.w" style) in
// checkpoints; in memory it is an explicit tag fixed at add() time.
inline Partition partition_from_name(const std::string& name) {
    if (name.rfind("extractor.", 0) == 0) return Partition::extractor;
    if (name.rfind("head.", 0) == 0) return Partition::head;
    if (name.rfind("classifier.", 0) == 0) return Partition::classifier;
    throw_contract("parameter name has no partition prefix: " + name);
}

template <typename T>
struct Param {
    Tensor<T> t;
    Partition part;
    bool trainable;  // false for batch-norm running stats
};

// Named collection of trainable tensors. std::map keeps iteration order
// deterministic (checkpoints, checksums, optimizer sweeps all rely on it) and
// node addresses stable so layers can hold Param pointers.
template <typename T>
class ParameterSet {
  public:
    Param<T>& add(const std::string& name, Partition part, Tensor<T> t, bool trainable = true) {
        if (entries_.count(name)) throw_contract("duplicate parameter name: " + name);
        auto& p = entries_[name];
        p.t = std::move(t);
        p.part = part;
        p.trainable = trainable;
        return p;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    Param<T>& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw_contract("unknown parameter: " + name);
        return it->second;
    }
    const Param<T>& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw_contract("unknown parameter: " + name);
        return it->second;
    }

    void freeze(Partition part, bool frozen = true) { frozen_[idx(part)] = frozen; }
    bool is_frozen(Partition part) const { return frozen_[idx(part)]; }

    std::size_t size() const { return entries_.size(); }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grads() {
        for (auto& [name, p] : entries_)
            if (p.trainable) p.t.zero_grad();
    }

    std::size_t value_count(Partition part) const {
        std::size_t n = 0;
        for (const auto& [name, p] : entries_)
            if (p.part == part) n += p.t.size();
        return n;
    }

    // FNV-1a over the raw value bytes of a partition, in name order. Used for
    // the bit-exact freeze contract checks.
    std::uint64_t checksum(Partition part) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto& [name, p] : entries_) {
            if (p.part != part) continue;
            for (T x : p.t.v) {
                unsigned char bytes[sizeof(T)];
                std::memcpy(bytes, &x, sizeof(T));
                for (unsigned char b : bytes) {
                    h ^= b;
                    h *= 1099511628211ULL;
                }
            }
        }
        return h;
    }

  private:
    static std::size_t idx(Partition p) { return static_cast<std::size_t>(p); }

    std::map<std::string, Param<T>> entries_;
    std::array<bool, 3> frozen_{false, false, false};
};

// w <- w - lr*g for every trainable entry of an unfrozen partition. A missing
// gradient on an entry due an update is an optimizer contract error; frozen
// partitions are left bit-identical (never touched).
template <typename T>
inline void sgd_step(ParameterSet<T>& params, T lr) {
    for (auto& [name, p] : params) {
        if (!p.trainable || params.is_frozen(p.part)) continue;
        if (!p.t.has_grad())
            throw_contract("sgd_step: missing gradient for unfrozen parameter " + name);
        kern::sgd_update(p.t.v.data(), p.t.g.data(), lr, p.t.size());
    }
}

}  // namespace fslpn
