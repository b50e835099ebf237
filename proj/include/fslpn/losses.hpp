#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fslpn/kernels.hpp"
#include "fslpn/tensor.hpp"

// Training objectives: supervised contrastive loss with class-information
// injection (CII) temperatures, prototype generation, prototypical
// classification probabilities / negative log-likelihood, the InfoMax binary
// cross-entropy objective, the prototype-distance regularizer, and their
// weighted combination. Every loss returns analytic gradients and is checked
// against central finite differences.
//
// Internal accumulation is double even for float tensors; exp() of scaled
// similarities overflows float for small temperatures.

namespace fslpn {

// Inner product of two unit-norm embeddings, in [-1, 1].
template <typename T>
T similarity(const T* a, const T* b, std::size_t d) {
    return kern::dot(a, b, d);
}

// ---------------------------------------------------------------------------
// supervised contrastive loss with CII temperatures
// ---------------------------------------------------------------------------

template <typename T>
struct SupConResult {
    T loss = T(0);
    Tensor<T> d_z;                    // gradient w.r.t. the embedding batch
    std::size_t skipped_anchors = 0;  // anchors with no same-class partner
};

// Mean over anchors of the per-anchor loss. The anchor is excluded from both
// its numerator sum and the denominator. Same-class denominator terms use
// temperature beta, different-class terms use tau, the numerator always uses
// tau; beta == tau recovers the plain supervised contrastive loss.
template <typename T>
SupConResult<T> supcon_cii_loss(const Tensor<T>& z, const std::vector<int>& labels, T tau, T beta) {
    require_rank(z, 2, "supcon embedding batch");
    const std::size_t n = z.extent(0), dim = z.extent(1);
    if (labels.size() != n) throw_contract("supcon: label count does not match batch");
    if (!(tau > T(0))) throw_contract("supcon: tau must be positive");
    if (beta < tau) throw_contract("supcon: need 0 < tau <= beta (beta == tau recovers the plain loss)");

    SupConResult<T> out;
    out.d_z = Tensor<T>(z.shape);
    if (n < 2) {
        out.skipped_anchors = n;
        return out;
    }

    // Pairwise similarities once.
    std::vector<double> sim(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = static_cast<double>(similarity(z.row(i), z.row(j), dim));
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }

    const double dtau = static_cast<double>(tau), dbeta = static_cast<double>(beta);
    double total = 0.0;
    std::size_t contributing = 0;
    std::vector<double> coeff(n * n, 0.0);  // dL_i/ds_iq, before the 1/M factor
    std::vector<double> scaled(n);

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t partners = 0;
        for (std::size_t q = 0; q < n; ++q)
            if (q != i && labels[q] == labels[i]) ++partners;
        if (partners == 0) {
            ++out.skipped_anchors;
            continue;
        }
        ++contributing;

        double max_scaled = -1e300;
        for (std::size_t q = 0; q < n; ++q) {
            if (q == i) continue;
            const double temp = labels[q] == labels[i] ? dbeta : dtau;
            scaled[q] = sim[i * n + q] / temp;
            max_scaled = std::max(max_scaled, scaled[q]);
        }
        double denom = 0.0;
        for (std::size_t q = 0; q < n; ++q)
            if (q != i) denom += std::exp(scaled[q] - max_scaled);
        const double log_denom = max_scaled + std::log(denom);

        double numer = 0.0;
        for (std::size_t q = 0; q < n; ++q)
            if (q != i && labels[q] == labels[i]) numer += sim[i * n + q];
        total += -numer / (static_cast<double>(partners) * dtau) + log_denom;

        for (std::size_t q = 0; q < n; ++q) {
            if (q == i) continue;
            const bool same = labels[q] == labels[i];
            const double temp = same ? dbeta : dtau;
            double c = std::exp(scaled[q] - max_scaled) / (denom * temp);
            if (same) c -= 1.0 / (static_cast<double>(partners) * dtau);
            coeff[i * n + q] = c;
        }
    }

    if (contributing == 0) return out;
    const double inv_m = 1.0 / static_cast<double>(contributing);
    out.loss = static_cast<T>(total * inv_m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < n; ++q) {
            const double c = coeff[i * n + q] * inv_m;
            if (c == 0.0) continue;
            kern::axpy(static_cast<T>(c), z.row(q), out.d_z.row(i), dim);
            kern::axpy(static_cast<T>(c), z.row(i), out.d_z.row(q), dim);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// prototypes
// ---------------------------------------------------------------------------

template <typename T>
struct PrototypeSet {
    Tensor<T> protos;                                // [C, D]
    std::vector<int> class_ids;                      // roster, aligned by row
    int normal_index = -1;                           // roster position of the normal class
    std::vector<std::vector<std::size_t>> members;   // support indices per class, id-sorted
    std::size_t support_count = 0;

    std::size_t ways() const { return class_ids.size(); }
    std::size_t dim() const { return protos.extent(1); }

    int roster_index(int class_id) const {
        for (std::size_t c = 0; c < class_ids.size(); ++c)
            if (class_ids[c] == class_id) return static_cast<int>(c);
        return -1;
    }
};

// Per-class arithmetic mean of the support embeddings. Accumulation runs in
// ascending sample-id order, which makes the result bit-exact invariant to
// permutations of the support set.
template <typename T>
PrototypeSet<T> compute_prototypes(const Tensor<T>& emb, const std::vector<int>& labels,
                                   const std::vector<int>& roster,
                                   const std::vector<std::uint64_t>& sample_ids,
                                   int normal_class = -1) {
    require_rank(emb, 2, "prototype support embeddings");
    const std::size_t m = emb.extent(0), dim = emb.extent(1);
    if (labels.size() != m) throw_contract("compute_prototypes: label count mismatch");
    if (!sample_ids.empty() && sample_ids.size() != m)
        throw_contract("compute_prototypes: sample id count mismatch");

    PrototypeSet<T> out;
    out.class_ids = roster;
    out.protos = Tensor<T>({roster.size(), dim});
    out.members.resize(roster.size());
    out.support_count = m;

    for (std::size_t c = 0; c < roster.size(); ++c) {
        auto& idx = out.members[c];
        for (std::size_t i = 0; i < m; ++i)
            if (labels[i] == roster[c]) idx.push_back(i);
        if (idx.empty())
            throw_data("compute_prototypes: class " + std::to_string(roster[c]) +
                       " has no support samples");
        if (!sample_ids.empty())
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                if (sample_ids[a] != sample_ids[b]) return sample_ids[a] < sample_ids[b];
                return a < b;
            });
        T* proto = out.protos.row(c);
        for (std::size_t i : idx) kern::axpy(T(1), emb.row(i), proto, dim);
        kern::scale(T(1) / static_cast<T>(idx.size()), proto, dim);
        if (roster[c] == normal_class) out.normal_index = static_cast<int>(c);
    }
    return out;
}

// Scatters prototype gradients back to the support embeddings.
template <typename T>
Tensor<T> prototypes_backward(const PrototypeSet<T>& pset, const Tensor<T>& d_protos) {
    Tensor<T> d_emb({pset.support_count, pset.dim()});
    for (std::size_t c = 0; c < pset.ways(); ++c) {
        const T inv = T(1) / static_cast<T>(pset.members[c].size());
        for (std::size_t i : pset.members[c])
            kern::axpy(inv, d_protos.row(c), d_emb.row(i), pset.dim());
    }
    return d_emb;
}

// ---------------------------------------------------------------------------
// prototypical probability (softmax over negative squared distances)
// ---------------------------------------------------------------------------

template <typename T>
std::vector<double> squared_distances(const T* q, const PrototypeSet<T>& pset) {
    std::vector<double> d(pset.ways());
    for (std::size_t c = 0; c < pset.ways(); ++c) {
        double acc = 0.0;
        const T* p = pset.protos.row(c);
        for (std::size_t k = 0; k < pset.dim(); ++k) {
            const double diff = static_cast<double>(q[k]) - static_cast<double>(p[k]);
            acc += diff * diff;
        }
        d[c] = acc;
    }
    return d;
}

inline std::vector<double> softmax_neg(const std::vector<double>& d) {
    const double dmin = *std::min_element(d.begin(), d.end());
    std::vector<double> p(d.size());
    double z = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) {
        p[c] = std::exp(dmin - d[c]);
        z += p[c];
    }
    for (auto& v : p) v /= z;
    return p;
}

// Normalized, non-negative class membership probabilities for one query.
template <typename T>
std::vector<double> class_probability(const T* q, const PrototypeSet<T>& pset) {
    return softmax_neg(squared_distances(q, pset));
}

template <typename T>
int predict_class(const T* q, const PrototypeSet<T>& pset) {
    const auto d = squared_distances(q, pset);
    const std::size_t best = static_cast<std::size_t>(
        std::min_element(d.begin(), d.end()) - d.begin());
    return pset.class_ids[best];
}

// ---------------------------------------------------------------------------
// query-set losses
// ---------------------------------------------------------------------------

template <typename T>
struct QueryLoss {
    T value = T(0);
    Tensor<T> d_query;  // [M, D]
    Tensor<T> d_proto;  // [C, D]
    std::size_t clamped = 0;          // log-argument underflow events
    bool dropped_normal_term = false;    // infomax only
    bool dropped_abnormal_term = false;  // infomax only
};

namespace detail {

constexpr double kLogClamp = 1e-30;

// -log of a softmax probability via logsumexp; exact even when the
// probability underflows. `cap` mirrors the documented clamp-at-1e-30
// behavior: capped terms contribute no gradient.
inline double neg_log_prob(const std::vector<double>& d, std::size_t target, bool& capped) {
    const double dmin = *std::min_element(d.begin(), d.end());
    double z = 0.0;
    for (double v : d) z += std::exp(dmin - v);
    const double nll = d[target] - dmin + std::log(z);
    const double cap = -std::log(kLogClamp);
    capped = nll > cap;
    return capped ? cap : nll;
}

}  // namespace detail

// Mean over queries of -log p(true class). target_idx holds roster positions.
template <typename T>
QueryLoss<T> proto_nll_loss(const Tensor<T>& queries, const std::vector<int>& target_idx,
                            const PrototypeSet<T>& pset) {
    require_rank(queries, 2, "nll query embeddings");
    const std::size_t m = queries.extent(0), dim = queries.extent(1);
    if (target_idx.size() != m) throw_contract("proto_nll_loss: target count mismatch");
    if (dim != pset.dim()) throw_contract("proto_nll_loss: embedding dimension mismatch");

    QueryLoss<T> out;
    out.d_query = Tensor<T>({m, dim});
    out.d_proto = Tensor<T>(pset.protos.shape);
    const double inv_m = 1.0 / static_cast<double>(m);
    double total = 0.0;

    for (std::size_t i = 0; i < m; ++i) {
        const int t = target_idx[i];
        if (t < 0 || static_cast<std::size_t>(t) >= pset.ways())
            throw_contract("proto_nll_loss: query label not in roster");
        const auto d = squared_distances(queries.row(i), pset);
        bool capped = false;
        total += detail::neg_log_prob(d, static_cast<std::size_t>(t), capped);
        if (capped) {
            ++out.clamped;
            continue;  // clamped term is constant, no gradient
        }
        const auto p = softmax_neg(d);
        for (std::size_t c = 0; c < pset.ways(); ++c) {
            const double g = ((c == static_cast<std::size_t>(t) ? 1.0 : 0.0) - p[c]) * inv_m;
            // d d_c / d q = 2 (q - proto_c)
            const T* q = queries.row(i);
            const T* pr = pset.protos.row(c);
            T* dq = out.d_query.row(i);
            T* dp = out.d_proto.row(c);
            for (std::size_t k = 0; k < dim; ++k) {
                const T diff2 = T(2) * (q[k] - pr[k]);
                dq[k] += static_cast<T>(g) * diff2;
                dp[k] -= static_cast<T>(g) * diff2;
            }
        }
    }
    out.value = static_cast<T>(total * inv_m);
    return out;
}

// InfoMax binary cross-entropy against the normal prototype. S(C_n, x) is the
// normal-class probability; the bound is stated as a quantity to maximize, so
// it is negated here and a single minimizer drives both stages:
//   L = -[ (1/|Qn|) sum log S(C_n, x_n) + (1/|Qa|) sum log(1 - S(C_n, x_a)) ]
// An empty Q_n or Q_a drops that term with a diagnostic flag.
template <typename T>
QueryLoss<T> infomax_loss(const Tensor<T>& queries, const std::vector<bool>& is_abnormal,
                          const PrototypeSet<T>& pset) {
    require_rank(queries, 2, "infomax query embeddings");
    const std::size_t m = queries.extent(0), dim = queries.extent(1);
    if (is_abnormal.size() != m) throw_contract("infomax_loss: flag count mismatch");
    if (pset.normal_index < 0) throw_contract("infomax_loss: prototype set has no normal class");
    const std::size_t nidx = static_cast<std::size_t>(pset.normal_index);

    std::size_t n_normal = 0, n_abnormal = 0;
    for (bool a : is_abnormal) (a ? n_abnormal : n_normal)++;

    QueryLoss<T> out;
    out.d_query = Tensor<T>({m, dim});
    out.d_proto = Tensor<T>(pset.protos.shape);
    out.dropped_normal_term = n_normal == 0;
    out.dropped_abnormal_term = n_abnormal == 0;

    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto d = squared_distances(queries.row(i), pset);
        const auto p = softmax_neg(d);
        const double weight =
            is_abnormal[i] ? 1.0 / static_cast<double>(n_abnormal) : 1.0 / static_cast<double>(n_normal);
        std::vector<double> dd(pset.ways(), 0.0);  // dL/dd_c for this query

        if (!is_abnormal[i]) {
            // -log S, S = p_normal
            bool capped = false;
            total += weight * detail::neg_log_prob(d, nidx, capped);
            if (capped) {
                ++out.clamped;
                continue;
            }
            for (std::size_t c = 0; c < pset.ways(); ++c)
                dd[c] = weight * ((c == nidx ? 1.0 : 0.0) - p[c]);
        } else {
            // -log(1 - S) = logsumexp(-d) - logsumexp_{c != normal}(-d)
            const double dmin = *std::min_element(d.begin(), d.end());
            double z_all = 0.0, z_rest = 0.0;
            for (std::size_t c = 0; c < pset.ways(); ++c) {
                const double e = std::exp(dmin - d[c]);
                z_all += e;
                if (c != nidx) z_rest += e;
            }
            if (z_rest <= 0.0 || std::log(z_all / z_rest) > -std::log(detail::kLogClamp)) {
                total += weight * -std::log(detail::kLogClamp);
                ++out.clamped;
                continue;
            }
            total += weight * std::log(z_all / z_rest);
            const double one_minus_s = z_rest / z_all;
            for (std::size_t c = 0; c < pset.ways(); ++c) {
                const double p_rest = c == nidx ? 0.0 : p[c] / one_minus_s;
                dd[c] = weight * (p_rest - p[c]);
            }
        }

        const T* q = queries.row(i);
        T* dq = out.d_query.row(i);
        for (std::size_t c = 0; c < pset.ways(); ++c) {
            if (dd[c] == 0.0) continue;
            const T* pr = pset.protos.row(c);
            T* dp = out.d_proto.row(c);
            for (std::size_t k = 0; k < dim; ++k) {
                const T diff2 = T(2) * (q[k] - pr[k]);
                dq[k] += static_cast<T>(dd[c]) * diff2;
                dp[k] -= static_cast<T>(dd[c]) * diff2;
            }
        }
    }
    out.value = static_cast<T>(total);
    return out;
}

// Mean squared Euclidean distance from each query embedding to its true-class
// prototype (Eq. written for one sample; mean keeps alpha batch-size
// independent).
template <typename T>
QueryLoss<T> distance_regularizer(const Tensor<T>& queries, const std::vector<int>& target_idx,
                                  const PrototypeSet<T>& pset) {
    require_rank(queries, 2, "regularizer query embeddings");
    const std::size_t m = queries.extent(0), dim = queries.extent(1);
    if (target_idx.size() != m) throw_contract("distance_regularizer: target count mismatch");

    QueryLoss<T> out;
    out.d_query = Tensor<T>({m, dim});
    out.d_proto = Tensor<T>(pset.protos.shape);
    const double inv_m = 1.0 / static_cast<double>(m);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const int t = target_idx[i];
        if (t < 0 || static_cast<std::size_t>(t) >= pset.ways())
            throw_contract("distance_regularizer: query label not in roster");
        const T* q = queries.row(i);
        const T* pr = pset.protos.row(static_cast<std::size_t>(t));
        T* dq = out.d_query.row(i);
        T* dp = out.d_proto.row(static_cast<std::size_t>(t));
        for (std::size_t k = 0; k < dim; ++k) {
            const double diff = static_cast<double>(q[k]) - static_cast<double>(pr[k]);
            total += diff * diff;
            const T g = static_cast<T>(2.0 * diff * inv_m);
            dq[k] += g;
            dp[k] -= g;
        }
    }
    out.value = static_cast<T>(total * inv_m);
    return out;
}

// L_total = classification + alpha * regularizer, gradients combined.
template <typename T>
QueryLoss<T> cfd_loss(const QueryLoss<T>& classification, const QueryLoss<T>& regularizer, T alpha) {
    if (alpha < T(0)) throw_contract("cfd_loss: alpha must be non-negative");
    QueryLoss<T> out = classification;
    out.value += alpha * regularizer.value;
    for (std::size_t i = 0; i < out.d_query.size(); ++i)
        out.d_query.v[i] += alpha * regularizer.d_query.v[i];
    for (std::size_t i = 0; i < out.d_proto.size(); ++i)
        out.d_proto.v[i] += alpha * regularizer.d_proto.v[i];
    out.clamped += regularizer.clamped;
    return out;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy (linear-classifier baseline)
// ---------------------------------------------------------------------------

template <typename T>
struct CeResult {
    T loss = T(0);
    Tensor<T> d_logits;
};

template <typename T>
CeResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets) {
    require_rank(logits, 2, "cross-entropy logits");
    const std::size_t m = logits.extent(0), c = logits.extent(1);
    if (targets.size() != m) throw_contract("softmax_cross_entropy: target count mismatch");
    CeResult<T> out;
    out.d_logits = Tensor<T>(logits.shape);
    const double inv_m = 1.0 / static_cast<double>(m);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = logits.row(i);
        double mx = static_cast<double>(row[0]);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= c)
            throw_contract("softmax_cross_entropy: target out of range");
        total += -(static_cast<double>(row[t]) - mx - std::log(z));
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(static_cast<double>(row[j]) - mx) / z;
            out.d_logits(i, j) =
                static_cast<T>((p - (j == static_cast<std::size_t>(t) ? 1.0 : 0.0)) * inv_m);
        }
    }
    out.loss = static_cast<T>(total * inv_m);
    return out;
}

}  // namespace fslpn
