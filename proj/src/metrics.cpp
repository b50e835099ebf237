#include "fslpn/metrics.hpp"

#include <cstdio>

namespace fslpn {

MetricsReport MetricsReport::from_counts(const ConfusionCounts& c) {
    MetricsReport m;
    m.counts = c;
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    m.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    m.recall = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    m.far = (fp + tn) > 0.0 ? fp / (fp + tn) : 0.0;
    m.accuracy = c.total() > 0 ? (tp + tn) / static_cast<double>(c.total()) : 0.0;
    return m;
}

std::string MetricsReport::to_line() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "precision=%.2f%% recall=%.2f%% f1=%.2f%% far=%.2f%% accuracy=%.2f%%",
                  precision * 100.0, recall * 100.0, f1 * 100.0, far * 100.0, accuracy * 100.0);
    return buf;
}

}  // namespace fslpn
