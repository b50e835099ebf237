#pragma once

#include <cstdint>
#include <string>

namespace fslpn {

// Confusion counts with "abnormal" as the positive class (intrusion-detection
// convention: an attack flagged as attack is a true positive, normal traffic
// flagged as attack is a false positive / false alarm).
struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct MetricsReport {
    ConfusionCounts counts;
    double precision = 0.0;  // TP/(TP+FP)
    double recall = 0.0;     // TP/(TP+FN)
    double f1 = 0.0;         // 2PR/(P+R)
    double far = 0.0;        // FP/(FP+TN)
    double accuracy = 0.0;   // (TP+TN)/total

    static MetricsReport from_counts(const ConfusionCounts& c);

    // Percentages with 2 decimals, table precision.
    std::string to_line() const;
};

}  // namespace fslpn
