#pragma once

#include <string>
#include <vector>

#include "fslpn/dataset.hpp"

namespace fslpn {

// SULOV-style selection: estimate a mutual-information score (MIS) of every
// feature against the binary label, drop the lower-MIS member of every
// highly correlated pair, rank survivors by MIS and cut to the target count.

struct FeatureDecision {
    std::string name;
    std::size_t index = 0;  // original column index
    double mis = 0.0;
    bool kept = false;
    std::string reason;
};

struct FeatureSelectionReport {
    std::vector<FeatureDecision> decisions;  // original column order
    std::vector<double> correlation;         // F x F Pearson matrix, row-major
    std::size_t feature_count = 0;
    std::size_t target_count = 0;
    double correlation_threshold = 0.0;

    double corr(std::size_t i, std::size_t j) const { return correlation[i * feature_count + j]; }

    // Kept columns in ascending original order, ready for apply_selection().
    std::vector<std::size_t> kept_indices() const;

    // One record per feature: name, MIS, kept/dropped, reason.
    std::string to_text() const;
};

struct SelectConfig {
    std::size_t target_count = 0;        // callers resolve schema defaults before use
    double correlation_threshold = 0.7;
    int histogram_bins = 20;
};

FeatureSelectionReport sulov_select(const Dataset& ds, const SelectConfig& cfg);

// Histogram mutual information (nats) between one feature column and the
// binary labels; equal-width bins. Exposed for tests.
double mutual_information(const double* values, std::size_t stride, std::size_t rows,
                          const std::vector<int>& labels, int bins);

double pearson_correlation(const double* a, const double* b, std::size_t stride, std::size_t rows);

}  // namespace fslpn
