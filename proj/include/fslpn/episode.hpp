#pragma once

#include <cstdint>
#include <vector>

#include "fslpn/dataset.hpp"

namespace fslpn {

// One C-way N-shot task: N support and Q query rows per sampled class,
// disjoint by row identity. For the binary detection task the roster is
// {0 normal, 1 abnormal}.
struct Episode {
    std::vector<int> classes;                 // roster of sampled class ids
    std::vector<std::size_t> support_rows;    // C*N dataset row indices
    std::vector<std::size_t> query_rows;      // C*Q dataset row indices
    std::vector<int> support_labels;
    std::vector<int> query_labels;
};

// Classes drawn uniformly without replacement, then N+Q distinct rows per
// class. Deterministic given the seed.
Episode sample_episode(const Dataset& ds, int ways, int shots, int queries, std::uint64_t seed);

}  // namespace fslpn
