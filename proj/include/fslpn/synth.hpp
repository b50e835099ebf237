#pragma once

#include <cstdint>
#include <string>

#include "fslpn/dataset.hpp"

namespace fslpn {

// Deterministic schema-shaped dataset generator. Emits CSV files with the
// exact unsw_nb15 / nsl_kdd column contracts and a planted latent class
// structure: a compact normal cluster plus a mixture of attack-category
// clusters, informative linear and nonlinear feature mixes, class-dependent
// categorical columns, near-duplicate columns for the correlation pass, one
// constant column, and uninformative noise columns. Train/test files drawn
// with different seeds share the same generative process.
struct SynthConfig {
    Schema schema = Schema::unsw_nb15;
    std::size_t rows = 4000;
    std::uint64_t seed = 1;
    double attack_spread = 1.0;  // scales attack cluster distance from normal
};

void write_synthetic_csv(const std::string& path, const SynthConfig& cfg);

}  // namespace fslpn
