#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fslpn {

// Fully resolved run configuration. Every field has a default except the
// dataset paths. File format: plain text `key = value`, `#` comments, section
// headers [data] [model] [train] [eval]; flags override file values; the
// resolved config is echoed into every output artifact.
struct RunConfig {
    // [data]
    std::string dataset;
    std::string test_dataset;
    std::string schema = "unsw_nb15";
    std::string out_dir = "out";
    std::string checkpoint;           // input checkpoint for train/evaluate/infer
    int select_count = 0;             // 0 = schema default (13 unsw / 15 nsl)
    double correlation_threshold = 0.7;
    int mi_bins = 20;

    // [model]
    int conv_layers = 9;
    int width = 64;
    int out_dim = 32;
    int head_hidden = 128;
    int head_out = 128;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    // [train]
    double learning_rate = 0.001;
    int episodes = 1000;          // stage-1 episodes
    int stage2_episodes = 1000;
    double tau = 0.1;
    double beta = 1.0;
    double alpha = 0.001;
    std::string stage2_loss = "infomax";  // infomax | nll
    int ways = 2;
    int shots = 2;
    int queries = 15;

    // [eval]
    int eval_episodes = 200;
    std::string seeds = "1,2,3,4,5";
    int threads = 0;  // 0 = hardware concurrency

    std::vector<std::uint64_t> seed_list() const;

    // Canonical text form; parse(serialize()) round-trips.
    std::string serialize() const;

    void validate() const;
};

// Parses a config file on top of defaults. Unknown keys fail with the nearest
// valid key named; type mismatches fail with the expected type.
RunConfig parse_config_file(const std::string& path);

// Applies `key = value` lines from text (same grammar as the file).
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);

// Sets one key (section inferred; keys are unique across sections). Used for
// flag overrides.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// FSLPN_OUT_DIR overrides the output directory only.
void apply_env_overrides(RunConfig& cfg);

}  // namespace fslpn
