#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fslpn/config.hpp"
#include "fslpn/dataset.hpp"
#include "fslpn/losses.hpp"
#include "fslpn/metrics.hpp"
#include "fslpn/model.hpp"
#include "fslpn/select.hpp"

// Two-stage training: contrastive pretraining of extractor + head (theta),
// then classifier training (phi) with theta frozen and batch norm in eval
// mode, followed by episodic evaluation, plus the ablation and sweep drivers.
//
// Determinism: training loops are single-threaded and consume per-episode
// seeds derived from the run seed; evaluation episodes are independently
// seeded and merge integer confusion counts, so thread count does not change
// any result. Parallelism across runs (seeds / variants / sweep points) keeps
// each run self-contained.

namespace fslpn {

enum class Stage2Loss { nll, infomax };

// Ablation rows: raw-feature prototypes, pretrained extractor with a plain
// dense classifier, and the prototype path.
enum class VariantKind { pn_raw, linear, proto };

struct TrainSettings {
    ExtractorConfig extractor;
    HeadConfig head;
    ClassifierConfig classifier;
    double learning_rate = 0.001;
    int stage1_episodes = 1000;
    int stage2_episodes = 1000;
    double tau = 0.1;
    double beta = 1.0;   // == tau disables CII
    double alpha = 0.001;
    Stage2Loss stage2 = Stage2Loss::infomax;
    int ways = 2;
    int shots = 2;
    int queries = 15;
    int eval_episodes = 200;

    static TrainSettings from_config(const RunConfig& cfg, std::size_t input_length);
};

struct StageReport {
    std::vector<float> loss_curve;
    std::size_t skipped_anchors = 0;  // stage 1 diagnostics
    std::size_t clamped = 0;          // stage 2 log underflow diagnostics
    std::uint64_t extractor_checksum = 0;
    std::uint64_t head_checksum = 0;
};

// Stage 1: creates theta in `ps` and trains it with the contrastive loss.
StageReport pretrain_extractor(const Dataset& train, const TrainSettings& s, std::uint64_t seed,
                               ParameterSet<float>& ps);

// Stage 2: freezes theta, creates and trains phi (prototype path or the
// linear baseline head). Throws a contract error if theta changed.
StageReport train_classifier(const Dataset& train, const TrainSettings& s, std::uint64_t seed,
                             ParameterSet<float>& ps, VariantKind kind = VariantKind::proto);

struct EvalOutcome {
    ConfusionCounts counts;
    MetricsReport metrics;
    int episodes = 0;
    std::uint64_t seed = 0;
};

EvalOutcome evaluate(const Dataset& test, const TrainSettings& s, std::uint64_t seed,
                     ParameterSet<float>& ps, VariantKind kind = VariantKind::proto,
                     int threads = 1);

// ---------------------------------------------------------------------------
// ablation / sweep drivers
// ---------------------------------------------------------------------------

struct VariantSpec {
    std::string name;
    VariantKind kind = VariantKind::proto;
    bool cii = true;              // beta > tau during pretraining
    Stage2Loss loss = Stage2Loss::nll;
    bool use_regularizer = false;
};

// The five ablation rows, weakest first.
std::vector<VariantSpec> ablation_variants();

struct RunRow {
    std::string name;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;  // set when the variant failed; table row is annotated
    MetricsReport metrics;
    double wall_seconds = 0.0;
};

RunRow run_variant(const Dataset& train, const Dataset& test, const TrainSettings& base,
                   const VariantSpec& variant, std::uint64_t seed);

// Trains and evaluates every variant under identical seeds; pretrained
// extractors are shared between variants that use the same contrastive
// temperatures. Parallel across seeds.
std::vector<RunRow> run_ablation(const Dataset& train, const Dataset& test,
                                 const TrainSettings& base,
                                 const std::vector<std::uint64_t>& seeds, int threads);

// One train+evaluate cycle per swept value under shared seeds. Supported
// parameters: conv_layers | out_dim | alpha | shots.
std::vector<RunRow> run_sweep(const Dataset& train, const Dataset& test, const TrainSettings& base,
                              const std::string& parameter, const std::vector<double>& values,
                              const std::vector<std::uint64_t>& seeds, int threads);

// Merges confusion counts of all ok rows with the same name.
MetricsReport aggregate_rows(const std::vector<RunRow>& rows, const std::string& name);

// Tab-separated table with a header row, percentages to 2 decimals.
std::string format_table(const std::vector<RunRow>& rows,
                         const std::vector<std::string>& row_order);

// ---------------------------------------------------------------------------
// dataset preparation (load -> encode -> select -> normalize)
// ---------------------------------------------------------------------------

struct PreparedData {
    Dataset data;
    FeatureSelectionReport report;
    EncodingMap encoding;
    std::vector<std::size_t> kept;
};

// Training flow: encoding map and feature selection derived from this file.
PreparedData prepare_dataset(const std::string& path, Schema schema, const SelectConfig& sc);

// Evaluation/inference flow: reuse a training-derived encoding and selection.
Dataset prepare_dataset_with(const std::string& path, Schema schema, const EncodingMap& encoding,
                             const std::vector<std::size_t>& kept);

// ---------------------------------------------------------------------------
// inference helpers
// ---------------------------------------------------------------------------

// Embeds dataset rows with the trained extractor+classifier.
Tensor<float> embed_rows(const Dataset& ds, const std::vector<std::size_t>& rows,
                         const TrainSettings& s, ParameterSet<float>& ps);

// Class prototypes over an entire labeled dataset (inference support source).
PrototypeSet<float> build_prototypes(const Dataset& support, const TrainSettings& s,
                                     ParameterSet<float>& ps);

}  // namespace fslpn
