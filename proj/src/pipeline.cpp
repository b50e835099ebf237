#include "fslpn/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "fslpn/episode.hpp"
#include "fslpn/rng.hpp"

namespace fslpn {

namespace {

constexpr int kNormalClass = 0;

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Work queue over [0, count); results must be pre-allocated so scheduling
// cannot change anything observable.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    const int n = std::min<int>(threads, static_cast<int>(count));
    if (n <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

Tensor<float> rows_as_matrix(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Tensor<float> m({rows.size(), ds.cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = ds.row(rows[i]);
        for (std::size_t c = 0; c < ds.cols; ++c) m(i, c) = static_cast<float>(src[c]);
    }
    return m;
}

std::vector<std::uint64_t> ids_of(const Dataset& ds, const std::vector<std::size_t>& rows) {
    std::vector<std::uint64_t> ids(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) ids[i] = ds.row_ids[rows[i]];
    return ids;
}

std::vector<int> roster_targets(const std::vector<int>& labels, const std::vector<int>& roster) {
    std::vector<int> idx(labels.size(), -1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t c = 0; c < roster.size(); ++c)
            if (roster[c] == labels[i]) idx[i] = static_cast<int>(c);
        if (idx[i] < 0) throw_contract("query label not in episode roster");
    }
    return idx;
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t stage, std::uint64_t episode) {
    return Rng::mix(run_seed, stage * 0x100000000ULL + episode);
}

struct ProtoBatch {
    Tensor<float> support_emb;
    Tensor<float> query_emb;
    PrototypeSet<float> protos;
    std::vector<int> query_targets;
    std::vector<bool> query_abnormal;
};

// Split a joint support+query embedding batch and build prototypes.
ProtoBatch split_batch(const Tensor<float>& emb, const Episode& ep, const Dataset& ds) {
    const std::size_t s = ep.support_rows.size(), q = ep.query_rows.size();
    const std::size_t dim = emb.extent(1);
    ProtoBatch out;
    out.support_emb = Tensor<float>({s, dim});
    out.query_emb = Tensor<float>({q, dim});
    std::copy(emb.v.begin(), emb.v.begin() + static_cast<long>(s * dim), out.support_emb.v.begin());
    std::copy(emb.v.begin() + static_cast<long>(s * dim), emb.v.end(), out.query_emb.v.begin());
    out.protos = compute_prototypes(out.support_emb, ep.support_labels, ep.classes,
                                    ids_of(ds, ep.support_rows), kNormalClass);
    out.query_targets = roster_targets(ep.query_labels, ep.classes);
    out.query_abnormal.resize(q);
    for (std::size_t i = 0; i < q; ++i) out.query_abnormal[i] = ep.query_labels[i] != kNormalClass;
    return out;
}

}  // namespace

TrainSettings TrainSettings::from_config(const RunConfig& cfg, std::size_t input_length) {
    cfg.validate();
    TrainSettings s;
    s.extractor = ExtractorConfig::from_conv_layers(static_cast<std::size_t>(cfg.conv_layers));
    s.extractor.input_length = input_length;
    s.extractor.width = static_cast<std::size_t>(cfg.width);
    s.extractor.bn_momentum = cfg.bn_momentum;
    s.extractor.bn_eps = cfg.bn_eps;
    s.head.hidden = static_cast<std::size_t>(cfg.head_hidden);
    s.head.out = static_cast<std::size_t>(cfg.head_out);
    s.classifier.out_dim = static_cast<std::size_t>(cfg.out_dim);
    s.learning_rate = cfg.learning_rate;
    s.stage1_episodes = cfg.episodes;
    s.stage2_episodes = cfg.stage2_episodes;
    s.tau = cfg.tau;
    s.beta = cfg.beta;
    s.alpha = cfg.alpha;
    s.stage2 = cfg.stage2_loss == "nll" ? Stage2Loss::nll : Stage2Loss::infomax;
    s.ways = cfg.ways;
    s.shots = cfg.shots;
    s.queries = cfg.queries;
    s.eval_episodes = cfg.eval_episodes;
    return s;
}

// ---------------------------------------------------------------------------
// stage 1
// ---------------------------------------------------------------------------

StageReport pretrain_extractor(const Dataset& train, const TrainSettings& s, std::uint64_t seed,
                               ParameterSet<float>& ps) {
    Extractor<float> extractor(s.extractor);
    Head<float> head(s.head, s.extractor.width);
    Rng init_rng(Rng::mix(seed, 11));
    extractor.init(ps, init_rng);
    head.init(ps, init_rng);

    StageReport report;
    report.loss_curve.reserve(static_cast<std::size_t>(s.stage1_episodes));

    for (int e = 0; e < s.stage1_episodes; ++e) {
        const Episode ep = sample_episode(train, s.ways, s.shots, s.queries,
                                          episode_seed(seed, 1, static_cast<std::uint64_t>(e)));
        std::vector<std::size_t> rows = ep.support_rows;
        rows.insert(rows.end(), ep.query_rows.begin(), ep.query_rows.end());
        std::vector<int> labels = ep.support_labels;
        labels.insert(labels.end(), ep.query_labels.begin(), ep.query_labels.end());

        ExtractorCache<float> ecache;
        HeadCache<float> hcache;
        const Tensor<float> x = make_batch<float>(train, rows);
        const ExtractorOut<float> feat = extractor.forward(x, /*train=*/true, &ecache);
        const Tensor<float> z = head.forward(feat.pooled, &hcache);

        const auto loss = supcon_cii_loss(z, labels, static_cast<float>(s.tau),
                                          static_cast<float>(s.beta));
        if (!std::isfinite(static_cast<double>(loss.loss)))
            throw_numeric("stage-1 loss is not finite at episode " + std::to_string(e) +
                          " (lr=" + std::to_string(s.learning_rate) + ")");
        report.loss_curve.push_back(loss.loss);
        report.skipped_anchors += loss.skipped_anchors;

        ps.zero_grads();
        const Tensor<float> d_pooled = head.backward(loss.d_z, hcache);
        extractor.backward(Tensor<float>(), d_pooled, ecache);
        sgd_step(ps, static_cast<float>(s.learning_rate));
    }
    report.extractor_checksum = ps.checksum(Partition::extractor);
    report.head_checksum = ps.checksum(Partition::head);
    return report;
}

// ---------------------------------------------------------------------------
// stage 2
// ---------------------------------------------------------------------------

StageReport train_classifier(const Dataset& train, const TrainSettings& s, std::uint64_t seed,
                             ParameterSet<float>& ps, VariantKind kind) {
    if (kind == VariantKind::pn_raw)
        throw_contract("train_classifier: the raw-prototype baseline has no trainable stage");
    Extractor<float> extractor(s.extractor);
    extractor.bind(ps);
    ps.freeze(Partition::extractor);
    ps.freeze(Partition::head);
    const std::uint64_t theta_before = ps.checksum(Partition::extractor);
    const std::uint64_t head_before = ps.checksum(Partition::head);

    Rng init_rng(Rng::mix(seed, 13));
    Classifier<float> classifier(s.classifier, s.extractor.width);
    LinearHead<float> linear(s.extractor.width, static_cast<std::size_t>(s.ways));
    if (kind == VariantKind::proto)
        classifier.init(ps, init_rng);
    else
        linear.init(ps, init_rng);

    StageReport report;
    report.loss_curve.reserve(static_cast<std::size_t>(s.stage2_episodes));

    for (int e = 0; e < s.stage2_episodes; ++e) {
        const Episode ep = sample_episode(train, s.ways, s.shots, s.queries,
                                          episode_seed(seed, 2, static_cast<std::uint64_t>(e)));
        std::vector<std::size_t> rows = ep.support_rows;
        rows.insert(rows.end(), ep.query_rows.begin(), ep.query_rows.end());

        const Tensor<float> x = make_batch<float>(train, rows);
        // Theta frozen: batch norm runs on stored statistics, no extractor
        // cache is kept and no gradient flows past the feature map.
        const ExtractorOut<float> feat = extractor.forward(x, /*train=*/false, nullptr);

        float loss_value = 0.0f;
        ps.zero_grads();
        if (kind == VariantKind::proto) {
            ClassifierCache<float> ccache;
            const Tensor<float> emb = classifier.forward(feat.map, &ccache);
            ProtoBatch pb = split_batch(emb, ep, train);

            QueryLoss<float> cls;
            if (s.stage2 == Stage2Loss::nll)
                cls = proto_nll_loss(pb.query_emb, pb.query_targets, pb.protos);
            else
                cls = infomax_loss(pb.query_emb, pb.query_abnormal, pb.protos);
            const QueryLoss<float> regu =
                distance_regularizer(pb.query_emb, pb.query_targets, pb.protos);
            const QueryLoss<float> total = cfd_loss(cls, regu, static_cast<float>(s.alpha));
            loss_value = total.value;
            report.clamped += total.clamped;

            const Tensor<float> d_support = prototypes_backward(pb.protos, total.d_proto);
            Tensor<float> d_emb(emb.shape);
            const std::size_t dim = emb.extent(1);
            const std::size_t sup = ep.support_rows.size();
            for (std::size_t i = 0; i < sup; ++i)
                std::copy(d_support.row(i), d_support.row(i) + dim, d_emb.row(i));
            for (std::size_t i = 0; i < ep.query_rows.size(); ++i)
                std::copy(total.d_query.row(i), total.d_query.row(i) + dim, d_emb.row(sup + i));
            classifier.backward(d_emb, ccache);
        } else {
            std::vector<int> labels = ep.support_labels;
            labels.insert(labels.end(), ep.query_labels.begin(), ep.query_labels.end());
            DenseCache<float> lcache;
            const Tensor<float> logits = linear.forward(feat.pooled, &lcache);
            const auto ce = softmax_cross_entropy(logits, labels);
            loss_value = ce.loss;
            linear.backward(ce.d_logits, lcache);
        }

        if (!std::isfinite(static_cast<double>(loss_value)))
            throw_numeric("stage-2 loss is not finite at episode " + std::to_string(e));
        report.loss_curve.push_back(loss_value);
        sgd_step(ps, static_cast<float>(s.learning_rate));
    }

    report.extractor_checksum = ps.checksum(Partition::extractor);
    report.head_checksum = ps.checksum(Partition::head);
    if (report.extractor_checksum != theta_before || report.head_checksum != head_before)
        throw_contract("frozen extractor parameters changed during stage 2 (checksum mismatch)");
    return report;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

EvalOutcome evaluate(const Dataset& test, const TrainSettings& s, std::uint64_t seed,
                     ParameterSet<float>& ps, VariantKind kind, int threads) {
    Extractor<float> extractor(s.extractor);
    Classifier<float> classifier(s.classifier, s.extractor.width);
    LinearHead<float> linear(s.extractor.width, static_cast<std::size_t>(s.ways));
    if (kind != VariantKind::pn_raw) {
        extractor.bind(ps);
        if (kind == VariantKind::proto)
            classifier.bind(ps);
        else
            linear.bind(ps);
    }

    const std::size_t episodes = static_cast<std::size_t>(s.eval_episodes);
    std::vector<ConfusionCounts> per_episode(episodes);

    parallel_for(episodes, resolve_threads(threads), [&](std::size_t e) {
        const Episode ep = sample_episode(test, s.ways, s.shots, s.queries, episode_seed(seed, 3, e));
        ConfusionCounts& counts = per_episode[e];

        std::vector<int> predictions(ep.query_rows.size());
        if (kind == VariantKind::pn_raw) {
            // Prototypes over the raw preprocessed features.
            const Tensor<float> support = rows_as_matrix(test, ep.support_rows);
            const Tensor<float> query = rows_as_matrix(test, ep.query_rows);
            const auto protos = compute_prototypes(support, ep.support_labels, ep.classes,
                                                   ids_of(test, ep.support_rows), kNormalClass);
            for (std::size_t i = 0; i < ep.query_rows.size(); ++i)
                predictions[i] = predict_class(query.row(i), protos);
        } else {
            std::vector<std::size_t> rows = ep.support_rows;
            rows.insert(rows.end(), ep.query_rows.begin(), ep.query_rows.end());
            const Tensor<float> x = make_batch<float>(test, rows);
            const ExtractorOut<float> feat = extractor.forward(x, /*train=*/false, nullptr);
            if (kind == VariantKind::proto) {
                const Tensor<float> emb = classifier.forward(feat.map, nullptr);
                ProtoBatch pb = split_batch(emb, ep, test);
                for (std::size_t i = 0; i < ep.query_rows.size(); ++i)
                    predictions[i] = predict_class(pb.query_emb.row(i), pb.protos);
            } else {
                const Tensor<float> logits = linear.forward(feat.pooled, nullptr);
                const std::size_t sup = ep.support_rows.size();
                for (std::size_t i = 0; i < ep.query_rows.size(); ++i) {
                    const float* row = logits.row(sup + i);
                    float best = row[0];
                    int arg = 0;
                    for (int c = 1; c < s.ways; ++c)
                        if (row[c] > best) {
                            best = row[c];
                            arg = c;
                        }
                    predictions[i] = arg;
                }
            }
        }

        for (std::size_t i = 0; i < predictions.size(); ++i) {
            const bool truth_abnormal = ep.query_labels[i] != kNormalClass;
            const bool pred_abnormal = predictions[i] != kNormalClass;
            if (truth_abnormal && pred_abnormal) ++counts.tp;
            else if (!truth_abnormal && pred_abnormal) ++counts.fp;
            else if (!truth_abnormal && !pred_abnormal) ++counts.tn;
            else ++counts.fn;
        }
    });

    EvalOutcome out;
    out.episodes = s.eval_episodes;
    out.seed = seed;
    for (const auto& c : per_episode) out.counts += c;
    out.metrics = MetricsReport::from_counts(out.counts);
    return out;
}

// ---------------------------------------------------------------------------
// ablation / sweep
// ---------------------------------------------------------------------------

std::vector<VariantSpec> ablation_variants() {
    return {
        {"PN", VariantKind::pn_raw, false, Stage2Loss::nll, false},
        {"F(.)+linear", VariantKind::linear, false, Stage2Loss::nll, false},
        {"F(.)+PN", VariantKind::proto, false, Stage2Loss::nll, true},
        {"F(.)+PN+CII", VariantKind::proto, true, Stage2Loss::nll, true},
        {"F(.)+PN+CII+SPInfoMax (full)", VariantKind::proto, true, Stage2Loss::infomax, true},
    };
}

namespace {

TrainSettings variant_settings(const TrainSettings& base, const VariantSpec& v) {
    TrainSettings s = base;
    if (!v.cii) s.beta = s.tau;
    s.stage2 = v.loss;
    if (!v.use_regularizer) s.alpha = 0.0;
    return s;
}

RunRow evaluated_row(const std::string& name, std::uint64_t seed, const EvalOutcome& eval,
                     double wall_seconds) {
    RunRow row;
    row.name = name;
    row.seed = seed;
    row.ok = true;
    row.metrics = eval.metrics;
    row.wall_seconds = wall_seconds;
    return row;
}

}  // namespace

RunRow run_variant(const Dataset& train, const Dataset& test, const TrainSettings& base,
                   const VariantSpec& variant, std::uint64_t seed) {
    RunRow row;
    row.name = variant.name;
    row.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const TrainSettings s = variant_settings(base, variant);
        ParameterSet<float> ps;
        if (variant.kind != VariantKind::pn_raw) {
            pretrain_extractor(train, s, seed, ps);
            train_classifier(train, s, seed, ps, variant.kind);
        }
        const EvalOutcome eval = evaluate(test, s, seed, ps, variant.kind, 1);
        row.ok = true;
        row.metrics = eval.metrics;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

std::vector<RunRow> run_ablation(const Dataset& train, const Dataset& test,
                                 const TrainSettings& base,
                                 const std::vector<std::uint64_t>& seeds, int threads) {
    const auto variants = ablation_variants();
    std::vector<RunRow> rows(seeds.size() * variants.size());

    parallel_for(seeds.size(), resolve_threads(threads), [&](std::size_t si) {
        const std::uint64_t seed = seeds[si];
        // Pretrained extractors shared across variants with equal temperatures.
        ParameterSet<float> plain_theta, cii_theta;
        std::string plain_error, cii_error;
        try {
            TrainSettings s = base;
            s.beta = s.tau;
            pretrain_extractor(train, s, seed, plain_theta);
        } catch (const std::exception& e) {
            plain_error = e.what();
        }
        try {
            pretrain_extractor(train, base, seed, cii_theta);
        } catch (const std::exception& e) {
            cii_error = e.what();
        }

        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            const VariantSpec& v = variants[vi];
            RunRow& row = rows[si * variants.size() + vi];
            row.name = v.name;
            row.seed = seed;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const TrainSettings s = variant_settings(base, v);
                if (v.kind == VariantKind::pn_raw) {
                    ParameterSet<float> empty;
                    row = evaluated_row(v.name, seed, evaluate(test, s, seed, empty, v.kind, 1), 0);
                } else {
                    const std::string& pretrain_error = v.cii ? cii_error : plain_error;
                    if (!pretrain_error.empty()) throw Error(ErrKind::numeric, pretrain_error);
                    ParameterSet<float> ps = v.cii ? cii_theta : plain_theta;  // copy
                    train_classifier(train, s, seed, ps, v.kind);
                    row = evaluated_row(v.name, seed, evaluate(test, s, seed, ps, v.kind, 1), 0);
                }
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            row.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    });
    return rows;
}

std::vector<RunRow> run_sweep(const Dataset& train, const Dataset& test, const TrainSettings& base,
                              const std::string& parameter, const std::vector<double>& values,
                              const std::vector<std::uint64_t>& seeds, int threads) {
    struct Task {
        double value;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (double v : values)
        for (std::uint64_t s : seeds) tasks.push_back({v, s});
    std::vector<RunRow> rows(tasks.size());

    parallel_for(tasks.size(), resolve_threads(threads), [&](std::size_t ti) {
        const Task& task = tasks[ti];
        std::ostringstream name;
        name << parameter << "=" << task.value;
        RunRow& row = rows[ti];
        try {
            TrainSettings s = base;
            if (parameter == "conv_layers") {
                s.extractor = ExtractorConfig::from_conv_layers(
                    static_cast<std::size_t>(task.value), s.extractor);
            } else if (parameter == "out_dim") {
                if (task.value < 1) throw_contract("out_dim must be >= 1");
                s.classifier.out_dim = static_cast<std::size_t>(task.value);
            } else if (parameter == "alpha") {
                if (task.value < 0) throw_contract("alpha must be >= 0");
                s.alpha = task.value;
            } else if (parameter == "shots") {
                if (task.value < 1) throw_contract("shots must be >= 1");
                s.shots = static_cast<int>(task.value);
            } else {
                throw_parse("unknown sweep parameter '" + parameter +
                            "' (expected conv_layers, out_dim, alpha or shots)");
            }
            const VariantSpec full{"", VariantKind::proto, true, base.stage2, true};
            row = run_variant(train, test, s, full, task.seed);
            row.name = name.str();
        } catch (const std::exception& e) {
            row.name = name.str();
            row.seed = task.seed;
            row.ok = false;
            row.error = e.what();
        }
    });
    return rows;
}

MetricsReport aggregate_rows(const std::vector<RunRow>& rows, const std::string& name) {
    ConfusionCounts total;
    for (const auto& row : rows)
        if (row.ok && row.name == name) total += row.metrics.counts;
    return MetricsReport::from_counts(total);
}

std::string format_table(const std::vector<RunRow>& rows,
                         const std::vector<std::string>& row_order) {
    std::ostringstream os;
    os << "method\tprecision\trecall\tf1\tfar\taccuracy\tseeds\tnote\n";
    for (const auto& name : row_order) {
        std::size_t ok = 0, failed = 0;
        ConfusionCounts total;
        std::string first_error;
        for (const auto& row : rows) {
            if (row.name != name) continue;
            if (row.ok) {
                total += row.metrics.counts;
                ++ok;
            } else {
                ++failed;
                if (first_error.empty()) first_error = row.error;
            }
        }
        const MetricsReport m = MetricsReport::from_counts(total);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.2f\t%.2f\t%.2f\t%.2f\t%.2f", m.precision * 100.0,
                      m.recall * 100.0, m.f1 * 100.0, m.far * 100.0, m.accuracy * 100.0);
        os << name << "\t" << buf << "\t" << ok;
        if (failed > 0)
            os << "\tFAILED(" << failed << "): " << first_error;
        else
            os << "\tok";
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// dataset preparation
// ---------------------------------------------------------------------------

PreparedData prepare_dataset(const std::string& path, Schema schema, const SelectConfig& sc) {
    const RawDataset raw = load_dataset(path, schema);
    PreparedData out;
    out.encoding = build_encoding_map(raw);
    out.data = encode(raw, out.encoding);
    SelectConfig resolved = sc;
    if (resolved.target_count == 0) resolved.target_count = schema_default_keep(schema);
    out.report = sulov_select(out.data, resolved);
    out.kept = out.report.kept_indices();
    apply_selection(out.data, out.kept);
    l2_normalize_dataset(out.data);
    return out;
}

Dataset prepare_dataset_with(const std::string& path, Schema schema, const EncodingMap& encoding,
                             const std::vector<std::size_t>& kept) {
    const RawDataset raw = load_dataset(path, schema);
    return preprocess(raw, encoding, &kept);
}

// ---------------------------------------------------------------------------
// inference helpers
// ---------------------------------------------------------------------------

Tensor<float> embed_rows(const Dataset& ds, const std::vector<std::size_t>& rows,
                         const TrainSettings& s, ParameterSet<float>& ps) {
    Extractor<float> extractor(s.extractor);
    Classifier<float> classifier(s.classifier, s.extractor.width);
    extractor.bind(ps);
    classifier.bind(ps);
    const Tensor<float> x = make_batch<float>(ds, rows);
    const ExtractorOut<float> feat = extractor.forward(x, /*train=*/false, nullptr);
    return classifier.forward(feat.map, nullptr);
}

PrototypeSet<float> build_prototypes(const Dataset& support, const TrainSettings& s,
                                     ParameterSet<float>& ps) {
    const auto by_class = support.class_index();
    if (by_class[0].empty() || by_class[1].empty())
        throw_data("inference support set must contain both normal and abnormal samples");
    std::vector<std::size_t> rows(support.rows);
    for (std::size_t r = 0; r < support.rows; ++r) rows[r] = r;
    const Tensor<float> emb = embed_rows(support, rows, s, ps);
    return compute_prototypes(emb, support.labels, {0, 1}, support.row_ids, kNormalClass);
}

}  // namespace fslpn
