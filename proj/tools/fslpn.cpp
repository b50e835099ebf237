// fslpn - few-shot intrusion anomaly detection toolkit.
//
// Commands: select-features | pretrain | train | evaluate | ablate | sweep |
// infer | synth. Flags override config-file values; the fully resolved config
// is echoed into every checkpoint and report.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fslpn/checkpoint.hpp"
#include "fslpn/config.hpp"
#include "fslpn/dataset.hpp"
#include "fslpn/episode.hpp"
#include "fslpn/kernels.hpp"
#include "fslpn/pipeline.hpp"
#include "fslpn/select.hpp"
#include "fslpn/synth.hpp"

namespace fs = std::filesystem;
using namespace fslpn;

namespace {

const char* kUsage = R"(usage: fslpn <command> [flags]

commands:
  select-features   run SULOV feature selection, write report + dataset cache
  pretrain          stage 1: contrastive pretraining of the extractor + head
  train             stage 2: train the prototype classifier (theta frozen)
  evaluate          episodic evaluation of a trained checkpoint
  ablate            run the five-variant ablation table
  sweep             sweep one parameter (conv_layers | out_dim | alpha | shots)
  infer             classify records with a trained checkpoint
  synth             generate a schema-shaped synthetic dataset

common flags:
  --config FILE     config file ([data] [model] [train] [eval] sections)
  --dataset PATH    training/support CSV        --test-dataset PATH  held-out CSV
  --schema NAME     unsw_nb15 | nsl_kdd         --out-dir DIR        output directory
  --checkpoint PATH input checkpoint            --seed N | --seeds "1,2,3"
  --lr X --episodes N --stage2-episodes N --eval-episodes N --threads N
  --tau X --beta X --alpha X --stage2-loss {nll|infomax}
  --ways N --shots N --queries N --conv-layers N --out-dim N --width N
  --select-count N --correlation-threshold X --mi-bins N

command-specific flags:
  sweep:  --param NAME --values "v1,v2,..."
  infer:  --input FILE (records to classify, dataset schema)
  synth:  --out FILE --rows N --attack-spread X
)";

struct FlagMap {
    // flag -> config key (applied in command-line order, after --config)
    static const std::map<std::string, std::string>& table() {
        static const std::map<std::string, std::string> m = {
            {"--dataset", "dataset"},
            {"--test-dataset", "test_dataset"},
            {"--schema", "schema"},
            {"--out-dir", "out_dir"},
            {"--checkpoint", "checkpoint"},
            {"--select-count", "select_count"},
            {"--correlation-threshold", "correlation_threshold"},
            {"--mi-bins", "mi_bins"},
            {"--conv-layers", "conv_layers"},
            {"--width", "width"},
            {"--out-dim", "out_dim"},
            {"--head-hidden", "head_hidden"},
            {"--head-out", "head_out"},
            {"--lr", "learning_rate"},
            {"--episodes", "episodes"},
            {"--stage2-episodes", "stage2_episodes"},
            {"--tau", "tau"},
            {"--beta", "beta"},
            {"--alpha", "alpha"},
            {"--stage2-loss", "stage2_loss"},
            {"--ways", "ways"},
            {"--shots", "shots"},
            {"--queries", "queries"},
            {"--eval-episodes", "eval_episodes"},
            {"--seeds", "seeds"},
            {"--threads", "threads"},
        };
        return m;
    }
};

struct CommandArgs {
    RunConfig cfg;
    std::map<std::string, std::string> extra;  // command-specific flags
};

CommandArgs parse_args(int argc, char** argv, const std::vector<std::string>& extra_flags) {
    CommandArgs out;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 2; i < argc; ++i) {
        const std::string flag = argv[i];
        if (flag.rfind("--", 0) != 0) throw_parse("expected a --flag, got '" + flag + "'");
        if (i + 1 >= argc) throw_parse("flag " + flag + " needs a value");
        pairs.emplace_back(flag, argv[++i]);
    }

    // --config first, then overrides in order.
    for (const auto& [flag, value] : pairs)
        if (flag == "--config") out.cfg = parse_config_file(value);
    for (const auto& [flag, value] : pairs) {
        if (flag == "--config") continue;
        if (flag == "--seed") {
            set_config_key(out.cfg, "seeds", value);
            continue;
        }
        auto it = FlagMap::table().find(flag);
        if (it != FlagMap::table().end()) {
            set_config_key(out.cfg, it->second, value);
            continue;
        }
        bool extra = false;
        for (const auto& name : extra_flags)
            if (flag == name) {
                out.extra[flag] = value;
                extra = true;
            }
        if (!extra) throw_parse("unknown flag " + flag);
    }
    apply_env_overrides(out.cfg);
    return out;
}

void require(const std::string& value, const char* what) {
    if (value.empty()) throw_parse(std::string("missing required ") + what);
}

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw_data("cannot write " + path);
    os << text;
}

// ---------------------------------------------------------------------------
// preprocessing plumbing shared by the commands
// ---------------------------------------------------------------------------

using Prepared = PreparedData;

SelectConfig select_config(const RunConfig& cfg, Schema schema) {
    SelectConfig sc;
    sc.target_count = cfg.select_count > 0 ? static_cast<std::size_t>(cfg.select_count)
                                           : schema_default_keep(schema);
    sc.correlation_threshold = cfg.correlation_threshold;
    sc.histogram_bins = cfg.mi_bins;
    return sc;
}

Prepared prepare_training_data(const RunConfig& cfg) {
    require(cfg.dataset, "--dataset");
    const Schema schema = schema_from_string(cfg.schema);
    return prepare_dataset(cfg.dataset, schema, select_config(cfg, schema));
}

Dataset prepare_with(const std::string& path, Schema schema, const EncodingMap& encoding,
                     const std::vector<std::size_t>& kept) {
    return prepare_dataset_with(path, schema, encoding, kept);
}

// The checkpoint config echo carries a trailing preprocess block so that
// evaluate/infer reproduce the training-time encoding and feature subset.
constexpr const char* kPreprocessMarker = "#--- preprocess ---";

std::string make_echo(const RunConfig& cfg, const Prepared& prep) {
    std::ostringstream os;
    os << cfg.serialize();
    os << kPreprocessMarker << "\n";
    os << "kept_indices = ";
    for (std::size_t i = 0; i < prep.kept.size(); ++i) os << (i ? "," : "") << prep.kept[i];
    os << "\n" << prep.encoding.serialize();
    return os.str();
}

struct EchoParts {
    RunConfig cfg;
    std::vector<std::size_t> kept;
    EncodingMap encoding;
};

EchoParts parse_echo(const std::string& echo) {
    const std::size_t marker = echo.find(kPreprocessMarker);
    if (marker == std::string::npos)
        throw_data("checkpoint config echo has no preprocess block");
    EchoParts out;
    apply_config_text(out.cfg, echo.substr(0, marker), "checkpoint config echo");

    std::istringstream is(echo.substr(marker + std::strlen(kPreprocessMarker)));
    std::string line;
    std::string encoding_text;
    while (std::getline(is, line)) {
        if (line.rfind("kept_indices", 0) == 0) {
            const std::size_t eq = line.find('=');
            std::stringstream ss(line.substr(eq + 1));
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) out.kept.push_back(std::stoul(item));
        } else {
            encoding_text += line + "\n";
        }
    }
    if (out.kept.empty()) throw_data("checkpoint preprocess block has no kept_indices");
    out.encoding = EncodingMap::parse(encoding_text);
    return out;
}

std::string report_header(const RunConfig& cfg) {
    std::ostringstream os;
    os << "# fslpn report\n" << cfg.serialize();
    os << "kernel_backend = " << kern::name(kern::active()) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_select_features(const CommandArgs& args) {
    const RunConfig& cfg = args.cfg;
    cfg.validate();
    ensure_out_dir(cfg);
    Prepared prep = prepare_training_data(cfg);

    const std::string report_path = cfg.out_dir + "/feature_selection.txt";
    write_text(report_path, prep.report.to_text());
    const std::string cache_path = cfg.out_dir + "/dataset.fslp";
    save_dataset_cache(prep.data, cache_path);

    std::printf("rows=%zu kept=%zu of %zu features -> %s\n", prep.data.rows, prep.kept.size(),
                prep.report.feature_count, report_path.c_str());
    for (const auto& d : prep.report.decisions)
        if (d.kept) std::printf("  %-28s mis=%.4f\n", d.name.c_str(), d.mis);
    std::printf("dataset cache: %s\n", cache_path.c_str());
    return 0;
}

int cmd_pretrain(const CommandArgs& args) {
    RunConfig cfg = args.cfg;
    cfg.validate();
    ensure_out_dir(cfg);
    Prepared prep = prepare_training_data(cfg);
    const TrainSettings settings = TrainSettings::from_config(cfg, prep.data.cols);
    const std::uint64_t seed = cfg.seed_list().front();

    const auto t0 = std::chrono::steady_clock::now();
    ParameterSet<float> ps;
    const StageReport report = pretrain_extractor(prep.data, settings, seed, ps);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string ckpt = cfg.out_dir + "/pretrain.ckpt";
    save_checkpoint(ps, make_echo(cfg, prep), ckpt);

    const std::size_t n = report.loss_curve.size();
    const std::size_t window = std::min<std::size_t>(100, n);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < window; ++i) {
        first += report.loss_curve[i];
        last += report.loss_curve[n - window + i];
    }
    first /= window;
    last /= window;

    std::ostringstream os;
    os << report_header(cfg);
    os << "seed = " << seed << "\n";
    os << "stage1_loss_first100_mean = " << first << "\n";
    os << "stage1_loss_last100_mean = " << last << "\n";
    os << "skipped_anchors = " << report.skipped_anchors << "\n";
    os << "checkpoint = " << ckpt << "\n";
    os << "wall_seconds = " << wall << "\n";
    write_text(cfg.out_dir + "/pretrain_report.txt", os.str());

    std::printf("stage 1 done: %zu episodes, loss %.4f -> %.4f, checkpoint %s\n", n, first, last,
                ckpt.c_str());
    return 0;
}

int cmd_train(const CommandArgs& args) {
    RunConfig cfg = args.cfg;
    require(cfg.checkpoint, "--checkpoint (pretrained extractor)");
    require(cfg.dataset, "--dataset");
    cfg.validate();
    ensure_out_dir(cfg);

    LoadedCheckpoint loaded = load_checkpoint(cfg.checkpoint);
    const EchoParts echo = parse_echo(loaded.config_echo);
    const Schema schema = schema_from_string(cfg.schema);
    Dataset train = prepare_with(cfg.dataset, schema, echo.encoding, echo.kept);
    const TrainSettings settings = TrainSettings::from_config(cfg, train.cols);
    const std::uint64_t seed = cfg.seed_list().front();

    const auto t0 = std::chrono::steady_clock::now();
    const StageReport report = train_classifier(train, settings, seed, loaded.params);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Prepared prep;  // reuse the checkpoint's preprocess block in the new echo
    prep.kept = echo.kept;
    prep.encoding = echo.encoding;
    const std::string ckpt = cfg.out_dir + "/model.ckpt";
    save_checkpoint(loaded.params, make_echo(cfg, prep), ckpt);

    std::ostringstream os;
    os << report_header(cfg);
    os << "seed = " << seed << "\n";
    os << "stage2_episodes = " << report.loss_curve.size() << "\n";
    os << "log_clamp_events = " << report.clamped << "\n";
    os << "extractor_checksum = " << report.extractor_checksum << "\n";
    os << "checkpoint = " << ckpt << "\n";
    os << "wall_seconds = " << wall << "\n";
    write_text(cfg.out_dir + "/train_report.txt", os.str());

    std::printf("stage 2 done: %zu episodes, theta checksum %llu unchanged, checkpoint %s\n",
                report.loss_curve.size(),
                static_cast<unsigned long long>(report.extractor_checksum), ckpt.c_str());
    return 0;
}

int cmd_evaluate(const CommandArgs& args) {
    RunConfig cfg = args.cfg;
    require(cfg.checkpoint, "--checkpoint (trained model)");
    require(cfg.test_dataset, "--test-dataset");
    cfg.validate();
    ensure_out_dir(cfg);

    LoadedCheckpoint loaded = load_checkpoint(cfg.checkpoint);
    const EchoParts echo = parse_echo(loaded.config_echo);
    const Schema schema = schema_from_string(cfg.schema);
    Dataset test = prepare_with(cfg.test_dataset, schema, echo.encoding, echo.kept);
    const TrainSettings settings = TrainSettings::from_config(cfg, test.cols);

    const auto t0 = std::chrono::steady_clock::now();
    ConfusionCounts total;
    std::ostringstream rows;
    for (const std::uint64_t seed : cfg.seed_list()) {
        const EvalOutcome e =
            evaluate(test, settings, seed, loaded.params, VariantKind::proto, cfg.threads);
        total += e.counts;
        rows << "seed " << seed << ": TP=" << e.counts.tp << " FP=" << e.counts.fp
             << " TN=" << e.counts.tn << " FN=" << e.counts.fn << " " << e.metrics.to_line()
             << "\n";
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const MetricsReport agg = MetricsReport::from_counts(total);

    std::ostringstream os;
    os << report_header(cfg);
    os << rows.str();
    os << "aggregate: TP=" << total.tp << " FP=" << total.fp << " TN=" << total.tn
       << " FN=" << total.fn << " " << agg.to_line() << "\n";
    os << "wall_seconds = " << wall << "\n";
    write_text(cfg.out_dir + "/evaluate_report.txt", os.str());

    std::printf("%s\n", agg.to_line().c_str());
    return 0;
}

int cmd_ablate(const CommandArgs& args) {
    RunConfig cfg = args.cfg;
    require(cfg.test_dataset, "--test-dataset");
    cfg.validate();
    ensure_out_dir(cfg);
    Prepared prep = prepare_training_data(cfg);
    const Schema schema = schema_from_string(cfg.schema);
    Dataset test = prepare_with(cfg.test_dataset, schema, prep.encoding, prep.kept);
    const TrainSettings settings = TrainSettings::from_config(cfg, prep.data.cols);

    const auto rows = run_ablation(prep.data, test, settings, cfg.seed_list(), cfg.threads);
    std::vector<std::string> order;
    for (const auto& v : ablation_variants()) order.push_back(v.name);
    const std::string table = format_table(rows, order);

    std::ostringstream os;
    os << report_header(cfg) << table;
    write_text(cfg.out_dir + "/ablation.tsv", os.str());
    std::printf("%s", table.c_str());
    return 0;
}

int cmd_sweep(const CommandArgs& args) {
    RunConfig cfg = args.cfg;
    require(cfg.test_dataset, "--test-dataset");
    cfg.validate();
    auto it_param = args.extra.find("--param");
    auto it_values = args.extra.find("--values");
    if (it_param == args.extra.end()) throw_parse("sweep needs --param");
    if (it_values == args.extra.end()) throw_parse("sweep needs --values");
    std::vector<double> values;
    {
        std::stringstream ss(it_values->second);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) values.push_back(std::stod(item));
        if (values.empty()) throw_parse("--values list is empty");
    }
    ensure_out_dir(cfg);
    Prepared prep = prepare_training_data(cfg);
    const Schema schema = schema_from_string(cfg.schema);
    Dataset test = prepare_with(cfg.test_dataset, schema, prep.encoding, prep.kept);
    const TrainSettings settings = TrainSettings::from_config(cfg, prep.data.cols);

    const auto rows =
        run_sweep(prep.data, test, settings, it_param->second, values, cfg.seed_list(), cfg.threads);
    std::vector<std::string> order;
    for (double v : values) {
        std::ostringstream name;
        name << it_param->second << "=" << v;
        order.push_back(name.str());
    }
    const std::string table = format_table(rows, order);
    std::ostringstream os;
    os << report_header(cfg) << table;
    write_text(cfg.out_dir + "/sweep_" + it_param->second + ".tsv", os.str());
    std::printf("%s", table.c_str());
    return 0;
}

int cmd_infer(const CommandArgs& args) {
    RunConfig cfg = args.cfg;
    require(cfg.checkpoint, "--checkpoint (trained model)");
    require(cfg.dataset, "--dataset (prototype support source)");
    auto it_input = args.extra.find("--input");
    if (it_input == args.extra.end()) throw_parse("infer needs --input (records to classify)");
    cfg.validate();

    LoadedCheckpoint loaded = load_checkpoint(cfg.checkpoint);
    const EchoParts echo = parse_echo(loaded.config_echo);
    const Schema schema = schema_from_string(cfg.schema);
    Dataset support = prepare_with(cfg.dataset, schema, echo.encoding, echo.kept);
    Dataset input = prepare_with(it_input->second, schema, echo.encoding, echo.kept);
    const TrainSettings settings = TrainSettings::from_config(cfg, support.cols);

    const auto protos = build_prototypes(support, settings, loaded.params);
    std::vector<std::size_t> rows(input.rows);
    for (std::size_t r = 0; r < input.rows; ++r) rows[r] = r;
    const Tensor<float> emb = embed_rows(input, rows, settings, loaded.params);
    for (std::size_t r = 0; r < input.rows; ++r) {
        const auto p = class_probability(emb.row(r), protos);
        const int predicted = predict_class(emb.row(r), protos);
        std::printf("row %zu: predicted=%s p_normal=%.6f p_abnormal=%.6f\n", r,
                    predicted == 0 ? "normal" : "abnormal", p[0], p[1]);
    }
    return 0;
}

int cmd_synth(const CommandArgs& args) {
    const RunConfig& cfg = args.cfg;
    auto it_out = args.extra.find("--out");
    if (it_out == args.extra.end()) throw_parse("synth needs --out (target csv path)");
    SynthConfig sc;
    sc.schema = schema_from_string(cfg.schema);
    sc.seed = cfg.seed_list().front();
    auto it_rows = args.extra.find("--rows");
    if (it_rows != args.extra.end()) sc.rows = std::stoul(it_rows->second);
    auto it_spread = args.extra.find("--attack-spread");
    if (it_spread != args.extra.end()) sc.attack_spread = std::stod(it_spread->second);
    write_synthetic_csv(it_out->second, sc);
    std::printf("wrote %zu %s rows to %s\n", sc.rows, schema_name(sc.schema),
                it_out->second.c_str());
    return 0;
}

int run(int argc, char** argv) {
    if (argc < 2) {
        std::fputs(kUsage, stderr);
        return 2;
    }
    const std::string command = argv[1];
    if (command == "--help" || command == "-h" || command == "help") {
        std::fputs(kUsage, stdout);
        return 0;
    }

    if (command == "select-features") return cmd_select_features(parse_args(argc, argv, {}));
    if (command == "pretrain") return cmd_pretrain(parse_args(argc, argv, {}));
    if (command == "train") return cmd_train(parse_args(argc, argv, {}));
    if (command == "evaluate") return cmd_evaluate(parse_args(argc, argv, {}));
    if (command == "ablate") return cmd_ablate(parse_args(argc, argv, {}));
    if (command == "sweep") return cmd_sweep(parse_args(argc, argv, {"--param", "--values"}));
    if (command == "infer") return cmd_infer(parse_args(argc, argv, {"--input"}));
    if (command == "synth")
        return cmd_synth(parse_args(argc, argv, {"--out", "--rows", "--attack-spread"}));
    std::fprintf(stderr, "unknown command '%s'\n\n%s", command.c_str(), kUsage);
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        const char* kind = "internal";
        switch (e.kind()) {
            case ErrKind::parse: kind = "parse"; break;
            case ErrKind::data: kind = "data"; break;
            case ErrKind::numeric: kind = "numeric"; break;
            case ErrKind::contract: kind = "contract"; break;
        }
        std::fprintf(stderr, "error (%s): %s\n", kind, e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
