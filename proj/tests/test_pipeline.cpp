#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>

#include "fslpn/checkpoint.hpp"
#include "fslpn/pipeline.hpp"
#include "fslpn/synth.hpp"

using namespace fslpn;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "fslpn_test_pipeline";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

const PreparedData& train_data() {
    static const PreparedData prep = [] {
        const std::string path = (work_dir() / "train.csv").string();
        SynthConfig cfg;
        cfg.rows = 1200;
        cfg.seed = 101;
        write_synthetic_csv(path, cfg);
        return prepare_dataset(path, Schema::unsw_nb15, SelectConfig{});
    }();
    return prep;
}

const Dataset& test_data() {
    static const Dataset ds = [] {
        const std::string path = (work_dir() / "test.csv").string();
        SynthConfig cfg;
        cfg.rows = 800;
        cfg.seed = 202;
        write_synthetic_csv(path, cfg);
        return prepare_dataset_with(path, Schema::unsw_nb15, train_data().encoding,
                                    train_data().kept);
    }();
    return ds;
}

// Small-but-real settings for the fast tests.
TrainSettings small_settings() {
    TrainSettings s;
    s.extractor = ExtractorConfig::from_conv_layers(3);
    s.extractor.input_length = train_data().data.cols;
    s.extractor.width = 8;
    s.head.hidden = 16;
    s.head.out = 16;
    s.classifier.out_dim = 8;
    s.stage1_episodes = 30;
    s.stage2_episodes = 30;
    s.queries = 5;
    s.eval_episodes = 10;
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

TEST_CASE("metrics worked example: TP=9 FP=1 TN=8 FN=2") {
    const auto m = MetricsReport::from_counts({9, 1, 8, 2});
    CHECK(m.precision * 100 == doctest::Approx(90.00).epsilon(1e-6));
    CHECK(m.recall * 100 == doctest::Approx(81.8181818).epsilon(1e-6));
    CHECK(m.f1 * 100 == doctest::Approx(85.7142857).epsilon(1e-6));
    CHECK(m.far * 100 == doctest::Approx(11.1111111).epsilon(1e-6));
    CHECK(m.accuracy * 100 == doctest::Approx(85.00).epsilon(1e-6));
}

TEST_CASE("perfect classifier yields 100% precision/recall/F1 and 0% FAR") {
    const auto m = MetricsReport::from_counts({25, 0, 30, 0});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.far == 0.0);
    CHECK(m.accuracy == 1.0);
}

TEST_CASE("metrics recompute from counts within 1e-12 over 1000 random matrices") {
    Rng rng(55);
    for (int rep = 0; rep < 1000; ++rep) {
        ConfusionCounts c;
        c.tp = 1 + rng.below(500);
        c.fp = 1 + rng.below(500);
        c.tn = 1 + rng.below(500);
        c.fn = 1 + rng.below(500);
        const auto m = MetricsReport::from_counts(c);
        const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
        const double precision = tp / (tp + fp);
        const double recall = tp / (tp + fn);
        const double f1 = 2 * precision * recall / (precision + recall);
        const double far = fp / (fp + tn);
        const double acc = (tp + tn) / (tp + fp + tn + fn);
        CHECK(std::fabs(m.precision - precision) <= 1e-12 * precision);
        CHECK(std::fabs(m.recall - recall) <= 1e-12 * recall);
        CHECK(std::fabs(m.f1 - f1) <= 1e-12 * f1);
        CHECK(std::fabs(m.far - far) <= 1e-12 * far);
        CHECK(std::fabs(m.accuracy - acc) <= 1e-12 * acc);
        // FAR with abnormal positive is 1 - specificity by definition
        CHECK(std::fabs(m.far - (1.0 - tn / (tn + fp))) < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

TEST_CASE("config defaults match the documented settings") {
    RunConfig cfg;
    CHECK(cfg.learning_rate == 0.001);
    CHECK(cfg.episodes == 1000);
    CHECK(cfg.alpha == 0.001);
    CHECK(cfg.tau == 0.1);
    CHECK(cfg.beta == 1.0);
    CHECK(cfg.ways == 2);
    CHECK(cfg.shots == 2);
    CHECK(cfg.queries == 15);
    CHECK(cfg.conv_layers == 9);
    CHECK(cfg.out_dim == 32);
    cfg.validate();  // defaults are valid (dataset paths are command concerns)
}

TEST_CASE("an empty config file resolves to all defaults") {
    const std::string path = (work_dir() / "empty.cfg").string();
    std::ofstream(path) << "# nothing but a comment\n";
    const RunConfig cfg = parse_config_file(path);
    CHECK(cfg.serialize() == RunConfig{}.serialize());
}

TEST_CASE("config round-trips through its canonical text form") {
    RunConfig cfg;
    cfg.alpha = 0.25;
    cfg.schema = "nsl_kdd";
    cfg.seeds = "7,8";
    cfg.stage2_loss = "nll";
    const std::string text = cfg.serialize();
    RunConfig back;
    apply_config_text(back, text, "round-trip");
    CHECK(back.serialize() == text);
    CHECK(back.alpha == 0.25);
    CHECK(back.seed_list() == std::vector<std::uint64_t>{7, 8});
}

TEST_CASE("unknown config keys fail with the nearest valid key") {
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(apply_config_text(cfg, "learnin_rate = 0.1", "test"),
                         doctest::Contains("learning_rate"), Error);
    CHECK_THROWS_WITH_AS(set_config_key(cfg, "alpa", "0.1"), doctest::Contains("alpha"), Error);
}

TEST_CASE("type mismatches and bad sections are parse errors") {
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(apply_config_text(cfg, "alpha = fast", "test"),
                         doctest::Contains("number"), Error);
    CHECK_THROWS_WITH_AS(apply_config_text(cfg, "[nonsense]\nalpha = 1", "test"),
                         doctest::Contains("unknown section"), Error);
    CHECK_THROWS_WITH_AS(apply_config_text(cfg, "[data]\nalpha = 1", "test"),
                         doctest::Contains("[train]"), Error);
}

TEST_CASE("later assignments override earlier ones (flag-over-file precedence)") {
    RunConfig cfg;
    apply_config_text(cfg, "[train]\nalpha = 0.1", "file");
    set_config_key(cfg, "alpha", "0.01");  // flag
    CHECK(cfg.alpha == 0.01);
}

TEST_CASE("config validation rejects out-of-range settings") {
    RunConfig cfg;
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = RunConfig{};
    cfg.beta = 0.01;  // < tau
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = RunConfig{};
    cfg.conv_layers = 4;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = RunConfig{};
    cfg.stage2_loss = "hinge";
    CHECK_THROWS_AS(cfg.validate(), Error);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round-trip is bit-exact including batch-norm running stats") {
    const TrainSettings s = small_settings();
    ParameterSet<float> ps;
    pretrain_extractor(train_data().data, s, 3, ps);

    const std::string path = (work_dir() / "roundtrip.ckpt").string();
    save_checkpoint(ps, "config echo text", path);
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.config_echo == "config echo text");
    CHECK(loaded.params.size() == ps.size());
    for (const auto& [name, p] : ps) {
        const auto& q = loaded.params.at(name);
        CHECK(q.part == p.part);
        CHECK(q.trainable == p.trainable);
        CHECK(q.t.shape == p.t.shape);
        CHECK(q.t.v == p.t.v);  // bitwise
    }
    CHECK(loaded.params.checksum(Partition::extractor) == ps.checksum(Partition::extractor));

    // running stats are not trainable after a reload
    CHECK(!loaded.params.at("extractor.block0.bn1.running_mean").trainable);
}

TEST_CASE("checkpoint loader rejects wrong magic and truncated files") {
    const std::string bad = (work_dir() / "bad.ckpt").string();
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOTACKPTxxxxxxxxxxxx";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("magic"), Error);

    ParameterSet<float> ps;
    ps.add("head.w", Partition::head, Tensor<float>({4}, {1, 2, 3, 4}));
    const std::string full = (work_dir() / "full.ckpt").string();
    save_checkpoint(ps, "echo", full);
    std::ifstream in(full, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string cut = (work_dir() / "cut.ckpt").string();
    {
        std::ofstream os(cut, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 6));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(cut), doctest::Contains("truncated"), Error);
}

// ---------------------------------------------------------------------------
// training stages
// ---------------------------------------------------------------------------

TEST_CASE("zero learning rate leaves theta bit-identical across stage 1") {
    TrainSettings s = small_settings();
    s.stage1_episodes = 5;
    ParameterSet<float> ps_init;
    pretrain_extractor(train_data().data, s, 17, ps_init);  // reference run at lr>0

    // re-init with the same seed, then train with lr = 0: parameters must
    // equal a freshly initialized set
    TrainSettings zero = s;
    zero.learning_rate = 0.0;
    ParameterSet<float> ps_zero;
    pretrain_extractor(train_data().data, zero, 17, ps_zero);

    ParameterSet<float> ps_fresh;
    Extractor<float> ext(s.extractor);
    Head<float> head(s.head, s.extractor.width);
    Rng init_rng(Rng::mix(17, 11));
    ext.init(ps_fresh, init_rng);
    head.init(ps_fresh, init_rng);

    CHECK(ps_zero.checksum(Partition::head) == ps_fresh.checksum(Partition::head));
    // conv/bn weights identical; running stats differ (train-mode forward
    // updates them regardless of the optimizer), so compare weights directly
    for (const auto& [name, p] : ps_fresh)
        if (p.trainable) CHECK(ps_zero.at(name).t.v == p.t.v);
    // and the lr>0 run actually moved
    CHECK(ps_init.checksum(Partition::head) != ps_fresh.checksum(Partition::head));
}

TEST_CASE("stage 2 trains phi only; theta checksums stay bit-exact") {
    const TrainSettings s = small_settings();
    ParameterSet<float> ps;
    pretrain_extractor(train_data().data, s, 5, ps);
    const auto theta_before = ps.checksum(Partition::extractor);
    const auto head_before = ps.checksum(Partition::head);
    const auto report = train_classifier(train_data().data, s, 5, ps);
    CHECK(report.extractor_checksum == theta_before);
    CHECK(report.head_checksum == head_before);
    CHECK(ps.contains("classifier.proj.w"));
    CHECK(report.loss_curve.size() == 30);
}

TEST_CASE("stage 2 rejects a missing pretrained extractor") {
    ParameterSet<float> empty;
    CHECK_THROWS_AS(train_classifier(train_data().data, small_settings(), 1, empty), Error);
}

TEST_CASE("fixed-seed single-threaded runs are bit-exact reproducible end to end") {
    const TrainSettings s = small_settings();
    auto run_once = [&](std::vector<float>* curve1, std::vector<float>* curve2) {
        ParameterSet<float> ps;
        const auto r1 = pretrain_extractor(train_data().data, s, 99, ps);
        const auto r2 = train_classifier(train_data().data, s, 99, ps);
        const auto ev = evaluate(test_data(), s, 99, ps, VariantKind::proto, 1);
        *curve1 = r1.loss_curve;
        *curve2 = r2.loss_curve;
        const std::string path = (work_dir() / "determinism.ckpt").string();
        save_checkpoint(ps, "echo", path);
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return std::make_tuple(ps.checksum(Partition::extractor), ps.checksum(Partition::head),
                               ps.checksum(Partition::classifier), ev.counts.tp, ev.counts.fp,
                               ev.counts.tn, ev.counts.fn, bytes);
    };
    std::vector<float> a1, a2, b1, b2;
    const auto a = run_once(&a1, &a2);
    const auto b = run_once(&b1, &b2);
    CHECK(a == b);   // checksums, confusion counts, checkpoint bytes
    CHECK(a1 == b1); // stage-1 loss curve bit-exact
    CHECK(a2 == b2);
}

TEST_CASE("evaluation is invariant to the thread count") {
    const TrainSettings s = small_settings();
    ParameterSet<float> ps;
    pretrain_extractor(train_data().data, s, 7, ps);
    train_classifier(train_data().data, s, 7, ps);
    const auto serial = evaluate(test_data(), s, 7, ps, VariantKind::proto, 1);
    const auto parallel = evaluate(test_data(), s, 7, ps, VariantKind::proto, 4);
    CHECK(serial.counts.tp == parallel.counts.tp);
    CHECK(serial.counts.fp == parallel.counts.fp);
    CHECK(serial.counts.tn == parallel.counts.tn);
    CHECK(serial.counts.fn == parallel.counts.fn);
}

TEST_CASE("evaluation counts add up to episodes x queries") {
    const TrainSettings s = small_settings();
    ParameterSet<float> ps;
    const auto ev = evaluate(test_data(), s, 3, ps, VariantKind::pn_raw, 2);
    CHECK(ev.counts.total() == std::uint64_t(s.eval_episodes) * 2 * s.queries);
}

TEST_CASE("linear baseline variant trains and evaluates") {
    TrainSettings s = small_settings();
    ParameterSet<float> ps;
    pretrain_extractor(train_data().data, s, 11, ps);
    const auto report = train_classifier(train_data().data, s, 11, ps, VariantKind::linear);
    CHECK(ps.contains("classifier.linear.w"));
    CHECK(report.loss_curve.size() == 30);
    const auto ev = evaluate(test_data(), s, 11, ps, VariantKind::linear, 1);
    CHECK(ev.counts.total() > 0);
}

TEST_CASE("nll stage-2 selector runs the prototype path") {
    TrainSettings s = small_settings();
    s.stage2 = Stage2Loss::nll;
    ParameterSet<float> ps;
    pretrain_extractor(train_data().data, s, 13, ps);
    const auto report = train_classifier(train_data().data, s, 13, ps);
    CHECK(report.loss_curve.size() == 30);
    for (float v : report.loss_curve) CHECK(std::isfinite(v));
}

TEST_CASE("stage-1 contrastive loss trends down at the documented defaults") {
    // full defaults: 1000 episodes, lr 0.001
    TrainSettings s;
    s.extractor.input_length = train_data().data.cols;
    ParameterSet<float> ps;
    const auto report = pretrain_extractor(train_data().data, s, 1, ps);
    REQUIRE(report.loss_curve.size() == 1000);
    double first = 0, last = 0;
    for (int i = 0; i < 100; ++i) {
        first += report.loss_curve[static_cast<std::size_t>(i)];
        last += report.loss_curve[report.loss_curve.size() - 100 + static_cast<std::size_t>(i)];
    }
    CHECK(last / 100.0 < first / 100.0);
}

// ---------------------------------------------------------------------------
// drivers
// ---------------------------------------------------------------------------

TEST_CASE("ablation produces five named rows per seed, deterministically") {
    TrainSettings s = small_settings();
    s.stage1_episodes = 20;
    s.stage2_episodes = 20;
    s.eval_episodes = 8;
    const std::vector<std::uint64_t> seeds = {1, 2};
    const auto rows = run_ablation(train_data().data, test_data(), s, seeds, 2);
    REQUIRE(rows.size() == 10);
    for (const auto& row : rows) CHECK_MESSAGE(row.ok, row.error);

    const auto again = run_ablation(train_data().data, test_data(), s, seeds, 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].name == again[i].name);
        CHECK(rows[i].metrics.counts.tp == again[i].metrics.counts.tp);
        CHECK(rows[i].metrics.counts.fp == again[i].metrics.counts.fp);
    }

    const std::vector<std::string> names = {"PN", "F(.)+linear", "F(.)+PN", "F(.)+PN+CII",
                                            "F(.)+PN+CII+SPInfoMax (full)"};
    const std::string table = format_table(rows, names);
    for (const auto& n : names) CHECK(table.find(n) != std::string::npos);
    CHECK(table.find("method\tprecision") == 0);
}

TEST_CASE("sweep annotates failing values and continues") {
    TrainSettings s = small_settings();
    s.stage1_episodes = 10;
    s.stage2_episodes = 10;
    s.eval_episodes = 4;
    const auto rows = run_sweep(train_data().data, test_data(), s, "alpha", {0.0, -1.0},
                                {1}, 1);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ok);
    CHECK(!rows[1].ok);  // negative alpha is invalid
    CHECK(rows[1].error.find("alpha") != std::string::npos);
    const auto table = format_table(rows, {"alpha=0", "alpha=-1"});
    CHECK(table.find("FAILED") != std::string::npos);
}

TEST_CASE("sweep over conv_layers covers the documented grid shapes") {
    TrainSettings s = small_settings();
    s.stage1_episodes = 6;
    s.stage2_episodes = 6;
    s.eval_episodes = 3;
    const auto rows = run_sweep(train_data().data, test_data(), s, "conv_layers", {1, 5}, {1}, 2);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) CHECK_MESSAGE(row.ok, row.error);
    CHECK(rows[0].name == "conv_layers=1");
}

TEST_CASE("unknown sweep parameter is rejected") {
    const auto rows =
        run_sweep(train_data().data, test_data(), small_settings(), "depth", {1}, {1}, 1);
    REQUIRE(rows.size() == 1);
    CHECK(!rows[0].ok);
    CHECK(rows[0].error.find("sweep parameter") != std::string::npos);
}

TEST_CASE("non-finite losses abort with a numeric error naming the episode") {
    // The unit-norm head makes stage 1 scale-invariant, so only genuinely
    // non-finite inputs can poison the loss.
    TrainSettings s = small_settings();
    Dataset poisoned = train_data().data;
    std::fill(poisoned.values.begin(), poisoned.values.end(),
              std::numeric_limits<double>::infinity());
    ParameterSet<float> ps;
    CHECK_THROWS_WITH_AS(pretrain_extractor(poisoned, s, 1, ps), doctest::Contains("episode"),
                         Error);
}
