#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fslpn/gradcheck.hpp"
#include "fslpn/model.hpp"

using namespace fslpn;

namespace {

template <typename T>
Tensor<T> random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.v) v = static_cast<T>(rng.gaussian() * scale);
    return t;
}

ExtractorConfig small_config() {
    ExtractorConfig cfg;
    cfg.input_length = 9;
    cfg.width = 6;
    cfg.blocks = 2;
    return cfg;
}

}  // namespace

TEST_CASE("extractor config reconciles conv layer count with block count") {
    CHECK(ExtractorConfig{}.conv_layers() == 9);  // stem + 4 blocks x 2
    CHECK(ExtractorConfig::from_conv_layers(1).blocks == 0);
    CHECK(ExtractorConfig::from_conv_layers(17).blocks == 8);
    CHECK_THROWS_AS(ExtractorConfig::from_conv_layers(4), Error);
    CHECK_THROWS_AS(ExtractorConfig::from_conv_layers(0), Error);
}

TEST_CASE("extractor forward produces the contracted shapes") {
    ExtractorConfig cfg;  // defaults: width 64, 4 blocks, F 13
    ParameterSet<float> ps;
    Extractor<float> ext(cfg);
    Rng rng(1);
    ext.init(ps, rng);
    Tensor<float> x = random_tensor<float>(rng, {2, 1, 13});
    const auto out = ext.forward(x, false, nullptr);
    CHECK(out.map.shape == std::vector<std::size_t>{2, 64, 13});
    CHECK(out.pooled.shape == std::vector<std::size_t>{2, 64});
}

TEST_CASE("extractor trainable parameter count matches the closed form") {
    for (std::size_t width : {4u, 8u}) {
        for (std::size_t blocks : {0u, 1u, 3u}) {
            ExtractorConfig cfg = small_config();
            cfg.width = width;
            cfg.blocks = blocks;
            ParameterSet<double> ps;
            Extractor<double> ext(cfg);
            Rng rng(2);
            ext.init(ps, rng);
            std::size_t trainable = 0;
            for (const auto& [name, p] : ps)
                if (p.trainable && p.part == Partition::extractor) trainable += p.t.size();
            CHECK(trainable == cfg.trainable_count());
        }
    }
}

TEST_CASE("all-zero input propagates to all-zero features in eval mode") {
    // fresh init: zero conv biases, BN beta 0, running stats (0, 1)
    ParameterSet<float> ps;
    Extractor<float> ext(small_config());
    Rng rng(3);
    ext.init(ps, rng);
    Tensor<float> x({3, 1, 9});
    const auto out = ext.forward(x, false, nullptr);
    for (float v : out.map.v) CHECK(v == 0.0f);
    for (float v : out.pooled.v) CHECK(v == 0.0f);
}

TEST_CASE("zeroing a block's main path turns it into identity-then-relu") {
    ExtractorConfig cfg = small_config();
    cfg.blocks = 1;
    ParameterSet<float> ps;
    Extractor<float> ext(cfg);
    Rng rng(4);
    ext.init(ps, rng);
    ps.at("extractor.block0.conv1.w").t.fill(0.0f);
    ps.at("extractor.block0.conv1.b").t.fill(0.0f);
    ps.at("extractor.block0.conv2.w").t.fill(0.0f);
    ps.at("extractor.block0.conv2.b").t.fill(0.0f);

    Tensor<float> x = random_tensor<float>(rng, {2, 1, 9});
    const auto out = ext.forward(x, false, nullptr);

    // expected: relu(stem(x))
    const auto stem = conv1d_forward(x, ps.at("extractor.stem.w").t, ps.at("extractor.stem.b").t,
                                     1, 1);
    const auto expected = relu_forward(stem);
    REQUIRE(out.map.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(out.map.v[i] == doctest::Approx(expected.v[i]));
}

TEST_CASE("repeated eval forward on frozen parameters is bit-exact") {
    ParameterSet<float> ps;
    Extractor<float> ext(small_config());
    Rng rng(5);
    ext.init(ps, rng);
    ps.freeze(Partition::extractor);
    Tensor<float> x = random_tensor<float>(rng, {4, 1, 9});
    const auto a = ext.forward(x, false, nullptr);
    const auto b = ext.forward(x, false, nullptr);
    CHECK(a.map.v == b.map.v);
    CHECK(a.pooled.v == b.pooled.v);
}

TEST_CASE("extractor end-to-end gradients match finite differences at 64-bit") {
    ExtractorConfig cfg = small_config();
    ParameterSet<double> ps;
    Extractor<double> ext(cfg);
    Rng rng(6);
    ext.init(ps, rng);
    Tensor<double> x = random_tensor<double>(rng, {2, 1, 9});
    Tensor<double> proj({2, cfg.width});
    for (auto& v : proj.v) v = 0.5 + rng.uniform();

    std::vector<Tensor<double>*> probes = {&x};
    for (auto& [name, p] : ps)
        if (p.trainable) probes.push_back(&p.t);

    GradChecker checker;
    auto forward = [&] {
        double s = 0;
        const auto out = ext.forward(x, true, nullptr);
        for (std::size_t i = 0; i < out.pooled.size(); ++i) s += out.pooled.v[i] * proj.v[i];
        return s;
    };
    auto backward = [&] {
        ExtractorCache<double> cache;
        ext.forward(x, true, &cache);
        x.g = ext.backward(Tensor<double>(), proj, cache).v;
    };
    const auto report = checker.check(probes, forward, backward);
    CHECK_MESSAGE(report.pass, report.worst);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("head output lies on the unit hypersphere") {
    ParameterSet<float> ps;
    HeadConfig hcfg;
    hcfg.hidden = 16;
    hcfg.out = 8;
    Head<float> head(hcfg, 6);
    Rng rng(7);
    head.init(ps, rng);
    Tensor<float> pooled = random_tensor<float>(rng, {5, 6});
    const auto z = head.forward(pooled, nullptr);
    for (std::size_t r = 0; r < 5; ++r) {
        double norm = 0;
        for (std::size_t c = 0; c < 8; ++c) norm += double(z(r, c)) * z(r, c);
        CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);
    }
}

TEST_CASE("identical head inputs give identical embeddings with similarity 1") {
    ParameterSet<float> ps;
    Head<float> head(HeadConfig{16, 8}, 6);
    Rng rng(8);
    head.init(ps, rng);
    Tensor<float> pooled({2, 6});
    for (std::size_t c = 0; c < 6; ++c) pooled(0, c) = pooled(1, c) = static_cast<float>(c) - 2.5f;
    const auto z = head.forward(pooled, nullptr);
    double sim = 0;
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(z(0, c) == z(1, c));
        sim += double(z(0, c)) * z(1, c);
    }
    CHECK(sim == doctest::Approx(1.0));
}

TEST_CASE("head is permutation-equivariant over the batch") {
    ParameterSet<float> ps;
    Head<float> head(HeadConfig{16, 8}, 6);
    Rng rng(9);
    head.init(ps, rng);
    Tensor<float> pooled = random_tensor<float>(rng, {4, 6});
    const auto z = head.forward(pooled, nullptr);

    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    Tensor<float> permuted({4, 6});
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 6; ++c) permuted(r, c) = pooled(perm[r], c);
    const auto zp = head.forward(permuted, nullptr);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 8; ++c) CHECK(zp(r, c) == z(perm[r], c));
}

TEST_CASE("head gradients (through the normalization) match finite differences") {
    ParameterSet<double> ps;
    Head<double> head(HeadConfig{8, 6}, 5);
    Rng rng(10);
    head.init(ps, rng);
    Tensor<double> pooled = random_tensor<double>(rng, {3, 5});
    Tensor<double> proj({3, 6});
    for (auto& v : proj.v) v = 0.5 + rng.uniform();

    std::vector<Tensor<double>*> probes = {&pooled};
    for (auto& [name, p] : ps) probes.push_back(&p.t);

    GradChecker checker;
    auto forward = [&] {
        const auto z = head.forward(pooled, nullptr);
        double s = 0;
        for (std::size_t i = 0; i < z.size(); ++i) s += z.v[i] * proj.v[i];
        return s;
    };
    auto backward = [&] {
        HeadCache<double> cache;
        head.forward(pooled, &cache);
        pooled.g = head.backward(proj, cache).v;
    };
    const auto report = checker.check(probes, forward, backward);
    CHECK_MESSAGE(report.pass, report.worst);
}

TEST_CASE("classifier embedding has the configured output dimension") {
    ParameterSet<float> ps;
    Classifier<float> cls(ClassifierConfig{32}, 64);
    Rng rng(11);
    cls.init(ps, rng);
    Tensor<float> map = random_tensor<float>(rng, {3, 64, 13});
    const auto emb = cls.forward(map, nullptr);
    CHECK(emb.shape == std::vector<std::size_t>{3, 32});
}

TEST_CASE("identity projection reproduces the pooled extractor features") {
    // The extractor map is post-ReLU (non-negative), so an identity width-1
    // conv followed by ReLU and pooling equals plain pooling.
    ExtractorConfig cfg = small_config();
    ParameterSet<float> ps;
    Extractor<float> ext(cfg);
    Rng rng(12);
    ext.init(ps, rng);
    Classifier<float> cls(ClassifierConfig{cfg.width}, cfg.width);
    cls.init(ps, rng);
    auto& w = ps.at("classifier.proj.w").t;
    w.fill(0.0f);
    for (std::size_t c = 0; c < cfg.width; ++c) w(c, c, 0) = 1.0f;
    ps.at("classifier.proj.b").t.fill(0.0f);

    Tensor<float> x = random_tensor<float>(rng, {2, 1, 9});
    const auto out = ext.forward(x, false, nullptr);
    const auto emb = cls.forward(out.map, nullptr);
    REQUIRE(emb.size() == out.pooled.size());
    for (std::size_t i = 0; i < emb.size(); ++i)
        CHECK(emb.v[i] == doctest::Approx(out.pooled.v[i]));
}

TEST_CASE("classifier gradients flow to phi only while theta stays untouched") {
    ExtractorConfig cfg = small_config();
    ParameterSet<double> ps;
    Extractor<double> ext(cfg);
    Rng rng(13);
    ext.init(ps, rng);
    Classifier<double> cls(ClassifierConfig{5}, cfg.width);
    cls.init(ps, rng);
    ps.freeze(Partition::extractor);

    Tensor<double> x = random_tensor<double>(rng, {2, 1, 9});
    Tensor<double> proj({2, 5});
    for (auto& v : proj.v) v = 0.5 + rng.uniform();

    // theta frozen: the feature map is a constant input to the classifier
    const Tensor<double> map = ext.forward(x, false, nullptr).map;

    std::vector<Tensor<double>*> probes = {&ps.at("classifier.proj.w").t,
                                           &ps.at("classifier.proj.b").t};
    GradChecker checker;
    auto forward = [&] {
        const auto emb = cls.forward(map, nullptr);
        double s = 0;
        for (std::size_t i = 0; i < emb.size(); ++i) s += emb.v[i] * proj.v[i];
        return s;
    };
    auto backward = [&] {
        ClassifierCache<double> cache;
        cls.forward(map, &cache);
        cls.backward(proj, cache);
    };
    const auto report = checker.check(probes, forward, backward);
    CHECK_MESSAGE(report.pass, report.worst);

    // extractor entries saw no gradient accumulation at all
    for (const auto& [name, p] : ps)
        if (p.part == Partition::extractor && p.t.has_grad())
            for (double g : p.t.g) CHECK(g == 0.0);
}

TEST_CASE("linear baseline produces [B, C] logits; zero weights mean uniform softmax") {
    ParameterSet<float> ps;
    LinearHead<float> lin(6, 2);
    Rng rng(14);
    lin.init(ps, rng);
    ps.at("classifier.linear.w").t.fill(0.0f);
    ps.at("classifier.linear.b").t.fill(0.0f);
    Tensor<float> pooled = random_tensor<float>(rng, {3, 6});
    const auto logits = lin.forward(pooled, nullptr);
    CHECK(logits.shape == std::vector<std::size_t>{3, 2});
    for (float v : logits.v) CHECK(v == 0.0f);  // softmax of zeros = 1/C per class
}

TEST_CASE("binding a checkpoint with mismatched config names the offending tensor") {
    ExtractorConfig cfg = small_config();
    ParameterSet<float> ps;
    Extractor<float> ext(cfg);
    Rng rng(15);
    ext.init(ps, rng);

    ExtractorConfig other = cfg;
    other.width = cfg.width + 2;
    Extractor<float> wrong(other);
    CHECK_THROWS_WITH_AS(wrong.bind(ps), doctest::Contains("extractor.stem.w"), Error);
}
