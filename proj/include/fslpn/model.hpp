#pragma once

#include <string>
#include <vector>

#include "fslpn/dataset.hpp"
#include "fslpn/ops.hpp"
#include "fslpn/params.hpp"
#include "fslpn/rng.hpp"

// The three network components: residual feature extractor f (stem conv plus
// a stack of two-conv residual blocks, no pooling inside blocks, global
// average pooling at the end), the contrastive head (MLP onto the unit
// hypersphere), and the classifier embedding F_phi (width-1 convolution over
// the pre-pool feature map, ReLU, pooled). A dense logits head serves as the
// linear-classifier baseline.
//
// Networks own no tensors; parameters live in a ParameterSet and are bound by
// pointer. Forward passes write nothing to the ParameterSet except batch-norm
// running statistics in train mode, so eval-mode inference on a frozen set is
// concurrency-safe when each caller owns its caches.

namespace fslpn {

// ---------------------------------------------------------------------------
// configs
// ---------------------------------------------------------------------------

struct ExtractorConfig {
    std::size_t input_length = 13;
    std::size_t width = 64;   // channel width, constant through the stack
    std::size_t blocks = 4;   // residual blocks, two convolutions each
    std::size_t kernel = 3;   // odd, length-preserving with same-padding
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    std::size_t conv_layers() const { return 1 + 2 * blocks; }  // stem + 2 per block

    static ExtractorConfig from_conv_layers(std::size_t n, ExtractorConfig base);
    static ExtractorConfig from_conv_layers(std::size_t n);

    void validate() const {
        if (kernel % 2 == 0 || kernel == 0) throw_contract("extractor kernel must be odd");
        if (width == 0 || input_length == 0) throw_contract("extractor width/input_length must be positive");
    }

    // Trainable parameter count: conv weights+biases and BN gamma/beta.
    std::size_t trainable_count() const {
        const std::size_t stem = width * 1 * kernel + width;
        const std::size_t per_block = 2 * (width * width * kernel + width) + 2 * (2 * width);
        return stem + blocks * per_block;
    }
};

inline ExtractorConfig ExtractorConfig::from_conv_layers(std::size_t n, ExtractorConfig base) {
    if (n < 1 || n % 2 == 0)
        throw_contract("conv layer count must be odd (stem + 2 per block), got " +
                       std::to_string(n));
    base.blocks = (n - 1) / 2;
    return base;
}

inline ExtractorConfig ExtractorConfig::from_conv_layers(std::size_t n) {
    return from_conv_layers(n, ExtractorConfig{});
}

struct HeadConfig {
    std::size_t hidden = 128;
    std::size_t out = 128;  // normalized to unit norm
};

struct ClassifierConfig {
    std::size_t out_dim = 32;
};

// ---------------------------------------------------------------------------
// extractor
// ---------------------------------------------------------------------------

template <typename T>
struct BlockParams {
    Param<T>*conv1_w, *conv1_b, *bn1_gamma, *bn1_beta, *bn1_mean, *bn1_var;
    Param<T>*conv2_w, *conv2_b, *bn2_gamma, *bn2_beta, *bn2_mean, *bn2_var;
};

template <typename T>
struct BlockCache {
    Conv1dCache<T> conv1, conv2;
    BatchNormCache<T> bn1, bn2;
    ReluCache<T> relu_mid, relu_out;
};

template <typename T>
struct ExtractorCache {
    Conv1dCache<T> stem;
    std::vector<BlockCache<T>> blocks;
    std::vector<std::size_t> map_shape;
};

template <typename T>
struct ExtractorOut {
    Tensor<T> map;     // [B, width, F]
    Tensor<T> pooled;  // [B, width]
};

template <typename T>
class Extractor {
  public:
    explicit Extractor(ExtractorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const ExtractorConfig& config() const { return cfg_; }

    // Creates parameters with Kaiming fan-in init (zeros for biases, identity
    // batch-norm, unit running variance).
    void init(ParameterSet<T>& ps, Rng& rng) {
        add_conv(ps, "extractor.stem", 1, rng);
        for (std::size_t b = 0; b < cfg_.blocks; ++b) {
            const std::string prefix = "extractor.block" + std::to_string(b);
            add_conv(ps, prefix + ".conv1", cfg_.width, rng);
            add_bn(ps, prefix + ".bn1");
            add_conv(ps, prefix + ".conv2", cfg_.width, rng);
            add_bn(ps, prefix + ".bn2");
        }
        bind(ps);
    }

    // Binds existing parameters (checkpoint load path), validating shapes.
    void bind(ParameterSet<T>& ps) {
        stem_w_ = expect(ps, "extractor.stem.w", {cfg_.width, 1, cfg_.kernel});
        stem_b_ = expect(ps, "extractor.stem.b", {cfg_.width});
        blocks_.clear();
        for (std::size_t b = 0; b < cfg_.blocks; ++b) {
            const std::string p = "extractor.block" + std::to_string(b);
            BlockParams<T> bp;
            bp.conv1_w = expect(ps, p + ".conv1.w", {cfg_.width, cfg_.width, cfg_.kernel});
            bp.conv1_b = expect(ps, p + ".conv1.b", {cfg_.width});
            bp.bn1_gamma = expect(ps, p + ".bn1.gamma", {cfg_.width});
            bp.bn1_beta = expect(ps, p + ".bn1.beta", {cfg_.width});
            bp.bn1_mean = expect(ps, p + ".bn1.running_mean", {cfg_.width});
            bp.bn1_var = expect(ps, p + ".bn1.running_var", {cfg_.width});
            bp.conv2_w = expect(ps, p + ".conv2.w", {cfg_.width, cfg_.width, cfg_.kernel});
            bp.conv2_b = expect(ps, p + ".conv2.b", {cfg_.width});
            bp.bn2_gamma = expect(ps, p + ".bn2.gamma", {cfg_.width});
            bp.bn2_beta = expect(ps, p + ".bn2.beta", {cfg_.width});
            bp.bn2_mean = expect(ps, p + ".bn2.running_mean", {cfg_.width});
            bp.bn2_var = expect(ps, p + ".bn2.running_var", {cfg_.width});
            blocks_.push_back(bp);
        }
    }

    ExtractorOut<T> forward(const Tensor<T>& x, bool train, ExtractorCache<T>* cache) const {
        require_rank(x, 3, "extractor input");
        require_extent(x, 1, 1, "extractor input (channel axis)");
        require_extent(x, 2, cfg_.input_length, "extractor input (length axis)");
        const int pad = static_cast<int>((cfg_.kernel - 1) / 2);
        if (cache != nullptr) cache->blocks.resize(cfg_.blocks);

        Tensor<T> h = conv1d_forward(x, stem_w_->t, stem_b_->t, 1, pad,
                                     cache ? &cache->stem : nullptr);
        for (std::size_t b = 0; b < cfg_.blocks; ++b)
            h = block_forward(h, blocks_[b], train, pad, cache ? &cache->blocks[b] : nullptr);

        ExtractorOut<T> out;
        out.pooled = global_avg_pool_forward(h);
        if (cache != nullptr) cache->map_shape = h.shape;
        out.map = std::move(h);
        return out;
    }

    // d_map and/or d_pooled may be empty tensors. Returns d_input.
    Tensor<T> backward(const Tensor<T>& d_map, const Tensor<T>& d_pooled,
                       ExtractorCache<T>& cache) const {
        Tensor<T> d;
        if (d_pooled.size() > 0) {
            d = global_avg_pool_backward(d_pooled, cache.map_shape);
            if (d_map.size() > 0)
                for (std::size_t i = 0; i < d.size(); ++i) d.v[i] += d_map.v[i];
        } else {
            d = d_map;
        }
        for (std::size_t b = cfg_.blocks; b-- > 0;)
            d = block_backward(d, blocks_[b], cache.blocks[b]);
        return conv1d_backward(d, cache.stem, stem_w_->t, stem_b_->t);
    }

  private:
    static Param<T>* expect(ParameterSet<T>& ps, const std::string& name,
                            std::vector<std::size_t> shape) {
        if (!ps.contains(name)) throw_data("missing parameter tensor: " + name);
        Param<T>* p = &ps.at(name);
        if (p->t.shape != shape)
            throw_data("parameter " + name + " has shape " + p->t.shape_str() +
                       ", config expects " + Tensor<T>(shape).shape_str());
        return p;
    }

    void add_conv(ParameterSet<T>& ps, const std::string& prefix, std::size_t in_ch, Rng& rng) {
        Tensor<T> w({cfg_.width, in_ch, cfg_.kernel});
        w.fill_gaussian(rng, std::sqrt(T(2) / static_cast<T>(in_ch * cfg_.kernel)));
        ps.add(prefix + ".w", Partition::extractor, std::move(w));
        ps.add(prefix + ".b", Partition::extractor, Tensor<T>({cfg_.width}));
    }

    void add_bn(ParameterSet<T>& ps, const std::string& prefix) {
        Tensor<T> gamma({cfg_.width});
        gamma.fill(T(1));
        ps.add(prefix + ".gamma", Partition::extractor, std::move(gamma));
        ps.add(prefix + ".beta", Partition::extractor, Tensor<T>({cfg_.width}));
        ps.add(prefix + ".running_mean", Partition::extractor, Tensor<T>({cfg_.width}),
               /*trainable=*/false);
        Tensor<T> var({cfg_.width});
        var.fill(T(1));
        ps.add(prefix + ".running_var", Partition::extractor, std::move(var), /*trainable=*/false);
    }

    Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& bp, bool train, int pad,
                            BlockCache<T>* cc) const {
        const T mom = static_cast<T>(cfg_.bn_momentum);
        const T eps = static_cast<T>(cfg_.bn_eps);
        Tensor<T> h = conv1d_forward(x, bp.conv1_w->t, bp.conv1_b->t, 1, pad,
                                     cc ? &cc->conv1 : nullptr);
        h = batch_norm_forward(h, bp.bn1_gamma->t, bp.bn1_beta->t, bp.bn1_mean->t, bp.bn1_var->t,
                               train, mom, eps, cc ? &cc->bn1 : nullptr);
        h = relu_forward(h, cc ? &cc->relu_mid : nullptr);
        h = conv1d_forward(h, bp.conv2_w->t, bp.conv2_b->t, 1, pad, cc ? &cc->conv2 : nullptr);
        h = batch_norm_forward(h, bp.bn2_gamma->t, bp.bn2_beta->t, bp.bn2_mean->t, bp.bn2_var->t,
                               train, mom, eps, cc ? &cc->bn2 : nullptr);
        for (std::size_t i = 0; i < h.size(); ++i) h.v[i] += x.v[i];  // shortcut
        return relu_forward(h, cc ? &cc->relu_out : nullptr);
    }

    Tensor<T> block_backward(const Tensor<T>& d_out, const BlockParams<T>& bp,
                             BlockCache<T>& cc) const {
        Tensor<T> d = relu_backward(d_out, cc.relu_out);
        Tensor<T> d_shortcut = d;  // additive branch
        d = batch_norm_backward(d, cc.bn2, bp.bn2_gamma->t, bp.bn2_beta->t);
        d = conv1d_backward(d, cc.conv2, bp.conv2_w->t, bp.conv2_b->t);
        d = relu_backward(d, cc.relu_mid);
        d = batch_norm_backward(d, cc.bn1, bp.bn1_gamma->t, bp.bn1_beta->t);
        d = conv1d_backward(d, cc.conv1, bp.conv1_w->t, bp.conv1_b->t);
        for (std::size_t i = 0; i < d.size(); ++i) d.v[i] += d_shortcut.v[i];
        return d;
    }

    ExtractorConfig cfg_;
    Param<T>*stem_w_ = nullptr, *stem_b_ = nullptr;
    std::vector<BlockParams<T>> blocks_;
};

// ---------------------------------------------------------------------------
// contrastive head
// ---------------------------------------------------------------------------

template <typename T>
struct HeadCache {
    DenseCache<T> fc1, fc2;
    ReluCache<T> relu;
    L2NormCache<T> norm;
};

template <typename T>
class Head {
  public:
    Head(HeadConfig cfg, std::size_t in_dim) : cfg_(cfg), in_dim_(in_dim) {}

    void init(ParameterSet<T>& ps, Rng& rng) {
        Tensor<T> w1({cfg_.hidden, in_dim_});
        w1.fill_gaussian(rng, std::sqrt(T(2) / static_cast<T>(in_dim_)));
        ps.add("head.fc1.w", Partition::head, std::move(w1));
        ps.add("head.fc1.b", Partition::head, Tensor<T>({cfg_.hidden}));
        Tensor<T> w2({cfg_.out, cfg_.hidden});
        w2.fill_gaussian(rng, std::sqrt(T(2) / static_cast<T>(cfg_.hidden)));
        ps.add("head.fc2.w", Partition::head, std::move(w2));
        ps.add("head.fc2.b", Partition::head, Tensor<T>({cfg_.out}));
        bind(ps);
    }

    void bind(ParameterSet<T>& ps) {
        fc1_w_ = &ps.at("head.fc1.w");
        fc1_b_ = &ps.at("head.fc1.b");
        fc2_w_ = &ps.at("head.fc2.w");
        fc2_b_ = &ps.at("head.fc2.b");
    }

    // dense -> relu -> dense -> unit-norm rows. No activation before the
    // normalization on the output layer.
    Tensor<T> forward(const Tensor<T>& pooled, HeadCache<T>* cache) const {
        Tensor<T> h = dense_forward(pooled, fc1_w_->t, fc1_b_->t, cache ? &cache->fc1 : nullptr);
        h = relu_forward(h, cache ? &cache->relu : nullptr);
        h = dense_forward(h, fc2_w_->t, fc2_b_->t, cache ? &cache->fc2 : nullptr);
        auto normed = l2_normalize_rows(h, cache ? &cache->norm : nullptr);
        return std::move(normed.y);
    }

    Tensor<T> backward(const Tensor<T>& dz, HeadCache<T>& cache) const {
        Tensor<T> d = l2_normalize_rows_backward(dz, cache.norm);
        d = dense_backward(d, cache.fc2, fc2_w_->t, fc2_b_->t);
        d = relu_backward(d, cache.relu);
        return dense_backward(d, cache.fc1, fc1_w_->t, fc1_b_->t);
    }

  private:
    HeadConfig cfg_;
    std::size_t in_dim_;
    Param<T>*fc1_w_ = nullptr, *fc1_b_ = nullptr, *fc2_w_ = nullptr, *fc2_b_ = nullptr;
};

// ---------------------------------------------------------------------------
// classifier embedding F_phi and linear baseline
// ---------------------------------------------------------------------------

template <typename T>
struct ClassifierCache {
    Conv1dCache<T> proj;
    ReluCache<T> relu;
    std::vector<std::size_t> relu_shape;
};

// Width-1 convolution over the pre-pool feature map, ReLU, global average
// pool: a learned per-position channel projection whose output dimension is
// the prototype space.
template <typename T>
class Classifier {
  public:
    Classifier(ClassifierConfig cfg, std::size_t in_channels)
        : cfg_(cfg), in_channels_(in_channels) {}

    void init(ParameterSet<T>& ps, Rng& rng) {
        Tensor<T> w({cfg_.out_dim, in_channels_, 1});
        w.fill_gaussian(rng, std::sqrt(T(2) / static_cast<T>(in_channels_)));
        ps.add("classifier.proj.w", Partition::classifier, std::move(w));
        ps.add("classifier.proj.b", Partition::classifier, Tensor<T>({cfg_.out_dim}));
        bind(ps);
    }

    void bind(ParameterSet<T>& ps) {
        w_ = &ps.at("classifier.proj.w");
        b_ = &ps.at("classifier.proj.b");
        if (w_->t.shape != std::vector<std::size_t>{cfg_.out_dim, in_channels_, 1})
            throw_data("parameter classifier.proj.w has shape " + w_->t.shape_str() +
                       ", config expects out_dim=" + std::to_string(cfg_.out_dim));
    }

    Tensor<T> forward(const Tensor<T>& map, ClassifierCache<T>* cache) const {
        Tensor<T> h = conv1d_forward(map, w_->t, b_->t, 1, 0, cache ? &cache->proj : nullptr);
        h = relu_forward(h, cache ? &cache->relu : nullptr);
        if (cache != nullptr) cache->relu_shape = h.shape;
        return global_avg_pool_forward(h);
    }

    // Returns d_map (discarded by stage-2 training, which keeps theta frozen).
    Tensor<T> backward(const Tensor<T>& d_emb, ClassifierCache<T>& cache) const {
        Tensor<T> d = global_avg_pool_backward(d_emb, cache.relu_shape);
        d = relu_backward(d, cache.relu);
        return conv1d_backward(d, cache.proj, w_->t, b_->t);
    }

  private:
    ClassifierConfig cfg_;
    std::size_t in_channels_;
    Param<T>*w_ = nullptr, *b_ = nullptr;
};

template <typename T>
class LinearHead {
  public:
    LinearHead(std::size_t in_dim, std::size_t classes) : in_dim_(in_dim), classes_(classes) {}

    // Zero init: pooled features carry uncontrolled norms, so random logits
    // start saturated; a zero-initialized probe starts at uniform softmax.
    void init(ParameterSet<T>& ps, Rng&) {
        ps.add("classifier.linear.w", Partition::classifier, Tensor<T>({classes_, in_dim_}));
        ps.add("classifier.linear.b", Partition::classifier, Tensor<T>({classes_}));
        bind(ps);
    }

    void bind(ParameterSet<T>& ps) {
        w_ = &ps.at("classifier.linear.w");
        b_ = &ps.at("classifier.linear.b");
    }

    Tensor<T> forward(const Tensor<T>& pooled, DenseCache<T>* cache) const {
        return dense_forward(pooled, w_->t, b_->t, cache);
    }

    Tensor<T> backward(const Tensor<T>& d_logits, DenseCache<T>& cache) const {
        return dense_backward(d_logits, cache, w_->t, b_->t);
    }

  private:
    std::size_t in_dim_, classes_;
    Param<T>*w_ = nullptr, *b_ = nullptr;
};

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

// Gathers dataset rows into a [M, 1, F] input tensor (cast to the working
// scalar type).
template <typename T>
Tensor<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Tensor<T> x({rows.size(), 1, ds.cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = ds.row(rows[i]);
        T* dst = x.row(i, 0);
        for (std::size_t c = 0; c < ds.cols; ++c) dst[c] = static_cast<T>(src[c]);
    }
    return x;
}

}  // namespace fslpn
