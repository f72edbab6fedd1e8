#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/rng.hpp"
#include "cadaseg/core/tensor.hpp"
#include "cadaseg/dsbn.hpp"
#include "cadaseg/nn/layers.hpp"

namespace cadaseg {

// ---------------------------------------------------------------------------
// Architecture descriptor
// ---------------------------------------------------------------------------

struct ArchDescriptor {
    std::vector<int> widths = {16, 32, 64, 128};  // per level incl. bottleneck
    int in_channels = 1;
    int num_classes = 2;
    int proj_hidden = 256;
    int proj_dim = 128;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.9;

    int depth() const { return static_cast<int>(widths.size()) - 1; }

    void validate() const {
        if (widths.size() < 2)
            throw ConfigError("arch: need at least two channel widths");
        for (size_t i = 1; i < widths.size(); ++i)
            if (widths[i] <= widths[i - 1])
                throw ConfigError("arch: channel widths must be strictly increasing");
        if (widths[0] <= 0) throw ConfigError("arch: widths must be positive");
        if (num_classes < 2) throw ConfigError("arch: need at least two classes");
        if (in_channels <= 0 || proj_hidden <= 0 || proj_dim <= 0)
            throw ConfigError("arch: dimensions must be positive");
    }

    bool operator==(const ArchDescriptor&) const = default;
};

// ---------------------------------------------------------------------------
// Parameters. The source and target parameter sets share every convolution
// by construction; only the DSBN states split per domain.
// ---------------------------------------------------------------------------

template <typename T>
struct EncBlock {
    ConvWeight<T> conv1, conv2;
    DsbnLayerState<T> bn1, bn2;
};

template <typename T>
struct DecBlock {
    ConvWeight<T> upconv, conv1, conv2;
    DsbnLayerState<T> bnu, bn1, bn2;
};

template <typename T>
struct ModelParams {
    ArchDescriptor arch;
    std::vector<EncBlock<T>> encoder;  // depth() entries
    EncBlock<T> bottleneck;
    std::vector<DecBlock<T>> decoder;  // depth() entries, index = level
    ConvWeight<T> head;                // 1x1, widths[0] -> classes, biased
    LinearWeight<T> proj_fc1, proj_fc2;

    size_t trainable_count() const;
    void copy_domain_states(Domain from, Domain to);
};

// Walks every trainable tensor in a fixed canonical order. fn receives
// (name, vector<T>&). DSBN affine names follow the checkpoint convention
// dsbn.<layer>.<S|T>.{gamma,beta}.
template <typename T, typename Fn>
void visit_trainable(ModelParams<T>& p, Fn&& fn) {
    auto visit_bn = [&](const std::string& layer, DsbnLayerState<T>& bn) {
        static const char* dn[2] = {"S", "T"};
        for (int d = 0; d < kNumDomains; ++d) {
            fn("dsbn." + layer + "." + dn[d] + ".gamma", bn.gamma[d]);
            fn("dsbn." + layer + "." + dn[d] + ".beta", bn.beta[d]);
        }
    };
    auto visit_enc = [&](const std::string& base, EncBlock<T>& b) {
        fn("unet." + base + ".conv1.weight", b.conv1.w);
        visit_bn(base + ".bn1", b.bn1);
        fn("unet." + base + ".conv2.weight", b.conv2.w);
        visit_bn(base + ".bn2", b.bn2);
    };
    for (size_t i = 0; i < p.encoder.size(); ++i)
        visit_enc("enc" + std::to_string(i), p.encoder[i]);
    visit_enc("bottleneck", p.bottleneck);
    for (size_t i = 0; i < p.decoder.size(); ++i) {
        const std::string base = "dec" + std::to_string(i);
        DecBlock<T>& b = p.decoder[i];
        fn("unet." + base + ".upconv.weight", b.upconv.w);
        visit_bn(base + ".bnu", b.bnu);
        fn("unet." + base + ".conv1.weight", b.conv1.w);
        visit_bn(base + ".bn1", b.bn1);
        fn("unet." + base + ".conv2.weight", b.conv2.w);
        visit_bn(base + ".bn2", b.bn2);
    }
    fn("unet.head.weight", p.head.w);
    fn("unet.head.bias", p.head.bias);
    fn("proj.fc1.weight", p.proj_fc1.w.data);
    fn("proj.fc1.bias", p.proj_fc1.bias);
    fn("proj.fc2.weight", p.proj_fc2.w.data);
    fn("proj.fc2.bias", p.proj_fc2.bias);
}

// Running statistics, same naming convention.
template <typename T, typename Fn>
void visit_stats(ModelParams<T>& p, Fn&& fn) {
    auto visit_bn = [&](const std::string& layer, DsbnLayerState<T>& bn) {
        static const char* dn[2] = {"S", "T"};
        for (int d = 0; d < kNumDomains; ++d) {
            fn("dsbn." + layer + "." + dn[d] + ".mean", bn.running_mean[d]);
            fn("dsbn." + layer + "." + dn[d] + ".var", bn.running_var[d]);
        }
    };
    for (size_t i = 0; i < p.encoder.size(); ++i) {
        visit_bn("enc" + std::to_string(i) + ".bn1", p.encoder[i].bn1);
        visit_bn("enc" + std::to_string(i) + ".bn2", p.encoder[i].bn2);
    }
    visit_bn("bottleneck.bn1", p.bottleneck.bn1);
    visit_bn("bottleneck.bn2", p.bottleneck.bn2);
    for (size_t i = 0; i < p.decoder.size(); ++i) {
        const std::string base = "dec" + std::to_string(i);
        visit_bn(base + ".bnu", p.decoder[i].bnu);
        visit_bn(base + ".bn1", p.decoder[i].bn1);
        visit_bn(base + ".bn2", p.decoder[i].bn2);
    }
}

// Every DSBN site, in visitation order.
template <typename T, typename Fn>
void visit_dsbn(ModelParams<T>& p, Fn&& fn) {
    for (auto& b : p.encoder) {
        fn(b.bn1);
        fn(b.bn2);
    }
    fn(p.bottleneck.bn1);
    fn(p.bottleneck.bn2);
    for (auto& b : p.decoder) {
        fn(b.bnu);
        fn(b.bn1);
        fn(b.bn2);
    }
}

template <typename T>
size_t ModelParams<T>::trainable_count() const {
    size_t count = 0;
    visit_trainable(const_cast<ModelParams<T>&>(*this),
                    [&](const std::string&, std::vector<T>& v) { count += v.size(); });
    return count;
}

template <typename T>
void ModelParams<T>::copy_domain_states(Domain from, Domain to) {
    visit_dsbn(*this, [&](DsbnLayerState<T>& bn) { bn.copy_domain(from, to); });
}

// ---------------------------------------------------------------------------
// Gradient buffers, mirroring the parameter structure. `touched` marks
// tensors that actually received contributions this step; the optimizer
// leaves untouched tensors bit-identical.
// ---------------------------------------------------------------------------

template <typename T>
struct DsbnGrads {
    std::vector<T> dgamma[kNumDomains], dbeta[kNumDomains];
    bool touched[kNumDomains] = {false, false};

    void init(int channels) {
        for (int d = 0; d < kNumDomains; ++d) {
            dgamma[d].assign(channels, T(0));
            dbeta[d].assign(channels, T(0));
            touched[d] = false;
        }
    }
};

template <typename T>
struct ConvGrads {
    std::vector<T> dw, dbias;
    bool touched = false;

    void init(const ConvWeight<T>& cw) {
        dw.assign(cw.w.size(), T(0));
        dbias.assign(cw.bias.size(), T(0));
        touched = false;
    }
};

template <typename T>
struct LinearGrads {
    Matrix<T> dw;
    std::vector<T> dbias;
    bool touched = false;

    void init(const LinearWeight<T>& lw) {
        dw = Matrix<T>(lw.w.rows, lw.w.cols);
        dbias.assign(lw.bias.size(), T(0));
        touched = false;
    }
};

template <typename T>
struct EncBlockGrads {
    ConvGrads<T> conv1, conv2;
    DsbnGrads<T> bn1, bn2;

    void init(const EncBlock<T>& b) {
        conv1.init(b.conv1);
        conv2.init(b.conv2);
        bn1.init(b.bn1.channels);
        bn2.init(b.bn2.channels);
    }
};

template <typename T>
struct DecBlockGrads {
    ConvGrads<T> upconv, conv1, conv2;
    DsbnGrads<T> bnu, bn1, bn2;

    void init(const DecBlock<T>& b) {
        upconv.init(b.upconv);
        conv1.init(b.conv1);
        conv2.init(b.conv2);
        bnu.init(b.bnu.channels);
        bn1.init(b.bn1.channels);
        bn2.init(b.bn2.channels);
    }
};

template <typename T>
struct ModelGrads {
    std::vector<EncBlockGrads<T>> encoder;
    EncBlockGrads<T> bottleneck;
    std::vector<DecBlockGrads<T>> decoder;
    ConvGrads<T> head;
    LinearGrads<T> proj_fc1, proj_fc2;

    explicit ModelGrads(const ModelParams<T>& p) {
        encoder.resize(p.encoder.size());
        for (size_t i = 0; i < p.encoder.size(); ++i) encoder[i].init(p.encoder[i]);
        bottleneck.init(p.bottleneck);
        decoder.resize(p.decoder.size());
        for (size_t i = 0; i < p.decoder.size(); ++i) decoder[i].init(p.decoder[i]);
        head.init(p.head);
        proj_fc1.init(p.proj_fc1);
        proj_fc2.init(p.proj_fc2);
    }

    void zero() {
        auto z = [](auto& v) { std::fill(v.begin(), v.end(), typename std::decay_t<decltype(v)>::value_type(0)); };
        auto zero_conv = [&](ConvGrads<T>& c) {
            z(c.dw);
            z(c.dbias);
            c.touched = false;
        };
        auto zero_bn = [&](DsbnGrads<T>& b) {
            for (int d = 0; d < kNumDomains; ++d) {
                z(b.dgamma[d]);
                z(b.dbeta[d]);
                b.touched[d] = false;
            }
        };
        for (auto& e : encoder) {
            zero_conv(e.conv1);
            zero_conv(e.conv2);
            zero_bn(e.bn1);
            zero_bn(e.bn2);
        }
        zero_conv(bottleneck.conv1);
        zero_conv(bottleneck.conv2);
        zero_bn(bottleneck.bn1);
        zero_bn(bottleneck.bn2);
        for (auto& d : decoder) {
            zero_conv(d.upconv);
            zero_conv(d.conv1);
            zero_conv(d.conv2);
            zero_bn(d.bnu);
            zero_bn(d.bn1);
            zero_bn(d.bn2);
        }
        zero_conv(head);
        z(proj_fc1.dw.data);
        z(proj_fc1.dbias);
        proj_fc1.touched = false;
        z(proj_fc2.dw.data);
        z(proj_fc2.dbias);
        proj_fc2.touched = false;
    }
};

// Paired walk over parameters and their gradient slots (canonical order
// identical to visit_trainable). fn(param_vec, grad_vec, touched).
template <typename T, typename Fn>
void visit_param_grad_pairs(ModelParams<T>& p, ModelGrads<T>& g, Fn&& fn) {
    auto pair_bn = [&](DsbnLayerState<T>& bn, DsbnGrads<T>& gb) {
        for (int d = 0; d < kNumDomains; ++d) {
            fn(bn.gamma[d], gb.dgamma[d], gb.touched[d]);
            fn(bn.beta[d], gb.dbeta[d], gb.touched[d]);
        }
    };
    auto pair_conv = [&](ConvWeight<T>& c, ConvGrads<T>& gc) {
        fn(c.w, gc.dw, gc.touched);
        if (!c.bias.empty()) fn(c.bias, gc.dbias, gc.touched);
    };
    for (size_t i = 0; i < p.encoder.size(); ++i) {
        pair_conv(p.encoder[i].conv1, g.encoder[i].conv1);
        pair_bn(p.encoder[i].bn1, g.encoder[i].bn1);
        pair_conv(p.encoder[i].conv2, g.encoder[i].conv2);
        pair_bn(p.encoder[i].bn2, g.encoder[i].bn2);
    }
    pair_conv(p.bottleneck.conv1, g.bottleneck.conv1);
    pair_bn(p.bottleneck.bn1, g.bottleneck.bn1);
    pair_conv(p.bottleneck.conv2, g.bottleneck.conv2);
    pair_bn(p.bottleneck.bn2, g.bottleneck.bn2);
    for (size_t i = 0; i < p.decoder.size(); ++i) {
        pair_conv(p.decoder[i].upconv, g.decoder[i].upconv);
        pair_bn(p.decoder[i].bnu, g.decoder[i].bnu);
        pair_conv(p.decoder[i].conv1, g.decoder[i].conv1);
        pair_bn(p.decoder[i].bn1, g.decoder[i].bn1);
        pair_conv(p.decoder[i].conv2, g.decoder[i].conv2);
        pair_bn(p.decoder[i].bn2, g.decoder[i].bn2);
    }
    pair_conv(p.head, g.head);
    fn(p.proj_fc1.w.data, g.proj_fc1.dw.data, g.proj_fc1.touched);
    fn(p.proj_fc1.bias, g.proj_fc1.dbias, g.proj_fc1.touched);
    fn(p.proj_fc2.w.data, g.proj_fc2.dw.data, g.proj_fc2.touched);
    fn(p.proj_fc2.bias, g.proj_fc2.dbias, g.proj_fc2.touched);
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

template <typename T>
ModelParams<T> build_model(const ArchDescriptor& arch, uint64_t seed) {
    arch.validate();
    Rng rng(derive_seed(seed, 0xB01D));
    auto he_fill = [&](std::vector<T>& w, int fan_in) {
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (T& v : w) v = static_cast<T>(rng.normal(0.0, sd));
    };
    auto make_conv = [&](int out, int in, int k, bool bias) {
        ConvWeight<T> c(out, in, k, bias);
        he_fill(c.w, in * k * k);
        return c;
    };
    auto make_bn = [&](int ch) {
        return DsbnLayerState<T>(ch, arch.bn_epsilon, arch.bn_momentum);
    };

    ModelParams<T> p;
    p.arch = arch;
    const int depth = arch.depth();
    int in_ch = arch.in_channels;
    p.encoder.resize(depth);
    for (int i = 0; i < depth; ++i) {
        const int w = arch.widths[i];
        p.encoder[i].conv1 = make_conv(w, in_ch, 3, false);
        p.encoder[i].bn1 = make_bn(w);
        p.encoder[i].conv2 = make_conv(w, w, 3, false);
        p.encoder[i].bn2 = make_bn(w);
        in_ch = w;
    }
    const int wb = arch.widths[depth];
    p.bottleneck.conv1 = make_conv(wb, in_ch, 3, false);
    p.bottleneck.bn1 = make_bn(wb);
    p.bottleneck.conv2 = make_conv(wb, wb, 3, false);
    p.bottleneck.bn2 = make_bn(wb);

    p.decoder.resize(depth);
    for (int i = depth - 1; i >= 0; --i) {
        const int w = arch.widths[i];
        const int w_below = arch.widths[i + 1];
        p.decoder[i].upconv = make_conv(w, w_below, 3, false);
        p.decoder[i].bnu = make_bn(w);
        p.decoder[i].conv1 = make_conv(w, 2 * w, 3, false);
        p.decoder[i].bn1 = make_bn(w);
        p.decoder[i].conv2 = make_conv(w, w, 3, false);
        p.decoder[i].bn2 = make_bn(w);
    }
    p.head = make_conv(arch.num_classes, arch.widths[0], 1, true);
    std::fill(p.head.bias.begin(), p.head.bias.end(), T(0));

    p.proj_fc1 = LinearWeight<T>(arch.proj_hidden, wb);
    he_fill(p.proj_fc1.w.data, wb);
    p.proj_fc2 = LinearWeight<T>(arch.proj_dim, arch.proj_hidden);
    he_fill(p.proj_fc2.w.data, arch.proj_hidden);
    return p;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

enum class ForwardMode {
    TrainUpdate,  // batch statistics, running statistics updated
    TrainFrozen,  // batch statistics, state untouched
    Eval          // running statistics, state untouched
};

template <typename T>
struct CbrCache {
    FeatureMap<T> conv_in;
    DsbnCache<T> bn;
    FeatureMap<T> relu_out;
};

namespace modeldetail {

template <typename T>
FeatureMap<T> cbr_forward(const FeatureMap<T>& x, const ConvWeight<T>& conv,
                          DsbnLayerState<T>& bn, Domain domain,
                          ForwardMode mode, CbrCache<T>* cache) {
    FeatureMap<T> z = conv_forward(x, conv);
    FeatureMap<T> n;
    if (mode == ForwardMode::Eval) {
        n = dsbn_forward_eval(z, domain, bn);
    } else {
        n = dsbn_forward_train(z, domain, bn, cache ? &cache->bn : nullptr,
                               mode == ForwardMode::TrainUpdate);
    }
    FeatureMap<T> out = relu_forward(n);
    if (cache) {
        cache->conv_in = x;
        cache->relu_out = out;
    }
    return out;
}

template <typename T>
FeatureMap<T> cbr_backward(const FeatureMap<T>& dy, const CbrCache<T>& cache,
                           const ConvWeight<T>& conv,
                           const DsbnLayerState<T>& bn, ConvGrads<T>& gconv,
                           DsbnGrads<T>& gbn) {
    FeatureMap<T> d = relu_backward(dy, cache.relu_out);
    const int dom = static_cast<int>(cache.bn.domain);
    std::vector<T> dgamma, dbeta;
    d = dsbn_backward(d, cache.bn, bn, dgamma, dbeta);
    for (int c = 0; c < bn.channels; ++c) {
        gbn.dgamma[dom][c] += dgamma[c];
        gbn.dbeta[dom][c] += dbeta[c];
    }
    gbn.touched[dom] = true;
    FeatureMap<T> dx = conv_backward(d, cache.conv_in, conv, gconv.dw, gconv.dbias);
    gconv.touched = true;
    return dx;
}

}  // namespace modeldetail

template <typename T>
struct SegTape {
    Domain domain = Domain::Source;
    std::vector<CbrCache<T>> enc1, enc2;          // per level
    std::vector<std::vector<uint8_t>> pool_argmax;
    std::vector<std::pair<int, int>> pool_in_dims;
    CbrCache<T> bott1, bott2;
    std::vector<CbrCache<T>> decu, dec1, dec2;    // per level
    std::vector<std::pair<int, int>> up_in_dims;  // input dims of upsample
    std::vector<int> skip_channels;
    FeatureMap<T> head_in;
    FeatureMap<T> probs;
};

template <typename T>
void check_spatial(const FeatureMap<T>& x, const ArchDescriptor& arch) {
    const int div = 1 << arch.depth();
    if (x.height % div != 0 || x.width % div != 0)
        throw ShapeError("forward: spatial size must be divisible by 2^depth");
    if (x.channels != arch.in_channels)
        throw ShapeError("forward: input channel mismatch");
}

// Per-pixel class probability maps. Routes every DSBN site through the
// given domain's statistics and affine parameters.
template <typename T>
FeatureMap<T> forward_segment(const FeatureMap<T>& x, Domain domain,
                              ModelParams<T>& params, ForwardMode mode,
                              SegTape<T>* tape = nullptr) {
    using modeldetail::cbr_forward;
    const ArchDescriptor& arch = params.arch;
    check_spatial(x, arch);
    const int depth = arch.depth();
    if (tape) {
        tape->domain = domain;
        tape->enc1.resize(depth);
        tape->enc2.resize(depth);
        tape->pool_argmax.resize(depth);
        tape->pool_in_dims.resize(depth);
        tape->decu.resize(depth);
        tape->dec1.resize(depth);
        tape->dec2.resize(depth);
        tape->up_in_dims.resize(depth);
        tape->skip_channels.resize(depth);
    }

    std::vector<FeatureMap<T>> skips(depth);
    FeatureMap<T> cur = x;
    for (int i = 0; i < depth; ++i) {
        cur = cbr_forward(cur, params.encoder[i].conv1, params.encoder[i].bn1,
                          domain, mode, tape ? &tape->enc1[i] : nullptr);
        cur = cbr_forward(cur, params.encoder[i].conv2, params.encoder[i].bn2,
                          domain, mode, tape ? &tape->enc2[i] : nullptr);
        skips[i] = cur;
        std::vector<uint8_t> local_argmax;
        std::vector<uint8_t>& argmax = tape ? tape->pool_argmax[i] : local_argmax;
        if (tape) tape->pool_in_dims[i] = {cur.height, cur.width};
        cur = maxpool2_forward(cur, argmax);
    }
    cur = cbr_forward(cur, params.bottleneck.conv1, params.bottleneck.bn1,
                      domain, mode, tape ? &tape->bott1 : nullptr);
    cur = cbr_forward(cur, params.bottleneck.conv2, params.bottleneck.bn2,
                      domain, mode, tape ? &tape->bott2 : nullptr);

    for (int i = depth - 1; i >= 0; --i) {
        if (tape) tape->up_in_dims[i] = {cur.height, cur.width};
        cur = upsample2_forward(cur);
        cur = cbr_forward(cur, params.decoder[i].upconv, params.decoder[i].bnu,
                          domain, mode, tape ? &tape->decu[i] : nullptr);
        if (tape) tape->skip_channels[i] = skips[i].channels;
        cur = concat_channels(skips[i], cur);
        cur = cbr_forward(cur, params.decoder[i].conv1, params.decoder[i].bn1,
                          domain, mode, tape ? &tape->dec1[i] : nullptr);
        cur = cbr_forward(cur, params.decoder[i].conv2, params.decoder[i].bn2,
                          domain, mode, tape ? &tape->dec2[i] : nullptr);
    }
    if (tape) tape->head_in = cur;
    FeatureMap<T> logits = conv_forward(cur, params.head);
    FeatureMap<T> probs = softmax_channels(logits);
    if (tape) tape->probs = probs;
    return probs;
}

template <typename T>
FeatureMap<T> forward_segment_eval(const FeatureMap<T>& x, Domain domain,
                                   const ModelParams<T>& params) {
    return forward_segment(x, domain, const_cast<ModelParams<T>&>(params),
                           ForwardMode::Eval);
}

// Backward from dL/dprobs; accumulates into grads, returns dL/dx.
template <typename T>
FeatureMap<T> backward_segment(const FeatureMap<T>& dprobs,
                               const SegTape<T>& tape, ModelParams<T>& params,
                               ModelGrads<T>& grads) {
    using modeldetail::cbr_backward;
    const int depth = params.arch.depth();

    FeatureMap<T> d = softmax_channels_backward(dprobs, tape.probs);
    d = conv_backward(d, tape.head_in, params.head, grads.head.dw,
                      grads.head.dbias);
    grads.head.touched = true;

    std::vector<FeatureMap<T>> skip_grads(depth);
    for (int i = 0; i <= depth - 1; ++i) {
        d = cbr_backward(d, tape.dec2[i], params.decoder[i].conv2,
                         params.decoder[i].bn2, grads.decoder[i].conv2,
                         grads.decoder[i].bn2);
        d = cbr_backward(d, tape.dec1[i], params.decoder[i].conv1,
                         params.decoder[i].bn1, grads.decoder[i].conv1,
                         grads.decoder[i].bn1);
        FeatureMap<T> d_skip(tape.skip_channels[i], d.batch, d.height, d.width);
        FeatureMap<T> d_up(d.channels - tape.skip_channels[i], d.batch,
                           d.height, d.width);
        split_channels(d, d_skip, d_up);
        skip_grads[i] = std::move(d_skip);
        d = cbr_backward(d_up, tape.decu[i], params.decoder[i].upconv,
                         params.decoder[i].bnu, grads.decoder[i].upconv,
                         grads.decoder[i].bnu);
        d = upsample2_backward(d, tape.up_in_dims[i].first,
                               tape.up_in_dims[i].second);
    }

    d = cbr_backward(d, tape.bott2, params.bottleneck.conv2,
                     params.bottleneck.bn2, grads.bottleneck.conv2,
                     grads.bottleneck.bn2);
    d = cbr_backward(d, tape.bott1, params.bottleneck.conv1,
                     params.bottleneck.bn1, grads.bottleneck.conv1,
                     grads.bottleneck.bn1);

    for (int i = depth - 1; i >= 0; --i) {
        d = maxpool2_backward(d, tape.pool_argmax[i], tape.pool_in_dims[i].first,
                              tape.pool_in_dims[i].second);
        for (size_t j = 0; j < d.size(); ++j) d.data[j] += skip_grads[i].data[j];
        d = cbr_backward(d, tape.enc2[i], params.encoder[i].conv2,
                         params.encoder[i].bn2, grads.encoder[i].conv2,
                         grads.encoder[i].bn2);
        d = cbr_backward(d, tape.enc1[i], params.encoder[i].conv1,
                         params.encoder[i].bn1, grads.encoder[i].conv1,
                         grads.encoder[i].bn1);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Projection path: encoder -> global average pool -> 2-layer MLP. Produces
// one embedding per batch element; the head itself uses no normalization.
// ---------------------------------------------------------------------------

template <typename T>
struct ProjTape {
    Domain domain = Domain::Source;
    std::vector<CbrCache<T>> enc1, enc2;
    std::vector<std::vector<uint8_t>> pool_argmax;
    std::vector<std::pair<int, int>> pool_in_dims;
    CbrCache<T> bott1, bott2;
    int feat_h = 0, feat_w = 0;
    Matrix<T> pooled;
    Matrix<T> fc1_out;  // post-ReLU
};

template <typename T>
Matrix<T> forward_project(const FeatureMap<T>& x, Domain domain,
                          ModelParams<T>& params, ForwardMode mode,
                          ProjTape<T>* tape = nullptr) {
    using modeldetail::cbr_forward;
    const ArchDescriptor& arch = params.arch;
    check_spatial(x, arch);
    const int depth = arch.depth();
    if (tape) {
        tape->domain = domain;
        tape->enc1.resize(depth);
        tape->enc2.resize(depth);
        tape->pool_argmax.resize(depth);
        tape->pool_in_dims.resize(depth);
    }
    FeatureMap<T> cur = x;
    for (int i = 0; i < depth; ++i) {
        cur = cbr_forward(cur, params.encoder[i].conv1, params.encoder[i].bn1,
                          domain, mode, tape ? &tape->enc1[i] : nullptr);
        cur = cbr_forward(cur, params.encoder[i].conv2, params.encoder[i].bn2,
                          domain, mode, tape ? &tape->enc2[i] : nullptr);
        std::vector<uint8_t> local_argmax;
        std::vector<uint8_t>& argmax = tape ? tape->pool_argmax[i] : local_argmax;
        if (tape) tape->pool_in_dims[i] = {cur.height, cur.width};
        cur = maxpool2_forward(cur, argmax);
    }
    cur = cbr_forward(cur, params.bottleneck.conv1, params.bottleneck.bn1,
                      domain, mode, tape ? &tape->bott1 : nullptr);
    cur = cbr_forward(cur, params.bottleneck.conv2, params.bottleneck.bn2,
                      domain, mode, tape ? &tape->bott2 : nullptr);

    Matrix<T> pooled = global_avg_pool(cur);
    Matrix<T> h = relu_forward(linear_forward(pooled, params.proj_fc1));
    Matrix<T> emb = linear_forward(h, params.proj_fc2);
    if (tape) {
        tape->feat_h = cur.height;
        tape->feat_w = cur.width;
        tape->pooled = pooled;
        tape->fc1_out = h;
    }
    return emb;
}

template <typename T>
FeatureMap<T> backward_project(const Matrix<T>& demb, const ProjTape<T>& tape,
                               ModelParams<T>& params, ModelGrads<T>& grads) {
    using modeldetail::cbr_backward;
    Matrix<T> dh = linear_backward(demb, tape.fc1_out, params.proj_fc2,
                                   grads.proj_fc2.dw, grads.proj_fc2.dbias);
    grads.proj_fc2.touched = true;
    dh = relu_backward(dh, tape.fc1_out);
    Matrix<T> dpooled = linear_backward(dh, tape.pooled, params.proj_fc1,
                                        grads.proj_fc1.dw, grads.proj_fc1.dbias);
    grads.proj_fc1.touched = true;

    FeatureMap<T> d = global_avg_pool_backward(dpooled, tape.feat_h, tape.feat_w);
    d = cbr_backward(d, tape.bott2, params.bottleneck.conv2,
                     params.bottleneck.bn2, grads.bottleneck.conv2,
                     grads.bottleneck.bn2);
    d = cbr_backward(d, tape.bott1, params.bottleneck.conv1,
                     params.bottleneck.bn1, grads.bottleneck.conv1,
                     grads.bottleneck.bn1);
    const int depth = params.arch.depth();
    for (int i = depth - 1; i >= 0; --i) {
        d = maxpool2_backward(d, tape.pool_argmax[i], tape.pool_in_dims[i].first,
                              tape.pool_in_dims[i].second);
        d = cbr_backward(d, tape.enc2[i], params.encoder[i].conv2,
                         params.encoder[i].bn2, grads.encoder[i].conv2,
                         grads.encoder[i].bn2);
        d = cbr_backward(d, tape.enc1[i], params.encoder[i].conv1,
                         params.encoder[i].bn1, grads.encoder[i].conv1,
                         grads.encoder[i].bn1);
    }
    return d;
}

// Batch of single-channel images -> network input tensor.
template <typename T>
FeatureMap<T> images_to_input(const std::vector<const GrayImage*>& images) {
    if (images.empty()) throw InputError("images_to_input: empty batch");
    const int h = images[0]->rows, w = images[0]->cols;
    FeatureMap<T> x(1, static_cast<int>(images.size()), h, w);
    for (size_t b = 0; b < images.size(); ++b) {
        if (images[b]->rows != h || images[b]->cols != w)
            throw ShapeError("images_to_input: ragged batch");
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                x.at(0, static_cast<int>(b), y, xx) =
                    static_cast<T>(images[b]->at(y, xx));
    }
    return x;
}

}  // namespace cadaseg
