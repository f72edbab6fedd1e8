#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cadaseg/losses.hpp"
#include "cadaseg/nn/model.hpp"
#include "cadaseg/nn/optim.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cadaseg;

namespace {

ArchDescriptor tiny_arch() {
    ArchDescriptor a;
    a.widths = {4, 8};
    a.num_classes = 2;
    a.proj_hidden = 8;
    a.proj_dim = 6;
    return a;
}

template <typename T>
std::vector<T> flatten_params(ModelParams<T>& p) {
    std::vector<T> out;
    visit_trainable(p, [&](const std::string&, std::vector<T>& v) {
        out.insert(out.end(), v.begin(), v.end());
    });
    return out;
}

}  // namespace

TEST_CASE("build_model is deterministic and counts are descriptor-pure") {
    ArchDescriptor a;
    a.widths = {16, 32, 64, 128, 256};
    auto m1 = build_model<float>(a, 7);
    auto m2 = build_model<float>(a, 7);
    CHECK(flatten_params(m1) == flatten_params(m2));

    auto m3 = build_model<float>(a, 8);
    CHECK(m1.trainable_count() == m3.trainable_count());
    CHECK(flatten_params(m1) != flatten_params(m3));

    auto tiny = build_model<double>(tiny_arch(), 1);
    CHECK(tiny.arch.depth() == 1);
    CHECK(tiny.trainable_count() > 0);
}

TEST_CASE("invalid descriptors are rejected") {
    ArchDescriptor a;
    a.widths = {16};
    CHECK_THROWS_AS(build_model<float>(a, 0), ConfigError);
    a.widths = {32, 16};
    CHECK_THROWS_AS(build_model<float>(a, 0), ConfigError);
    a.widths = {16, 32};
    a.num_classes = 1;
    CHECK_THROWS_AS(build_model<float>(a, 0), ConfigError);
}

TEST_CASE("segmentation output is a per-pixel distribution") {
    auto params = build_model<double>(tiny_arch(), 3);
    Rng rng(4);
    auto x = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    auto probs = forward_segment(x, Domain::Source, params, ForwardMode::TrainUpdate);
    CHECK(probs.channels == 2);
    CHECK(probs.height == 8);
    const size_t plane = probs.plane();
    for (size_t i = 0; i < plane; ++i) {
        double sum = 0.0;
        for (int c = 0; c < probs.channels; ++c) sum += probs.data[c * plane + i];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("eval-mode forwards are bit-deterministic") {
    auto params = build_model<double>(tiny_arch(), 5);
    Rng rng(6);
    auto x = testutil::random_feature_map<double>(rng, 1, 1, 8, 8, 0.0, 1.0);
    auto a = forward_segment_eval(x, Domain::Target, params);
    auto b = forward_segment_eval(x, Domain::Target, params);
    CHECK(a.data == b.data);
}

TEST_CASE("all-zero weights produce the uniform distribution") {
    ArchDescriptor a = tiny_arch();
    a.num_classes = 3;
    auto params = build_model<double>(a, 2);
    visit_trainable(params, [](const std::string& name, std::vector<double>& v) {
        if (name.find("gamma") == std::string::npos)
            std::fill(v.begin(), v.end(), 0.0);
    });
    Rng rng(8);
    auto x = testutil::random_feature_map<double>(rng, 1, 1, 8, 8, 0.0, 1.0);
    auto probs = forward_segment_eval(x, Domain::Source, params);
    for (double v : probs.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("spatial size must divide by 2^depth") {
    ArchDescriptor a;
    a.widths = {4, 8, 16};  // depth 2
    auto params = build_model<double>(a, 1);
    FeatureMap<double> x(1, 2, 6, 6, 0.5);
    CHECK_THROWS_AS(
        forward_segment(x, Domain::Source, params, ForwardMode::TrainUpdate),
        ShapeError);
}

TEST_CASE("projection embeddings have the configured length for any input size") {
    ArchDescriptor a = tiny_arch();
    a.proj_dim = 6;
    auto params = build_model<double>(a, 9);
    Rng rng(10);
    for (int size : {8, 16}) {
        auto x = testutil::random_feature_map<double>(rng, 1, 2, size, size, 0.0, 1.0);
        auto emb = forward_project(x, Domain::Source, params, ForwardMode::TrainFrozen);
        CHECK(emb.rows == 2);
        CHECK(emb.cols == 6);
    }
}

TEST_CASE("symmetric DSBN states give bit-identical embeddings across domains") {
    auto params = build_model<double>(tiny_arch(), 11);
    Rng rng(12);
    auto x = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    auto gs = forward_project(x, Domain::Source, params, ForwardMode::TrainFrozen);
    auto gt = forward_project(x, Domain::Target, params, ForwardMode::TrainFrozen);
    CHECK(gs.data == gt.data);
}

TEST_CASE("routing differs only through DSBN state") {
    auto params = build_model<double>(tiny_arch(), 13);
    Rng rng(14);
    // diverge the target states
    visit_dsbn(params, [&](DsbnLayerState<double>& bn) {
        const int t = static_cast<int>(Domain::Target);
        for (int c = 0; c < bn.channels; ++c) {
            bn.gamma[t][c] += rng.uniform(-0.3, 0.3);
            bn.beta[t][c] += rng.uniform(-0.3, 0.3);
        }
    });
    auto x = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    auto ps = forward_segment(x, Domain::Source, params, ForwardMode::TrainFrozen);
    auto pt = forward_segment(x, Domain::Target, params, ForwardMode::TrainFrozen);
    CHECK(ps.data != pt.data);

    // force the states equal again: outputs must be bit-identical
    params.copy_domain_states(Domain::Source, Domain::Target);
    auto pt2 = forward_segment(x, Domain::Target, params, ForwardMode::TrainFrozen);
    CHECK(ps.data == pt2.data);
}

TEST_CASE("a source-domain step leaves target affines bit-identical") {
    auto params = build_model<double>(tiny_arch(), 15);
    std::vector<double> target_affines_before, source_affines_before;
    visit_trainable(params, [&](const std::string& name, std::vector<double>& v) {
        if (name.find(".T.") != std::string::npos)
            target_affines_before.insert(target_affines_before.end(), v.begin(), v.end());
        if (name.find(".S.") != std::string::npos)
            source_affines_before.insert(source_affines_before.end(), v.begin(), v.end());
    });

    Rng rng(16);
    auto x = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    MaskImage y0 = testutil::random_mask(rng, 8, 8);
    MaskImage y1 = testutil::random_mask(rng, 8, 8);
    std::vector<const MaskImage*> masks = {&y0, &y1};

    ModelGrads<double> grads(params);
    SegTape<double> tape;
    auto probs = forward_segment(x, Domain::Source, params, ForwardMode::TrainUpdate, &tape);
    FeatureMap<double> dprobs(probs.channels, probs.batch, probs.height, probs.width);
    seg_loss(probs, masks, &dprobs);
    backward_segment(dprobs, tape, params, grads);
    Adam<double> opt;
    opt.step(params, grads, 1e-3);

    std::vector<double> target_affines_after, source_affines_after;
    visit_trainable(params, [&](const std::string& name, std::vector<double>& v) {
        if (name.find(".T.") != std::string::npos)
            target_affines_after.insert(target_affines_after.end(), v.begin(), v.end());
        if (name.find(".S.") != std::string::npos)
            source_affines_after.insert(source_affines_after.end(), v.begin(), v.end());
    });
    CHECK(target_affines_before == target_affines_after);
    CHECK(source_affines_before != source_affines_after);

    // shared kernels moved too
    bool conv_changed = false;
    auto fresh = build_model<double>(tiny_arch(), 15);
    visit_trainable(params, [&](const std::string& name, std::vector<double>& v) {
        if (name.find("conv1.weight") != std::string::npos && !conv_changed) {
            std::vector<double>* orig = nullptr;
            visit_trainable(fresh, [&](const std::string& n2, std::vector<double>& v2) {
                if (n2 == name) orig = &v2;
            });
            if (orig && *orig != v) conv_changed = true;
        }
    });
    CHECK(conv_changed);
}

TEST_CASE("segmentation backward matches finite differences on the depth-1 model") {
    for (uint64_t seed = 0; seed < 3; ++seed) {
        auto params = build_model<double>(tiny_arch(), 100 + seed);
        Rng rng(200 + seed);
        auto x = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
        MaskImage y0 = testutil::random_mask(rng, 8, 8);
        MaskImage y1 = testutil::random_mask(rng, 8, 8);
        std::vector<const MaskImage*> masks = {&y0, &y1};

        // analytic
        ModelGrads<double> grads(params);
        SegTape<double> tape;
        auto probs =
            forward_segment(x, Domain::Source, params, ForwardMode::TrainFrozen, &tape);
        FeatureMap<double> dprobs(probs.channels, probs.batch, probs.height, probs.width);
        seg_loss(probs, masks, &dprobs);
        backward_segment(dprobs, tape, params, grads);

        // collect (param, grad) slot pairs in canonical order
        std::vector<std::vector<double>*> pslots;
        std::vector<std::vector<double>*> gslots;
        visit_param_grad_pairs(params, grads,
                               [&](std::vector<double>& p, std::vector<double>& g, bool&) {
                                   pslots.push_back(&p);
                                   gslots.push_back(&g);
                               });

        auto loss_fn = [&]() {
            auto pr = forward_segment(x, Domain::Source, params, ForwardMode::TrainFrozen);
            return seg_loss(pr, masks);
        };

        // spot-check a sample of coordinates across all tensors
        int checked = 0;
        double worst = 0.0;
        for (size_t s = 0; s < pslots.size(); ++s) {
            std::vector<double>& pv = *pslots[s];
            if (pv.empty()) continue;
            for (int rep = 0; rep < 2; ++rep) {
                const size_t i = rng.next_u64() % pv.size();
                const double orig = pv[i];
                const double h = 1e-5;
                pv[i] = orig + h;
                const double fp = loss_fn();
                pv[i] = orig - h;
                const double fm = loss_fn();
                pv[i] = orig;
                const double fd = (fp - fm) / (2.0 * h);
                const double an = (*gslots[s])[i];
                const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
                if (std::max(std::abs(fd), std::abs(an)) > 1e-7)
                    worst = std::max(worst, std::abs(fd - an) / denom);
                ++checked;
            }
        }
        CHECK(checked > 40);
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("projection backward matches finite differences through the encoder") {
    for (uint64_t seed = 0; seed < 2; ++seed) {
        auto params = build_model<double>(tiny_arch(), 300 + seed);
        Rng rng(400 + seed);
        auto xs = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
        auto xt = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);

        auto loss_fn = [&]() {
            auto gsi = forward_project(xs, Domain::Source, params, ForwardMode::TrainFrozen);
            auto gti = forward_project(xs, Domain::Target, params, ForwardMode::TrainFrozen);
            auto gsj = forward_project(xt, Domain::Source, params, ForwardMode::TrainFrozen);
            auto gtj = forward_project(xt, Domain::Target, params, ForwardMode::TrainFrozen);
            return contrastive_loss(gsi, gti, gsj, gtj, 0.1);
        };

        // analytic
        ModelGrads<double> grads(params);
        ProjTape<double> tsi, tti, tsj, ttj;
        auto gsi = forward_project(xs, Domain::Source, params, ForwardMode::TrainFrozen, &tsi);
        auto gti = forward_project(xs, Domain::Target, params, ForwardMode::TrainFrozen, &tti);
        auto gsj = forward_project(xt, Domain::Source, params, ForwardMode::TrainFrozen, &tsj);
        auto gtj = forward_project(xt, Domain::Target, params, ForwardMode::TrainFrozen, &ttj);
        Matrix<double> dsi(gsi.rows, gsi.cols), dti(gsi.rows, gsi.cols),
            dsj(gsi.rows, gsi.cols), dtj(gsi.rows, gsi.cols);
        contrastive_loss(gsi, gti, gsj, gtj, 0.1, &dsi, &dti, &dsj, &dtj);
        backward_project(dsi, tsi, params, grads);
        backward_project(dti, tti, params, grads);
        backward_project(dsj, tsj, params, grads);
        backward_project(dtj, ttj, params, grads);

        std::vector<std::vector<double>*> pslots, gslots;
        visit_param_grad_pairs(params, grads,
                               [&](std::vector<double>& p, std::vector<double>& g, bool&) {
                                   pslots.push_back(&p);
                                   gslots.push_back(&g);
                               });
        double worst = 0.0;
        int checked = 0;
        for (size_t s = 0; s < pslots.size(); ++s) {
            std::vector<double>& pv = *pslots[s];
            if (pv.empty()) continue;
            const size_t i = rng.next_u64() % pv.size();
            const double orig = pv[i];
            const double h = 1e-5;
            pv[i] = orig + h;
            const double fp = loss_fn();
            pv[i] = orig - h;
            const double fm = loss_fn();
            pv[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = (*gslots[s])[i];
            if (std::max(std::abs(fd), std::abs(an)) > 1e-7) {
                worst = std::max(worst,
                                 std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
                ++checked;
            }
        }
        CHECK(checked > 10);
        CHECK(worst < 1e-3);
    }
}
