// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria 7 and 8 train at desk scale and dominate the
// runtime; everything else completes in seconds.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "cadaseg/checkpoint.hpp"
#include "cadaseg/harness.hpp"
#include "cadaseg/mean_teacher.hpp"
#include "cadaseg/trainer.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cadaseg;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool ok,
            const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion,
                what.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: contrastive closed forms
// ---------------------------------------------------------------------------

void criterion1() {
    bool ok = true;
    std::string detail;

    Matrix<double> v(1, 3);
    v.data = {0.4, -0.2, 0.9};
    for (double tau : {0.05, 0.1, 1.0}) {
        const double loss = contrastive_loss(v, v, v, v, tau);
        if (std::abs(loss - std::log(3.0)) > 1e-6) {
            ok = false;
            detail += "ln3 failed at tau=" + fmt(tau) + " (" + fmt(loss) + ") ";
        }
    }

    Matrix<double> anchor(1, 2), positive(1, 2), negative(1, 2);
    anchor.data = {1.0, 0.0};
    positive.data = {1.0, 0.0};
    negative.data = {0.0, 1.0};
    const double loss = contrastive_s2t(anchor, positive, negative, negative, 0.1);
    const double expected = std::log1p(2.0 * std::exp(-10.0));
    if (std::abs(loss - expected) > 1e-9) {
        ok = false;
        detail += "separated-positive value " + fmt(loss) + " vs " + fmt(expected);
    }
    report(1, "contrastive loss closed forms (ln 3, ln(1+2e^-10))", ok, detail);
}

// ---------------------------------------------------------------------------
// criterion 2: gradient checks vs central finite differences
// ---------------------------------------------------------------------------

double dsbn_gradcheck_worst(uint64_t seed) {
    Rng rng(seed);
    const int C = 3, B = 2, H = 4, W = 4;
    auto x0 = testutil::random_feature_map<double>(rng, C, B, H, W, -1.5, 1.5);
    std::vector<double> gamma0(C), beta0(C), probe(x0.size());
    for (int c = 0; c < C; ++c) {
        gamma0[c] = rng.uniform(0.5, 2.0);
        beta0[c] = rng.uniform(-1.0, 1.0);
    }
    for (auto& w : probe) w = rng.uniform(-1.0, 1.0);

    auto loss_of = [&](const std::vector<double>& x, const std::vector<double>& g,
                       const std::vector<double>& b) {
        DsbnLayerState<double> st(C);
        st.gamma[0] = g;
        st.beta[0] = b;
        FeatureMap<double> f = x0;
        f.data = x;
        DsbnCache<double> cache;
        auto out = dsbn_forward_train(f, Domain::Source, st, &cache, false);
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) acc += probe[i] * out.data[i];
        return acc;
    };

    DsbnLayerState<double> st(C);
    st.gamma[0] = gamma0;
    st.beta[0] = beta0;
    DsbnCache<double> cache;
    auto out = dsbn_forward_train(x0, Domain::Source, st, &cache, false);
    FeatureMap<double> dy = out;
    dy.data.assign(probe.begin(), probe.end());
    std::vector<double> dgamma, dbeta;
    auto dx = dsbn_backward(dy, cache, st, dgamma, dbeta);

    auto fd_x = oracle::fd_gradient(
        [&](const std::vector<double>& x) { return loss_of(x, gamma0, beta0); },
        x0.data);
    auto fd_g = oracle::fd_gradient(
        [&](const std::vector<double>& g) { return loss_of(x0.data, g, beta0); },
        gamma0);
    auto fd_b = oracle::fd_gradient(
        [&](const std::vector<double>& b) { return loss_of(x0.data, gamma0, b); },
        beta0);
    return std::max({oracle::max_rel_error(dx.data, fd_x, 1e-6),
                     oracle::max_rel_error(dgamma, fd_g, 1e-6),
                     oracle::max_rel_error(dbeta, fd_b, 1e-6)});
}

double seg_loss_gradcheck_worst(uint64_t seed) {
    Rng rng(seed);
    auto p0 = testutil::random_feature_map<double>(rng, 3, 2, 4, 4, 0.05, 1.0);
    MaskImage y0(4, 4), y1(4, 4);
    for (auto& v : y0.data) v = static_cast<uint8_t>(rng.uniform_int(0, 2));
    for (auto& v : y1.data) v = static_cast<uint8_t>(rng.uniform_int(0, 2));
    std::vector<const MaskImage*> masks = {&y0, &y1};
    FeatureMap<double> grad(3, 2, 4, 4);
    seg_loss(p0, masks, &grad);
    auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& x) {
            FeatureMap<double> p = p0;
            p.data = x;
            return seg_loss(p, masks);
        },
        p0.data, 1e-6);
    return oracle::max_rel_error(grad.data, fd, 1e-6);
}

double consistency_gradcheck_worst(uint64_t seed) {
    Rng rng(seed);
    auto ps = testutil::random_feature_map<double>(rng, 2, 2, 3, 3, 0.0, 1.0);
    auto pt = testutil::random_feature_map<double>(rng, 2, 2, 3, 3, 0.0, 1.0);
    FeatureMap<double> grad(2, 2, 3, 3);
    consistency_loss(ps, pt, &grad);
    auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& x) {
            FeatureMap<double> p = ps;
            p.data = x;
            return consistency_loss(p, pt);
        },
        ps.data);
    return oracle::max_rel_error(grad.data, fd, 1e-6);
}

double contrastive_gradcheck_worst(uint64_t seed) {
    Rng rng(seed);
    const int P = 3, D = 4;
    auto si = testutil::random_matrix<double>(rng, P, D, -1.0, 1.0);
    auto ti = testutil::random_matrix<double>(rng, P, D, -1.0, 1.0);
    auto sj = testutil::random_matrix<double>(rng, P, D, -1.0, 1.0);
    auto tj = testutil::random_matrix<double>(rng, P, D, -1.0, 1.0);
    Matrix<double> dsi(P, D), dti(P, D), dsj(P, D), dtj(P, D);
    contrastive_loss(si, ti, sj, tj, 0.1, &dsi, &dti, &dsj, &dtj);

    Matrix<double>* targets[4] = {&si, &ti, &sj, &tj};
    Matrix<double>* grads[4] = {&dsi, &dti, &dsj, &dtj};
    double worst = 0.0;
    for (int t = 0; t < 4; ++t) {
        auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& x) {
                std::vector<double> saved = targets[t]->data;
                targets[t]->data = x;
                const double l = contrastive_loss(si, ti, sj, tj, 0.1);
                targets[t]->data = saved;
                return l;
            },
            targets[t]->data, 1e-6);
        worst = std::max(worst, oracle::max_rel_error(grads[t]->data, fd, 1e-6));
    }
    return worst;
}

// Depth-1 end-to-end: the full training objective as a pure function of the
// parameters, gradients vs FD on sampled coordinates.
double end_to_end_gradcheck_worst(uint64_t seed) {
    ArchDescriptor arch;
    arch.widths = {4, 8};
    arch.num_classes = 2;
    arch.proj_hidden = 8;
    arch.proj_dim = 6;
    auto params = build_model<double>(arch, seed);

    Rng rng(derive_seed(seed, 77));
    auto xs = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    auto xt = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    auto xu_student = testutil::random_feature_map<double>(rng, 1, 2, 8, 8, 0.0, 1.0);
    auto xu_teacher = xu_student;
    for (auto& v : xu_teacher.data)
        v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);
    MaskImage ys0 = testutil::random_mask(rng, 8, 8), ys1 = testutil::random_mask(rng, 8, 8);
    MaskImage yt0 = testutil::random_mask(rng, 8, 8), yt1 = testutil::random_mask(rng, 8, 8);
    std::vector<const MaskImage*> src_masks = {&ys0, &ys1};
    std::vector<const MaskImage*> tgt_masks = {&yt0, &yt1};
    auto teacher = params;  // frozen distinct-enough teacher
    const double lambda1 = 1.0, lambda2 = 0.1, ramp = 0.05, tau = 0.1;

    auto loss_fn = [&]() {
        auto ps = forward_segment(xs, Domain::Source, params, ForwardMode::TrainFrozen);
        auto pt = forward_segment(xt, Domain::Target, params, ForwardMode::TrainFrozen);
        double l = seg_loss(ps, src_masks) + seg_loss(pt, tgt_masks);
        auto p_student =
            forward_segment(xu_student, Domain::Target, params, ForwardMode::TrainFrozen);
        auto p_teacher =
            forward_segment(xu_teacher, Domain::Target, teacher, ForwardMode::TrainFrozen);
        l += lambda1 * ramp * consistency_loss(p_student, p_teacher);
        auto gsi = forward_project(xs, Domain::Source, params, ForwardMode::TrainFrozen);
        auto gti = forward_project(xs, Domain::Target, params, ForwardMode::TrainFrozen);
        auto gsj = forward_project(xt, Domain::Source, params, ForwardMode::TrainFrozen);
        auto gtj = forward_project(xt, Domain::Target, params, ForwardMode::TrainFrozen);
        l += lambda2 * contrastive_loss(gsi, gti, gsj, gtj, tau);
        return l;
    };

    // analytic gradients
    ModelGrads<double> grads(params);
    {
        SegTape<double> tape_s, tape_t, tape_u;
        auto ps = forward_segment(xs, Domain::Source, params, ForwardMode::TrainFrozen, &tape_s);
        FeatureMap<double> dps(ps.channels, ps.batch, ps.height, ps.width);
        seg_loss(ps, src_masks, &dps);
        backward_segment(dps, tape_s, params, grads);

        auto pt = forward_segment(xt, Domain::Target, params, ForwardMode::TrainFrozen, &tape_t);
        FeatureMap<double> dpt(pt.channels, pt.batch, pt.height, pt.width);
        seg_loss(pt, tgt_masks, &dpt);
        backward_segment(dpt, tape_t, params, grads);

        auto p_student = forward_segment(xu_student, Domain::Target, params,
                                         ForwardMode::TrainFrozen, &tape_u);
        auto p_teacher =
            forward_segment(xu_teacher, Domain::Target, teacher, ForwardMode::TrainFrozen);
        FeatureMap<double> dpu(p_student.channels, p_student.batch,
                               p_student.height, p_student.width);
        consistency_loss(p_student, p_teacher, &dpu, lambda1 * ramp);
        backward_segment(dpu, tape_u, params, grads);

        ProjTape<double> tsi, tti, tsj, ttj;
        auto gsi = forward_project(xs, Domain::Source, params, ForwardMode::TrainFrozen, &tsi);
        auto gti = forward_project(xs, Domain::Target, params, ForwardMode::TrainFrozen, &tti);
        auto gsj = forward_project(xt, Domain::Source, params, ForwardMode::TrainFrozen, &tsj);
        auto gtj = forward_project(xt, Domain::Target, params, ForwardMode::TrainFrozen, &ttj);
        Matrix<double> dsi(gsi.rows, gsi.cols), dti(gsi.rows, gsi.cols),
            dsj(gsi.rows, gsi.cols), dtj(gsi.rows, gsi.cols);
        contrastive_loss(gsi, gti, gsj, gtj, tau, &dsi, &dti, &dsj, &dtj, lambda2);
        backward_project(dsi, tsi, params, grads);
        backward_project(dti, tti, params, grads);
        backward_project(dsj, tsj, params, grads);
        backward_project(dtj, ttj, params, grads);
    }

    std::vector<std::vector<double>*> pslots, gslots;
    visit_param_grad_pairs(params, grads,
                           [&](std::vector<double>& p, std::vector<double>& g, bool&) {
                               pslots.push_back(&p);
                               gslots.push_back(&g);
                           });
    double worst = 0.0;
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
        if (std::max(std::abs(fd), std::abs(an)) < 1e-6) continue;
        worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
    }
    return worst;
}

void criterion2() {
    double worst_dsbn = 0.0, worst_seg = 0.0, worst_cons = 0.0, worst_ct = 0.0,
           worst_e2e = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        worst_dsbn = std::max(worst_dsbn, dsbn_gradcheck_worst(1000 + seed));
        worst_seg = std::max(worst_seg, seg_loss_gradcheck_worst(2000 + seed));
        worst_cons = std::max(worst_cons, consistency_gradcheck_worst(3000 + seed));
        worst_ct = std::max(worst_ct, contrastive_gradcheck_worst(4000 + seed));
        worst_e2e = std::max(worst_e2e, end_to_end_gradcheck_worst(5000 + seed));
    }
    const bool ok = worst_dsbn < 1e-3 && worst_seg < 1e-3 && worst_cons < 1e-3 &&
                    worst_ct < 1e-3 && worst_e2e < 1e-3;
    report(2, "gradients match central finite differences (20 seeds each)", ok,
           "worst rel err: dsbn " + fmt(worst_dsbn) + ", seg " + fmt(worst_seg) +
               ", consistency " + fmt(worst_cons) + ", contrastive " + fmt(worst_ct) +
               ", end-to-end " + fmt(worst_e2e));
}

// ---------------------------------------------------------------------------
// criterion 3: DSBN domain isolation
// ---------------------------------------------------------------------------

void criterion3() {
    Rng rng(17);
    std::vector<std::pair<Domain, FeatureMap<double>>> stream;
    for (int i = 0; i < 200; ++i) {
        Domain d = (rng.uniform() < 0.5) ? Domain::Source : Domain::Target;
        stream.emplace_back(
            d, testutil::random_feature_map<double>(rng, 3, 3, 6, 6, -2.0, 2.0));
    }
    DsbnLayerState<double> interleaved(3);
    for (auto& [d, f] : stream) dsbn_forward_train(f, d, interleaved);
    DsbnLayerState<double> replay(3);
    for (auto& [d, f] : stream)
        if (d == Domain::Source) dsbn_forward_train(f, d, replay);

    const int s = static_cast<int>(Domain::Source);
    bool ok = interleaved.running_mean[s] == replay.running_mean[s] &&
              interleaved.running_var[s] == replay.running_var[s];

    // target updates leave source eval outputs bit-identical
    DsbnLayerState<double> state(3);
    auto probe = testutil::random_feature_map<double>(rng, 3, 2, 6, 6);
    auto before = dsbn_forward_eval(probe, Domain::Source, state);
    for (int i = 0; i < 60; ++i)
        dsbn_forward_train(
            testutil::random_feature_map<double>(rng, 3, 4, 6, 6, -3.0, 3.0),
            Domain::Target, state);
    auto after = dsbn_forward_eval(probe, Domain::Source, state);
    ok = ok && (before.data == after.data);
    report(3, "DSBN domain isolation bit-exact under interleaving", ok);
}

// ---------------------------------------------------------------------------
// criterion 4: EMA contraction
// ---------------------------------------------------------------------------

void criterion4() {
    ArchDescriptor arch;
    arch.widths = {4, 8};
    arch.proj_hidden = 8;
    arch.proj_dim = 4;
    auto student = build_model<double>(arch, 3);
    auto zero_all = [](ModelParams<double>& p) {
        visit_trainable(p, [](const std::string&, std::vector<double>& v) {
            std::fill(v.begin(), v.end(), 0.0);
        });
        visit_stats(p, [](const std::string&, std::vector<double>& v) {
            std::fill(v.begin(), v.end(), 0.0);
        });
    };
    auto fill_all = [](ModelParams<double>& p, double x) {
        visit_trainable(p, [&](const std::string&, std::vector<double>& v) {
            std::fill(v.begin(), v.end(), x);
        });
        visit_stats(p, [&](const std::string&, std::vector<double>& v) {
            std::fill(v.begin(), v.end(), x);
        });
    };
    zero_all(student);
    auto teacher = make_teacher(student, 0.99);
    fill_all(teacher.params, 1.0);

    bool ok = true;
    double expected = 1.0;
    for (int k = 1; k <= 100 && ok; ++k) {
        ema_update(teacher, student, 0.99);
        expected *= 0.99;
        visit_trainable(teacher.params, [&](const std::string&, std::vector<double>& v) {
            for (double x : v)
                if (x != expected) ok = false;
        });
    }

    auto other = build_model<double>(arch, 9);
    auto teacher2 = make_teacher(other, 0.0);
    ema_update(teacher2, student, 0.0);
    std::vector<double> a, b;
    visit_trainable(teacher2.params, [&](const std::string&, std::vector<double>& v) {
        a.insert(a.end(), v.begin(), v.end());
    });
    visit_trainable(student, [&](const std::string&, std::vector<double>& v) {
        b.insert(b.end(), v.begin(), v.end());
    });
    ok = ok && (a == b);
    report(4, "EMA contracts exactly as 0.99^k; decay 0 copies the student", ok);
}

// ---------------------------------------------------------------------------
// criterion 5: metric oracle equivalence
// ---------------------------------------------------------------------------

void criterion5() {
    Rng rng(7);
    bool ok = true;
    std::string detail;
    int assd_checked = 0;
    for (int trial = 0; trial < 50 && ok; ++trial) {
        MaskImage a = testutil::random_mask(rng, 16, 16, rng.uniform(0.2, 0.6));
        MaskImage b = testutil::random_mask(rng, 16, 16, rng.uniform(0.2, 0.6));
        auto rel = [](double x, double y) {
            return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-12});
        };
        if (rel(dice_pct(a, b), oracle::brute_dice_pct(a, b)) > 1e-9) ok = false;
        auto [r, p] = recall_precision_pct(a, b);
        auto [orr, orp] = oracle::brute_recall_precision_pct(a, b);
        if (rel(r, orr) > 1e-9 || rel(p, orp) > 1e-9) ok = false;
        if (!oracle::mask_to_set(a).empty() && !oracle::mask_to_set(b).empty()) {
            const double mine = assd(a, b, 1.0);
            const double brute = oracle::brute_assd(a, b, 1.0);
            if (rel(mine, brute) > 1e-9) ok = false;
            if (assd(a, b, 1.0) != assd(b, a, 1.0)) {
                ok = false;
                detail = "assd asymmetric";
            }
            ++assd_checked;
        }
    }
    ok = ok && assd_checked >= 30;
    report(5, "Dice/Recall/Precision/ASSD match brute-force oracles (50 pairs)",
           ok, detail);
}

// ---------------------------------------------------------------------------
// criterion 6: schedules
// ---------------------------------------------------------------------------

void criterion6() {
    const long K = 20000;
    bool ok = std::abs(consistency_weight(0, K) - 0.1 * std::exp(-5.0)) < 1e-12;
    ok = ok && std::abs(consistency_weight(K, K) - 0.1) < 1e-12;
    double prev = -1.0;
    for (int i = 0; i <= 1000; ++i) {
        const long k = static_cast<long>(std::llround(i * (static_cast<double>(K) / 1000.0)));
        const double w = consistency_weight(k, K);
        if (w < prev) ok = false;
        prev = w;
    }
    ok = ok && std::abs(lr_schedule(0, 5e-4, 0.95, 1000) - 5e-4) < 1e-18;
    report(6, "consistency ramp endpoints/monotonicity, lr schedule", ok);
}

// ---------------------------------------------------------------------------
// desk-scale configuration shared by criteria 7-9
// ---------------------------------------------------------------------------

ExperimentConfig desk_config(uint64_t seed) {
    ExperimentConfig cfg;
    cfg.method = Method::CsCada;
    cfg.max_iterations = 500;   // 500-iteration desk runs
    cfg.validate_every = 50;
    cfg.layout = BatchLayout{4, 2, 2};
    cfg.arch.widths = {4, 8, 16, 32};  // depth-3
    cfg.arch.num_classes = 3;
    cfg.arch.proj_hidden = 64;
    cfg.arch.proj_dim = 32;
    cfg.seed = seed;
    return cfg;
}

Dataset desk_dataset(uint64_t seed) {
    DataSpec spec;  // library defaults: circular 64x64 benchmark
    spec.seed = seed;
    return load_dataset(spec);
}

// ---------------------------------------------------------------------------
// criterion 7: desk-scale ordering surrogate (3 seeds)
// ---------------------------------------------------------------------------

void criterion7() {
    const std::vector<uint64_t> seeds = {1, 2, 3};
    std::map<std::string, double> mean_dice;
    for (Method m : ablation_methods()) mean_dice[method_name(m)] = 0.0;

    for (uint64_t seed : seeds) {
        Dataset ds = desk_dataset(seed);
        auto rows = run_ablation<float>(desk_config(seed), ds);
        std::printf("  seed %llu:", static_cast<unsigned long long>(seed));
        for (const auto& row : rows) {
            mean_dice[row.method] += row.average.dice_mean / seeds.size();
            std::printf(" %s %.2f", row.method.c_str(), row.average.dice_mean);
        }
        std::printf("\n");
        std::fflush(stdout);
    }

    const double bt = mean_dice["baseline_target"];
    const double semt = mean_dice["semt_only"];
    const double dsbn = mean_dice["dsbn_only"];
    const double ss = mean_dice["ss_cada"];
    const double cs = mean_dice["cs_cada"];

    const bool gap_ok = cs > bt + 5.0;
    const bool chain_ok = (cs >= ss - 1.0) && (ss >= std::max(semt, dsbn) - 1.0);
    std::ostringstream detail;
    detail << "mean dice over 3 seeds: baseline " << fmt(bt) << ", se-mt "
           << fmt(semt) << ", dsbn " << fmt(dsbn) << ", ss-cada " << fmt(ss)
           << ", cs-cada " << fmt(cs);
    report(7, "desk-scale ordering surrogate (cs>baseline+5; cs>=ss>=max(semt,dsbn), tol 1)",
           gap_ok && chain_ok, detail.str());
}

// ---------------------------------------------------------------------------
// criterion 8: ratio-sweep monotonicity surrogate
// ---------------------------------------------------------------------------

void criterion8() {
    Dataset ds = desk_dataset(4);
    ExperimentConfig cfg = desk_config(4);
    auto rows = run_ratio_sweep<float>(cfg, ds, {0.05, 0.5}, {Method::CsCada});

    double dice_low = -1.0, dice_high = -1.0, upper = -1.0;
    for (const auto& r : rows) {
        std::printf("  %s @ %.2f -> dice %.2f (labeled %d)\n", r.method.c_str(),
                    r.ratio, r.dice_mean, r.n_labeled);
        if (r.method == "upper_bound") upper = r.dice_mean;
        else if (r.ratio == 0.05) dice_low = r.dice_mean;
        else if (r.ratio == 0.5) dice_high = r.dice_mean;
    }
    std::fflush(stdout);

    const bool mono_ok = dice_high >= dice_low - 2.0;
    const bool upper_ok = upper >= dice_low - 2.0 && upper >= dice_high - 2.0;
    report(8, "ratio-sweep monotonicity and supervised upper bound (tol 2)",
           mono_ok && upper_ok,
           "dice@0.05 " + fmt(dice_low) + ", dice@0.5 " + fmt(dice_high) +
               ", upper bound " + fmt(upper));
}

// ---------------------------------------------------------------------------
// criterion 9: byte-identical history for identical config+seed
// ---------------------------------------------------------------------------

void criterion9() {
    Dataset ds = desk_dataset(5);
    ExperimentConfig cfg = desk_config(5);

    auto run_csv = [&]() {
        auto result = train<float>(cfg, ds);
        const fs::path path = fs::temp_directory_path() / "cadaseg_acc_hist.csv";
        write_history_csv(path.string(), result.history);
        std::ifstream f(path, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        fs::remove(path);
        return ss.str();
    };
    const std::string a = run_csv();
    const std::string b = run_csv();
    report(9, "identical config+seed gives byte-identical 500-iteration history",
           !a.empty() && a == b);
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d criterion(s) failed; total runtime %.1f s\n", g_failures, dt);
    return g_failures == 0 ? 0 : 1;
}
