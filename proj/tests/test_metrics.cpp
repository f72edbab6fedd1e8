#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cadaseg/core/imgproc.hpp"
#include "cadaseg/metrics.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cadaseg;

namespace {

MaskImage square_mask(int rows, int cols, int y0, int x0, int side) {
    MaskImage m(rows, cols, 0);
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.at(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("dice basics") {
    MaskImage a = square_mask(8, 8, 1, 1, 3);
    CHECK(dice_pct(a, a) == 100.0);

    MaskImage empty(8, 8, 0);
    CHECK(dice_pct(empty, empty) == 100.0);

    MaskImage b = square_mask(8, 8, 5, 5, 2);
    CHECK(dice_pct(a, b) == 0.0);

    // |P|=4, |G|=2, overlap 2 -> 2*2/6
    MaskImage p(4, 4, 0), g(4, 4, 0);
    p.at(0, 0) = p.at(0, 1) = p.at(1, 0) = p.at(1, 1) = 1;
    g.at(0, 0) = g.at(0, 1) = 1;
    CHECK(dice_pct(p, g) == doctest::Approx(200.0 * 2 / 6).epsilon(1e-12));

    MaskImage wrong(4, 5, 0);
    CHECK_THROWS_AS(dice_pct(p, wrong), InputError);
}

TEST_CASE("recall and precision are perfect on identical masks") {
    MaskImage a = square_mask(8, 8, 1, 1, 3);
    auto [recall, precision] = recall_precision_pct(a, a);
    CHECK(recall == 100.0);
    CHECK(precision == 100.0);
}

TEST_CASE("recall/precision counts arithmetic") {
    // TP=2, FP=2, FN=1
    MaskImage pred(4, 4, 0), gt(4, 4, 0);
    pred.at(0, 0) = pred.at(0, 1) = 1;  // TP
    pred.at(2, 2) = pred.at(2, 3) = 1;  // FP
    gt.at(0, 0) = gt.at(0, 1) = 1;
    gt.at(3, 3) = 1;  // FN
    auto [recall, precision] = recall_precision_pct(pred, gt);
    CHECK(recall == doctest::Approx(100.0 * 2 / 3).epsilon(1e-12));
    CHECK(precision == doctest::Approx(50.0).epsilon(1e-12));

    // containment: pred covers half of gt
    MaskImage half(4, 4, 0), full(4, 4, 0);
    full.at(1, 1) = full.at(1, 2) = 1;
    half.at(1, 1) = 1;
    auto [r2, p2] = recall_precision_pct(half, full);
    CHECK(r2 == 50.0);
    CHECK(p2 == 100.0);
}

TEST_CASE("assd basics") {
    MaskImage a = square_mask(16, 16, 4, 4, 3);
    CHECK(assd(a, a, 1.0) == 0.0);

    // two single-pixel masks three pixels apart horizontally
    MaskImage p(8, 8, 0), g(8, 8, 0);
    p.at(4, 2) = 1;
    g.at(4, 5) = 1;
    CHECK(assd(p, g, 1.0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(assd(p, g, 0.5) == doctest::Approx(1.5).epsilon(1e-12));

    // shifted square vs brute-force oracle
    MaskImage s1 = square_mask(16, 16, 5, 5, 3);
    MaskImage s2 = square_mask(16, 16, 5, 6, 3);
    CHECK(assd(s1, s2, 1.0) ==
          doctest::Approx(oracle::brute_assd(s1, s2, 1.0)).epsilon(1e-9));

    MaskImage empty(8, 8, 0);
    CHECK_THROWS_AS(assd(p, empty, 1.0), UndefinedMetricError);
    CHECK_THROWS_AS(assd(empty, g, 1.0), UndefinedMetricError);
}

TEST_CASE("assd is exactly symmetric") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        MaskImage a = testutil::random_mask(rng, 12, 12, 0.3);
        MaskImage b = testutil::random_mask(rng, 12, 12, 0.3);
        if (oracle::mask_to_set(a).empty() || oracle::mask_to_set(b).empty())
            continue;
        CHECK(assd(a, b, 1.0) == assd(b, a, 1.0));
    }
}

TEST_CASE("metric oracle equivalence on 50 random mask pairs") {
    Rng rng(7);
    int compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        MaskImage a = testutil::random_mask(rng, 16, 16, rng.uniform(0.2, 0.6));
        MaskImage b = testutil::random_mask(rng, 16, 16, rng.uniform(0.2, 0.6));
        const double od = oracle::brute_dice_pct(a, b);
        const auto [orecall, oprecision] = oracle::brute_recall_precision_pct(a, b);
        CHECK(dice_pct(a, b) == doctest::Approx(od).epsilon(1e-9));
        auto [r, p] = recall_precision_pct(a, b);
        CHECK(r == doctest::Approx(orecall).epsilon(1e-9));
        CHECK(p == doctest::Approx(oprecision).epsilon(1e-9));
        if (!oracle::mask_to_set(a).empty() && !oracle::mask_to_set(b).empty()) {
            CHECK(assd(a, b, 1.0) ==
                  doctest::Approx(oracle::brute_assd(a, b, 1.0)).epsilon(1e-9));
            ++compared;
        }
    }
    CHECK(compared > 30);
}

TEST_CASE("metrics are pure set functions (pixel order irrelevant)") {
    Rng rng(11);
    MaskImage a = testutil::random_mask(rng, 10, 10, 0.4);
    MaskImage b = testutil::random_mask(rng, 10, 10, 0.4);
    // flipping both masks identically permutes the pixels
    MaskImage fa = flip_horizontal(a), fb = flip_horizontal(b);
    CHECK(dice_pct(a, b) == dice_pct(fa, fb));
    auto [r1, p1] = recall_precision_pct(a, b);
    auto [r2, p2] = recall_precision_pct(fa, fb);
    CHECK(r1 == r2);
    CHECK(p1 == p2);
}

TEST_CASE("evaluate_cases aggregates per-case metrics as mean and sd") {
    // two cases with hand-computed dice values
    MaskImage gt = square_mask(8, 8, 2, 2, 4);  // 16 px
    MaskImage perfect = gt;
    MaskImage half = square_mask(8, 8, 2, 2, 4);
    for (int y = 2; y < 6; ++y) half.at(y, 4) = half.at(y, 5) = 0;  // 8 px subset

    const double dice_perfect = 100.0;
    const double dice_half = 200.0 * 8 / (8 + 16);
    auto [exp_mean, exp_sd] = oracle::mean_sd({dice_perfect, dice_half});

    auto row = evaluate_cases({perfect, half}, {gt, gt}, 2, 1.0, "demo");
    CHECK(row.n_cases == 2);
    CHECK(row.per_class.size() == 1);
    CHECK(row.per_class[0].dice_mean == doctest::Approx(exp_mean).epsilon(1e-12));
    CHECK(row.per_class[0].dice_sd == doctest::Approx(exp_sd).epsilon(1e-12));
    CHECK(row.average.dice_mean == doctest::Approx(exp_mean).epsilon(1e-12));
}

TEST_CASE("evaluate_cases reports missing surface distances instead of zeros") {
    MaskImage gt = square_mask(8, 8, 2, 2, 3);
    MaskImage empty(8, 8, 0);
    auto row = evaluate_cases({empty, gt}, {gt, gt}, 2, 1.0);
    CHECK(row.per_class[0].assd_excluded == 1);
    CHECK(row.per_class[0].has_assd);
    CHECK(row.per_class[0].assd_mean == 0.0);  // the surviving case is exact
    CHECK(row.per_class[0].dice_mean == doctest::Approx(50.0));
}

TEST_CASE("argmax breaks ties toward the lowest class id") {
    FeatureMap<double> probs(3, 1, 2, 2, 1.0 / 3.0);
    auto mask = argmax_mask(probs, 0);
    for (uint8_t v : mask.data) CHECK(v == 0);
}

TEST_CASE("a uniform model predicts background everywhere") {
    ArchDescriptor a;
    a.widths = {4, 8};
    a.proj_hidden = 8;
    a.proj_dim = 4;
    auto params = build_model<double>(a, 1);
    visit_trainable(params, [](const std::string& name, std::vector<double>& v) {
        if (name.find("gamma") == std::string::npos)
            std::fill(v.begin(), v.end(), 0.0);
    });
    std::vector<LabeledSample> test_set(2);
    Rng rng(5);
    for (auto& s : test_set) {
        s.image = testutil::random_matrix<double>(rng, 8, 8, 0.0, 1.0);
        s.mask = square_mask(8, 8, 2, 2, 3);
        s.domain = Domain::Target;
    }
    auto row = evaluate_model(params, test_set);
    CHECK(row.per_class[0].dice_mean == 0.0);
    CHECK(!row.per_class[0].has_assd);
    CHECK(row.per_class[0].assd_excluded == 2);
}

TEST_CASE("evaluate_model rejects an empty test set") {
    ArchDescriptor a;
    a.widths = {4, 8};
    auto params = build_model<double>(a, 1);
    std::vector<LabeledSample> empty;
    CHECK_THROWS_AS(evaluate_model(params, empty), InputError);
}
