#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cadaseg/dsbn.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace cadaseg;

namespace {

// Scalar probe loss: weighted sum of the forward output with fixed random
// weights, so every output element contributes to the gradient.
template <typename T>
double probe_loss(const FeatureMap<T>& out, const std::vector<double>& w) {
    double acc = 0.0;
    for (size_t i = 0; i < out.size(); ++i) acc += w[i] * out.data[i];
    return acc;
}

}  // namespace

TEST_CASE("train forward maps a constant batch to (near) zero") {
    DsbnLayerState<double> state(2);
    FeatureMap<double> f(2, 3, 4, 4, 0.37);
    auto out = dsbn_forward_train(f, Domain::Source, state);
    for (double v : out.data) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("train forward is near-identity on zero-mean unit-variance input") {
    DsbnLayerState<double> state(1);
    FeatureMap<double> f(1, 2, 2, 2);
    for (size_t i = 0; i < f.size(); ++i) f.data[i] = (i % 2 == 0) ? 1.0 : -1.0;
    auto out = dsbn_forward_train(f, Domain::Target, state);
    for (size_t i = 0; i < f.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(f.data[i]).epsilon(1e-4));
}

TEST_CASE("affine parameters rescale the whitened features exactly") {
    Rng rng(7);
    auto f = testutil::random_feature_map<double>(rng, 3, 2, 4, 4);

    DsbnLayerState<double> identity_state(3);
    auto whitened = dsbn_forward_train(f, Domain::Source, identity_state);

    DsbnLayerState<double> affine_state(3);
    for (int c = 0; c < 3; ++c) {
        affine_state.gamma[0][c] = 2.0;
        affine_state.beta[0][c] = 1.0;
    }
    auto out = dsbn_forward_train(f, Domain::Source, affine_state);
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out.data[i] == 2.0 * whitened.data[i] + 1.0);
}

TEST_CASE("eval forward with fresh statistics is identity up to epsilon") {
    DsbnLayerState<double> state(2);
    Rng rng(11);
    auto f = testutil::random_feature_map<double>(rng, 2, 1, 3, 3);
    auto out = dsbn_forward_eval(f, Domain::Source, state);
    for (size_t i = 0; i < f.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(f.data[i]).epsilon(1e-4));
}

TEST_CASE("eval converges to train-mode behavior on a stationary stream") {
    DsbnLayerState<double> state(2);
    Rng rng(23);
    const double means[2] = {0.4, -1.2};
    const double sds[2] = {0.8, 2.0};
    auto draw_batch = [&](int n) {
        FeatureMap<double> f(2, n, 32, 32);
        for (int c = 0; c < 2; ++c) {
            double* p = f.channel_ptr(c);
            for (size_t i = 0; i < f.plane(); ++i)
                p[i] = rng.normal(means[c], sds[c]);
        }
        return f;
    };
    for (int step = 0; step < 500; ++step)
        dsbn_forward_train(draw_batch(8), Domain::Target, state);

    auto fresh = draw_batch(64);
    DsbnLayerState<double> state_copy = state;
    auto train_out = dsbn_forward_train(fresh, Domain::Target, state_copy);
    auto eval_out = dsbn_forward_eval(fresh, Domain::Target, state);
    double mean_abs_diff = 0.0;
    for (size_t i = 0; i < fresh.size(); ++i)
        mean_abs_diff += std::abs(train_out.data[i] - eval_out.data[i]);
    mean_abs_diff /= static_cast<double>(fresh.size());
    CHECK(mean_abs_diff < 1e-2);
}

TEST_CASE("source eval outputs are untouched by target-domain updates") {
    DsbnLayerState<double> state(3);
    Rng rng(31);
    auto probe = testutil::random_feature_map<double>(rng, 3, 2, 4, 4);
    auto before = dsbn_forward_eval(probe, Domain::Source, state);
    for (int step = 0; step < 50; ++step) {
        auto f = testutil::random_feature_map<double>(rng, 3, 4, 4, 4, -3.0, 3.0);
        dsbn_forward_train(f, Domain::Target, state);
    }
    auto after = dsbn_forward_eval(probe, Domain::Source, state);
    CHECK(before.data == after.data);
}

TEST_CASE("domain isolation: replaying the source-only subsequence matches bit-exactly") {
    Rng rng(43);
    std::vector<std::pair<Domain, FeatureMap<double>>> stream;
    for (int i = 0; i < 60; ++i) {
        Domain d = (i % 3 == 0) ? Domain::Source : Domain::Target;
        stream.emplace_back(d,
                            testutil::random_feature_map<double>(rng, 2, 3, 4, 4, -2.0, 2.0));
    }
    DsbnLayerState<double> interleaved(2);
    for (auto& [d, f] : stream) dsbn_forward_train(f, d, interleaved);

    DsbnLayerState<double> replay(2);
    for (auto& [d, f] : stream)
        if (d == Domain::Source) dsbn_forward_train(f, d, replay);

    const int s = static_cast<int>(Domain::Source);
    CHECK(interleaved.running_mean[s] == replay.running_mean[s]);
    CHECK(interleaved.running_var[s] == replay.running_var[s]);
}

TEST_CASE("update_running_stats arithmetic") {
    DsbnLayerState<double> state(1);
    SUBCASE("single step from zero") {
        update_running_stats(state, Domain::Source, {1.0}, {1.0}, 0.9);
        CHECK(state.running_mean[0][0] == doctest::Approx(0.1).epsilon(1e-12));
    }
    SUBCASE("fixed point when batch equals running") {
        state.running_mean[0][0] = 0.5;
        state.running_var[0][0] = 2.0;
        update_running_stats(state, Domain::Source, {0.5}, {2.0}, 0.9);
        CHECK(state.running_mean[0][0] == doctest::Approx(0.5));
        CHECK(state.running_var[0][0] == doctest::Approx(2.0));
    }
    SUBCASE("geometric convergence to a constant batch value") {
        const double target = 3.0;
        const double initial = 0.0;
        const double momentum = 0.9;
        for (int k = 1; k <= 40; ++k) {
            update_running_stats(state, Domain::Target, {target}, {1.0}, momentum);
            const double expected_err = std::pow(momentum, k) * std::abs(initial - target);
            const int t = static_cast<int>(Domain::Target);
            CHECK(std::abs(state.running_mean[t][0] - target) ==
                  doctest::Approx(expected_err).epsilon(1e-10));
        }
    }
}

TEST_CASE("parameter and input validation") {
    DsbnLayerState<double> state(2);
    CHECK_THROWS_AS(update_running_stats(state, Domain::Source, {0.0, 0.0},
                                         {1.0, 1.0}, 1.0),
                    ParameterError);
    CHECK_THROWS_AS(update_running_stats(state, Domain::Source, {0.0, 0.0},
                                         {1.0, 1.0}, 0.0),
                    ParameterError);

    FeatureMap<double> tiny(2, 1, 4, 4, 0.5);
    CHECK_THROWS_AS(dsbn_forward_train(tiny, Domain::Source, state), BatchSizeError);

    FeatureMap<double> bad(2, 2, 2, 2, 1.0);
    bad.data[3] = std::nan("");
    CHECK_THROWS_AS(dsbn_forward_train(bad, Domain::Source, state), NumericError);

    FeatureMap<double> wrong(3, 2, 2, 2, 0.0);
    CHECK_THROWS_AS(dsbn_forward_train(wrong, Domain::Source, state), ShapeError);
}

TEST_CASE("shape preservation") {
    DsbnLayerState<double> state(4);
    Rng rng(3);
    auto f = testutil::random_feature_map<double>(rng, 4, 3, 6, 5);
    auto out = dsbn_forward_train(f, Domain::Target, state);
    CHECK(out.same_shape(f));
}

TEST_CASE("analytic gradients match central finite differences") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(1000 + seed);
        const int C = 3, B = 2, H = 4, W = 4;
        auto x0 = testutil::random_feature_map<double>(rng, C, B, H, W, -1.5, 1.5);
        std::vector<double> gamma0(C), beta0(C), probe(x0.size());
        for (int c = 0; c < C; ++c) {
            gamma0[c] = rng.uniform(0.5, 2.0);
            beta0[c] = rng.uniform(-1.0, 1.0);
        }
        for (auto& w : probe) w = rng.uniform(-1.0, 1.0);

        auto forward_loss = [&](const std::vector<double>& x,
                                const std::vector<double>& g,
                                const std::vector<double>& b) {
            DsbnLayerState<double> st(C);
            st.gamma[0] = g;
            st.beta[0] = b;
            FeatureMap<double> f = x0;
            f.data = x;
            DsbnCache<double> unused;
            auto out = dsbn_forward_train(f, Domain::Source, st, &unused, false);
            return probe_loss(out, probe);
        };

        // analytic
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
            [&](const std::vector<double>& x) { return forward_loss(x, gamma0, beta0); },
            x0.data);
        auto fd_g = oracle::fd_gradient(
            [&](const std::vector<double>& g) { return forward_loss(x0.data, g, beta0); },
            gamma0);
        auto fd_b = oracle::fd_gradient(
            [&](const std::vector<double>& b) { return forward_loss(x0.data, gamma0, b); },
            beta0);

        CHECK(oracle::max_rel_error(dx.data, fd_x) < 1e-4);
        CHECK(oracle::max_rel_error(dgamma, fd_g) < 1e-4);
        CHECK(oracle::max_rel_error(dbeta, fd_b) < 1e-4);
    }
}
