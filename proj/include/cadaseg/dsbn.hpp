#pragma once

#include <cmath>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/tensor.hpp"
#include "cadaseg/domain.hpp"

namespace cadaseg {

// Domain-specific batch normalization: one set of affine parameters and
// running statistics per domain, updated strictly independently. The
// convolution kernels around these layers are shared; everything
// domain-specific lives here.
template <typename T>
struct DsbnLayerState {
    int channels = 0;
    double epsilon = 1e-5;
    double momentum = 0.9;  // running <- momentum*running + (1-momentum)*batch

    // Indexed by static_cast<int>(Domain).
    std::vector<T> gamma[kNumDomains];
    std::vector<T> beta[kNumDomains];
    std::vector<T> running_mean[kNumDomains];
    std::vector<T> running_var[kNumDomains];

    DsbnLayerState() = default;
    explicit DsbnLayerState(int c, double eps = 1e-5, double mom = 0.9)
        : channels(c), epsilon(eps), momentum(mom) {
        if (c <= 0) throw ParameterError("dsbn: channel count must be positive");
        if (eps <= 0.0) throw ParameterError("dsbn: epsilon must be positive");
        for (int d = 0; d < kNumDomains; ++d) {
            gamma[d].assign(c, T(1));
            beta[d].assign(c, T(0));
            running_mean[d].assign(c, T(0));
            running_var[d].assign(c, T(1));
        }
    }

    void check_channels(int c) const {
        if (c != channels) throw ShapeError("dsbn: channel count mismatch");
    }

    // Copies one domain's parameters and statistics over the other's.
    void copy_domain(Domain from, Domain to) {
        const int f = static_cast<int>(from), t = static_cast<int>(to);
        gamma[t] = gamma[f];
        beta[t] = beta[f];
        running_mean[t] = running_mean[f];
        running_var[t] = running_var[f];
    }
};

// Per-call context stashed by the train-mode forward for the backward pass.
template <typename T>
struct DsbnCache {
    FeatureMap<T> normalized;   // whitened features before the affine
    std::vector<T> inv_std;     // per channel, 1/sqrt(var + eps)
    Domain domain = Domain::Source;
};

template <typename T>
void update_running_stats(DsbnLayerState<T>& state, Domain domain,
                          const std::vector<T>& batch_mean,
                          const std::vector<T>& batch_var, double momentum) {
    if (!(momentum > 0.0 && momentum < 1.0))
        throw ParameterError("dsbn: momentum must lie in (0,1)");
    state.check_channels(static_cast<int>(batch_mean.size()));
    state.check_channels(static_cast<int>(batch_var.size()));
    const int d = static_cast<int>(domain);
    const T m = static_cast<T>(momentum);
    const T one_minus = static_cast<T>(1.0 - momentum);
    for (int c = 0; c < state.channels; ++c) {
        state.running_mean[d][c] = m * state.running_mean[d][c] + one_minus * batch_mean[c];
        state.running_var[d][c] = m * state.running_var[d][c] + one_minus * batch_var[c];
    }
}

// Train-mode forward: whitening with this batch's per-channel statistics,
// then the domain's affine transform. Biased variance (divide by N*H*W).
// update_stats=false computes with batch statistics but leaves the running
// statistics untouched (teacher and cross-domain embedding passes).
template <typename T>
FeatureMap<T> dsbn_forward_train(const FeatureMap<T>& f, Domain domain,
                                 DsbnLayerState<T>& state,
                                 DsbnCache<T>* cache = nullptr,
                                 bool update_stats = true) {
    state.check_channels(f.channels);
    if (f.batch < 2)
        throw BatchSizeError("dsbn: train-mode forward needs batch size >= 2");
    if (!all_finite(f)) throw NumericError("dsbn: non-finite input");

    const int d = static_cast<int>(domain);
    const size_t plane = f.plane();
    const double inv_m = 1.0 / static_cast<double>(plane);

    FeatureMap<T> out(f.channels, f.batch, f.height, f.width);
    std::vector<T> batch_mean(f.channels), batch_var(f.channels);
    if (cache) {
        cache->normalized = FeatureMap<T>(f.channels, f.batch, f.height, f.width);
        cache->inv_std.assign(f.channels, T(0));
        cache->domain = domain;
    }

    for (int c = 0; c < f.channels; ++c) {
        const T* x = f.channel_ptr(c);
        double mean = 0.0;
        for (size_t i = 0; i < plane; ++i) mean += x[i];
        mean *= inv_m;
        double var = 0.0;
        for (size_t i = 0; i < plane; ++i) {
            const double dv = x[i] - mean;
            var += dv * dv;
        }
        var *= inv_m;
        batch_mean[c] = static_cast<T>(mean);
        batch_var[c] = static_cast<T>(var);

        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
        const T g = state.gamma[d][c];
        const T b = state.beta[d][c];
        const T mu = static_cast<T>(mean);
        T* y = out.channel_ptr(c);
        T* nrm = cache ? cache->normalized.channel_ptr(c) : nullptr;
        for (size_t i = 0; i < plane; ++i) {
            const T xh = (x[i] - mu) * inv_std;
            if (nrm) nrm[i] = xh;
            y[i] = g * xh + b;
        }
        if (cache) cache->inv_std[c] = inv_std;
    }

    if (update_stats)
        update_running_stats(state, domain, batch_mean, batch_var, state.momentum);
    return out;
}

// Eval-mode forward: running statistics only, state untouched.
template <typename T>
FeatureMap<T> dsbn_forward_eval(const FeatureMap<T>& f, Domain domain,
                                const DsbnLayerState<T>& state) {
    state.check_channels(f.channels);
    if (!all_finite(f)) throw NumericError("dsbn: non-finite input");
    const int d = static_cast<int>(domain);
    const size_t plane = f.plane();
    FeatureMap<T> out(f.channels, f.batch, f.height, f.width);
    for (int c = 0; c < f.channels; ++c) {
        const T inv_std = static_cast<T>(
            1.0 / std::sqrt(static_cast<double>(state.running_var[d][c]) + state.epsilon));
        const T mu = state.running_mean[d][c];
        const T g = state.gamma[d][c];
        const T b = state.beta[d][c];
        const T* x = f.channel_ptr(c);
        T* y = out.channel_ptr(c);
        for (size_t i = 0; i < plane; ++i) y[i] = g * (x[i] - mu) * inv_std + b;
    }
    return out;
}

// Backward through the train-mode forward (batch statistics are a function
// of the input, so their contribution is included).
template <typename T>
FeatureMap<T> dsbn_backward(const FeatureMap<T>& dy, const DsbnCache<T>& cache,
                            const DsbnLayerState<T>& state,
                            std::vector<T>& dgamma, std::vector<T>& dbeta) {
    state.check_channels(dy.channels);
    if (!dy.same_shape(cache.normalized))
        throw ShapeError("dsbn: backward shape mismatch");
    const int d = static_cast<int>(cache.domain);
    const size_t plane = dy.plane();
    const double inv_m = 1.0 / static_cast<double>(plane);

    dgamma.assign(dy.channels, T(0));
    dbeta.assign(dy.channels, T(0));
    FeatureMap<T> dx(dy.channels, dy.batch, dy.height, dy.width);

    for (int c = 0; c < dy.channels; ++c) {
        const T* g_out = dy.channel_ptr(c);
        const T* xh = cache.normalized.channel_ptr(c);
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (size_t i = 0; i < plane; ++i) {
            sum_dy += g_out[i];
            sum_dy_xh += g_out[i] * xh[i];
        }
        dgamma[c] = static_cast<T>(sum_dy_xh);
        dbeta[c] = static_cast<T>(sum_dy);

        const double gamma = state.gamma[d][c];
        const double mean_dxh = gamma * sum_dy * inv_m;
        const double mean_dxh_xh = gamma * sum_dy_xh * inv_m;
        const double inv_std = cache.inv_std[c];
        T* out = dx.channel_ptr(c);
        for (size_t i = 0; i < plane; ++i) {
            const double dxh = gamma * g_out[i];
            out[i] = static_cast<T>(inv_std * (dxh - mean_dxh - xh[i] * mean_dxh_xh));
        }
    }
    return dx;
}

}  // namespace cadaseg
