#pragma once

#include <cmath>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/rng.hpp"
#include "cadaseg/nn/model.hpp"

namespace cadaseg {

// Self-ensembling teacher. Parameters only ever change through the EMA
// update; DSBN running statistics are EMA'd exactly like weights.
template <typename T>
struct TeacherState {
    ModelParams<T> params;
    double decay = 0.99;
    long iteration = 0;
};

template <typename T>
TeacherState<T> make_teacher(const ModelParams<T>& student, double decay) {
    if (decay < 0.0 || decay > 1.0)
        throw ParameterError("teacher: decay must lie in [0,1]");
    return TeacherState<T>{student, decay, 0};
}

// Pairs every trainable tensor and every running statistic of two models.
template <typename T, typename Fn>
void visit_model_pairs(ModelParams<T>& a, ModelParams<T>& b, Fn&& fn) {
    std::vector<std::vector<T>*> slots_a, slots_b;
    visit_trainable(a, [&](const std::string&, std::vector<T>& v) {
        slots_a.push_back(&v);
    });
    visit_stats(a, [&](const std::string&, std::vector<T>& v) {
        slots_a.push_back(&v);
    });
    visit_trainable(b, [&](const std::string&, std::vector<T>& v) {
        slots_b.push_back(&v);
    });
    visit_stats(b, [&](const std::string&, std::vector<T>& v) {
        slots_b.push_back(&v);
    });
    if (slots_a.size() != slots_b.size())
        throw ShapeError("model pair: tensor count mismatch");
    for (size_t i = 0; i < slots_a.size(); ++i) fn(*slots_a[i], *slots_b[i]);
}

// teacher <- decay * teacher + (1 - decay) * student, every scalar.
template <typename T>
void ema_update(TeacherState<T>& teacher, const ModelParams<T>& student,
                double decay) {
    if (decay < 0.0 || decay > 1.0)
        throw ParameterError("ema_update: decay must lie in [0,1]");
    const T a = static_cast<T>(decay);
    const T b = static_cast<T>(1.0 - decay);
    visit_model_pairs(teacher.params, const_cast<ModelParams<T>&>(student),
                      [&](std::vector<T>& tv, std::vector<T>& sv) {
                          if (tv.size() != sv.size())
                              throw ShapeError("ema_update: tensor shape mismatch");
                          if (decay == 0.0) {
                              tv = sv;
                              return;
                          }
                          for (size_t i = 0; i < tv.size(); ++i)
                              tv[i] = a * tv[i] + b * sv[i];
                      });
    teacher.iteration += 1;
}

// Additive zero-mean Gaussian intensity noise, clipped back to [0,1].
// Student and teacher views each take an independent draw.
template <typename T>
FeatureMap<T> perturb(const FeatureMap<T>& x, Rng& rng, double noise_sigma) {
    if (noise_sigma < 0.0)
        throw ParameterError("perturb: noise sigma must be >= 0");
    FeatureMap<T> out = x;
    if (noise_sigma == 0.0) return out;
    for (T& v : out.data) {
        v = static_cast<T>(v + noise_sigma * rng.normal());
        v = std::clamp(v, T(0), T(1));
    }
    return out;
}

// Time-dependent Gaussian warm-up: 0.1 * exp(-5 (1 - k/k_max)^2).
// Monotonically non-decreasing on [0, k_max]; k beyond k_max clamps.
inline double consistency_weight(long k, long k_max) {
    if (k_max <= 0) throw ParameterError("consistency_weight: k_max must be > 0");
    if (k < 0) throw ParameterError("consistency_weight: k must be >= 0");
    if (k > k_max) k = k_max;
    const double r = 1.0 - static_cast<double>(k) / static_cast<double>(k_max);
    return 0.1 * std::exp(-5.0 * r * r);
}

}  // namespace cadaseg
