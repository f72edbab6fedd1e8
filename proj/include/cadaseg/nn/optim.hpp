#pragma once

#include <cmath>
#include <vector>

#include "cadaseg/nn/model.hpp"

namespace cadaseg {

// Adam with per-tensor lazy updates: a tensor that received no gradient
// contribution in a step keeps its value, moments and bias-correction
// counter bit-identical. This preserves the contract that a pure
// source-domain step leaves the target affine parameters untouched.
template <typename T>
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ModelParams<T>& params, ModelGrads<T>& grads, double lr) {
        size_t slot = 0;
        visit_param_grad_pairs(
            params, grads,
            [&](std::vector<T>& p, std::vector<T>& g, bool touched) {
                if (slot >= m_.size()) {
                    m_.emplace_back(p.size(), 0.0);
                    v_.emplace_back(p.size(), 0.0);
                    steps_.push_back(0);
                }
                if (touched) {
                    std::vector<double>& m = m_[slot];
                    std::vector<double>& v = v_[slot];
                    const long t = ++steps_[slot];
                    const double bc1 = 1.0 - std::pow(beta1_, t);
                    const double bc2 = 1.0 - std::pow(beta2_, t);
                    for (size_t i = 0; i < p.size(); ++i) {
                        const double gi = g[i];
                        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
                        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
                        const double mh = m[i] / bc1;
                        const double vh = v[i] / bc2;
                        p[i] = static_cast<T>(p[i] - lr * mh / (std::sqrt(vh) + eps_));
                    }
                }
                ++slot;
            });
    }

private:
    double beta1_, beta2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    std::vector<long> steps_;
};

}  // namespace cadaseg
