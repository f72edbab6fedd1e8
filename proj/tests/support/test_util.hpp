#pragma once

#include <vector>

#include "cadaseg/core/rng.hpp"
#include "cadaseg/core/tensor.hpp"

namespace testutil {

template <typename T>
cadaseg::FeatureMap<T> random_feature_map(cadaseg::Rng& rng, int c, int n,
                                          int h, int w, double lo = -1.0,
                                          double hi = 1.0) {
    cadaseg::FeatureMap<T> f(c, n, h, w);
    for (auto& v : f.data) v = static_cast<T>(rng.uniform(lo, hi));
    return f;
}

template <typename T>
cadaseg::Matrix<T> random_matrix(cadaseg::Rng& rng, int rows, int cols,
                                 double lo = 0.0, double hi = 1.0) {
    cadaseg::Matrix<T> m(rows, cols);
    for (auto& v : m.data) v = static_cast<T>(rng.uniform(lo, hi));
    return m;
}

inline cadaseg::MaskImage random_mask(cadaseg::Rng& rng, int rows, int cols,
                                      double fg_prob = 0.4) {
    cadaseg::MaskImage m(rows, cols);
    for (auto& v : m.data) v = rng.bernoulli(fg_prob) ? 1 : 0;
    return m;
}

}  // namespace testutil
