#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cadaseg/core/error.hpp"

namespace cadaseg {

// Row-major 2D array. Doubles as the single-channel image type (rows =
// height, cols = width).
template <typename T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c, T fill = T(0))
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const {
        return data[static_cast<size_t>(r) * cols + c];
    }
    T* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const T* row_ptr(int r) const {
        return data.data() + static_cast<size_t>(r) * cols;
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const {
        return rows == o.rows && cols == o.cols;
    }
    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

// Batched feature maps, stored channel-major: the full (batch, height,
// width) slab of one channel is contiguous. That makes per-channel batch
// statistics and the GEMM layouts used by convolution stride-1 operations.
template <typename T>
struct FeatureMap {
    int channels = 0;
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    FeatureMap() = default;
    FeatureMap(int c, int n, int h, int w, T fill = T(0))
        : channels(c),
          batch(n),
          height(h),
          width(w),
          data(static_cast<size_t>(c) * n * h * w, fill) {}

    size_t plane() const { return static_cast<size_t>(batch) * height * width; }
    size_t size() const { return data.size(); }

    T& at(int c, int n, int y, int x) {
        return data[((static_cast<size_t>(c) * batch + n) * height + y) * width + x];
    }
    const T& at(int c, int n, int y, int x) const {
        return data[((static_cast<size_t>(c) * batch + n) * height + y) * width + x];
    }
    T* channel_ptr(int c) { return data.data() + c * plane(); }
    const T* channel_ptr(int c) const { return data.data() + c * plane(); }

    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && batch == o.batch &&
               height == o.height && width == o.width;
    }
    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (const T& x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <typename T>
bool all_finite(const FeatureMap<T>& f) {
    return all_finite(f.data);
}

using GrayImage = Matrix<double>;   // intensities in [0, 1]
using MaskImage = Matrix<uint8_t>;  // class ids in [0, C)

}  // namespace cadaseg
