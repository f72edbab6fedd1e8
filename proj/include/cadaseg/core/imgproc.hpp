#pragma once

#include <algorithm>
#include <cmath>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

// Half-pixel-centered bilinear resize. Identity when sizes match.
template <typename T>
Matrix<T> resize_bilinear(const Matrix<T>& src, int out_h, int out_w) {
    if (src.rows <= 0 || src.cols <= 0)
        throw InputError("resize_bilinear: empty image");
    if (out_h <= 0 || out_w <= 0)
        throw ParameterError("resize_bilinear: non-positive output size");
    Matrix<T> dst(out_h, out_w);
    const double sy = static_cast<double>(src.rows) / out_h;
    const double sx = static_cast<double>(src.cols) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.rows - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.rows - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.cols - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.cols - 1);
            const double wx = fx - x0;
            const double v =
                (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
            dst.at(y, x) = static_cast<T>(v);
        }
    }
    return dst;
}

// Nearest-neighbor resize; the only admissible interpolation for masks.
template <typename T>
Matrix<T> resize_nearest(const Matrix<T>& src, int out_h, int out_w) {
    if (src.rows <= 0 || src.cols <= 0)
        throw InputError("resize_nearest: empty image");
    if (out_h <= 0 || out_w <= 0)
        throw ParameterError("resize_nearest: non-positive output size");
    Matrix<T> dst(out_h, out_w);
    const double sy = static_cast<double>(src.rows) / out_h;
    const double sx = static_cast<double>(src.cols) / out_w;
    for (int y = 0; y < out_h; ++y) {
        int iy = static_cast<int>(std::floor((y + 0.5) * sy));
        iy = std::clamp(iy, 0, src.rows - 1);
        for (int x = 0; x < out_w; ++x) {
            int ix = static_cast<int>(std::floor((x + 0.5) * sx));
            ix = std::clamp(ix, 0, src.cols - 1);
            dst.at(y, x) = src.at(iy, ix);
        }
    }
    return dst;
}

template <typename T>
Matrix<T> flip_horizontal(const Matrix<T>& src) {
    Matrix<T> dst(src.rows, src.cols);
    for (int y = 0; y < src.rows; ++y)
        for (int x = 0; x < src.cols; ++x)
            dst.at(y, x) = src.at(y, src.cols - 1 - x);
    return dst;
}

template <typename T>
Matrix<T> flip_vertical(const Matrix<T>& src) {
    Matrix<T> dst(src.rows, src.cols);
    for (int y = 0; y < src.rows; ++y)
        for (int x = 0; x < src.cols; ++x)
            dst.at(y, x) = src.at(src.rows - 1 - y, x);
    return dst;
}

template <typename T>
Matrix<T> crop(const Matrix<T>& src, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > src.rows || x0 + w > src.cols)
        throw ParameterError("crop: window outside image");
    Matrix<T> dst(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) dst.at(y, x) = src.at(y0 + y, x0 + x);
    return dst;
}

// Separable Gaussian blur with kernel radius ceil(3 sigma); clamped borders.
// sigma <= 0 returns the input unchanged.
template <typename T>
Matrix<T> gaussian_blur(const Matrix<T>& src, double sigma) {
    if (sigma <= 0.0) return src;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    Matrix<T> tmp(src.rows, src.cols);
    for (int y = 0; y < src.rows; ++y)
        for (int x = 0; x < src.cols; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int xx = std::clamp(x + i, 0, src.cols - 1);
                acc += kernel[i + radius] * src.at(y, xx);
            }
            tmp.at(y, x) = static_cast<T>(acc);
        }
    Matrix<T> dst(src.rows, src.cols);
    for (int y = 0; y < src.rows; ++y)
        for (int x = 0; x < src.cols; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int yy = std::clamp(y + i, 0, src.rows - 1);
                acc += kernel[i + radius] * tmp.at(yy, x);
            }
            dst.at(y, x) = static_cast<T>(acc);
        }
    return dst;
}

template <typename T>
void clamp01(Matrix<T>& img) {
    for (T& v : img.data) v = std::clamp(v, T(0), T(1));
}

}  // namespace cadaseg
