#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/imgproc.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

struct PreprocessOptions {
    bool enable_clahe = false;
    double gamma = 1.0;
    int out_size = 0;      // 0 keeps the input size
    int clahe_tiles = 8;   // tiles per axis
    double clahe_clip = 2.0;
};

namespace predetail {

constexpr int kClaheBins = 256;

// Contrast-limited adaptive histogram equalization on a [0,1] image.
// Per-tile clipped histograms, CDF remap, bilinear blending between the
// four surrounding tile mappings.
inline GrayImage clahe(const GrayImage& img, int tiles, double clip_limit) {
    const int H = img.rows, W = img.cols;
    const int ty = std::min(tiles, H), tx = std::min(tiles, W);
    const double tile_h = static_cast<double>(H) / ty;
    const double tile_w = static_cast<double>(W) / tx;

    auto quantize = [](double v) {
        int q = static_cast<int>(v * kClaheBins);
        return std::clamp(q, 0, kClaheBins - 1);
    };

    // mapping[tile][bin] -> equalized value in [0,1]
    std::vector<std::array<double, kClaheBins>> mapping(
        static_cast<size_t>(ty) * tx);
    for (int i = 0; i < ty; ++i) {
        for (int j = 0; j < tx; ++j) {
            const int y0 = static_cast<int>(std::floor(i * tile_h));
            const int y1 = (i == ty - 1) ? H : static_cast<int>(std::floor((i + 1) * tile_h));
            const int x0 = static_cast<int>(std::floor(j * tile_w));
            const int x1 = (j == tx - 1) ? W : static_cast<int>(std::floor((j + 1) * tile_w));
            const int n = (y1 - y0) * (x1 - x0);

            std::array<double, kClaheBins> hist{};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) hist[quantize(img.at(y, x))] += 1.0;

            const double limit =
                std::max(1.0, clip_limit * n / static_cast<double>(kClaheBins));
            double excess = 0.0;
            for (double& h : hist)
                if (h > limit) {
                    excess += h - limit;
                    h = limit;
                }
            const double add = excess / kClaheBins;
            for (double& h : hist) h += add;

            std::array<double, kClaheBins>& map = mapping[static_cast<size_t>(i) * tx + j];
            double cdf = 0.0;
            double cdf_min = -1.0;
            for (int b = 0; b < kClaheBins; ++b) {
                cdf += hist[b];
                if (cdf_min < 0.0 && hist[b] > 0.0) cdf_min = cdf;
                map[b] = cdf;
            }
            const double denom = n - cdf_min;
            for (int b = 0; b < kClaheBins; ++b) {
                if (denom <= 0.0)  // single-bin tile: keep intensities
                    map[b] = (b + 0.5) / kClaheBins;
                else
                    map[b] = std::clamp((map[b] - cdf_min) / denom, 0.0, 1.0);
            }
        }
    }

    GrayImage out(H, W);
    for (int y = 0; y < H; ++y) {
        const double fy = (y + 0.5) / tile_h - 0.5;
        const int i0 = std::clamp(static_cast<int>(std::floor(fy)), 0, ty - 1);
        const int i1 = std::min(i0 + 1, ty - 1);
        const double wy = std::clamp(fy - i0, 0.0, 1.0);
        for (int x = 0; x < W; ++x) {
            const double fx = (x + 0.5) / tile_w - 0.5;
            const int j0 = std::clamp(static_cast<int>(std::floor(fx)), 0, tx - 1);
            const int j1 = std::min(j0 + 1, tx - 1);
            const double wx = std::clamp(fx - j0, 0.0, 1.0);
            const int q = quantize(img.at(y, x));
            const double v =
                (1 - wy) * ((1 - wx) * mapping[static_cast<size_t>(i0) * tx + j0][q] +
                            wx * mapping[static_cast<size_t>(i0) * tx + j1][q]) +
                wy * ((1 - wx) * mapping[static_cast<size_t>(i1) * tx + j0][q] +
                      wx * mapping[static_cast<size_t>(i1) * tx + j1][q]);
            out.at(y, x) = v;
        }
    }
    return out;
}

}  // namespace predetail

// Min-max rescale, optional CLAHE, gamma correction, resize. Output is
// always inside [0,1] and deterministic for fixed inputs.
inline GrayImage preprocess(const GrayImage& raw, const PreprocessOptions& opt) {
    if (raw.rows <= 0 || raw.cols <= 0)
        throw InputError("preprocess: empty image");
    if (opt.gamma <= 0.0)
        throw ParameterError("preprocess: gamma must be positive");

    double lo = raw.data[0], hi = raw.data[0];
    for (double v : raw.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    GrayImage img(raw.rows, raw.cols);
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (size_t i = 0; i < raw.data.size(); ++i)
            img.data[i] = (raw.data[i] - lo) * inv;
    } else {
        // constant image: clamp the constant into range
        const double v = std::clamp(lo, 0.0, 1.0);
        std::fill(img.data.begin(), img.data.end(), v);
    }

    if (opt.enable_clahe)
        img = predetail::clahe(img, opt.clahe_tiles, opt.clahe_clip);

    if (opt.gamma != 1.0)
        for (double& v : img.data) v = std::pow(v, opt.gamma);

    if (opt.out_size > 0 && (img.rows != opt.out_size || img.cols != opt.out_size))
        img = resize_bilinear(img, opt.out_size, opt.out_size);

    clamp01(img);
    return img;
}

}  // namespace cadaseg
