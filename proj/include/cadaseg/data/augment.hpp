#pragma once

#include <optional>
#include <utility>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/imgproc.hpp"
#include "cadaseg/core/rng.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

// One sampled geometric transform: flips, then a square crop resized to the
// output size. Image and mask always receive the identical geometry; masks
// are interpolated nearest-neighbor.
struct AugmentOps {
    bool hflip = false;
    bool vflip = false;
    int crop_y = 0;
    int crop_x = 0;
    int crop_size = 0;
};

inline AugmentOps sample_augment(Rng& rng, int h, int w, int crop_out,
                                 double min_crop_frac = 0.8) {
    AugmentOps ops;
    ops.hflip = rng.bernoulli(0.5);
    ops.vflip = rng.bernoulli(0.5);
    const int max_side = std::min(h, w);
    const int min_side = std::min(
        max_side,
        std::max(crop_out, static_cast<int>(std::lround(min_crop_frac * max_side))));
    ops.crop_size = rng.uniform_int(min_side, max_side);
    ops.crop_y = rng.uniform_int(0, h - ops.crop_size);
    ops.crop_x = rng.uniform_int(0, w - ops.crop_size);
    return ops;
}

inline std::pair<GrayImage, std::optional<MaskImage>> apply_augment(
    const GrayImage& image, const MaskImage* mask, const AugmentOps& ops,
    int crop_out) {
    GrayImage img = image;
    std::optional<MaskImage> msk;
    if (mask) msk = *mask;

    if (ops.hflip) {
        img = flip_horizontal(img);
        if (msk) *msk = flip_horizontal(*msk);
    }
    if (ops.vflip) {
        img = flip_vertical(img);
        if (msk) *msk = flip_vertical(*msk);
    }
    img = crop(img, ops.crop_y, ops.crop_x, ops.crop_size, ops.crop_size);
    if (msk) *msk = crop(*msk, ops.crop_y, ops.crop_x, ops.crop_size, ops.crop_size);

    if (img.rows != crop_out || img.cols != crop_out) {
        img = resize_bilinear(img, crop_out, crop_out);
        if (msk) *msk = resize_nearest(*msk, crop_out, crop_out);
    }
    clamp01(img);
    return {std::move(img), std::move(msk)};
}

// Random flips + random crop-and-resize to crop_out x crop_out.
inline std::pair<GrayImage, std::optional<MaskImage>> augment(
    const GrayImage& image, const MaskImage* mask, Rng& rng, int crop_out,
    double min_crop_frac = 0.8) {
    if (crop_out <= 0 || crop_out > image.rows || crop_out > image.cols)
        throw ParameterError("augment: crop size exceeds the input");
    if (mask && (mask->rows != image.rows || mask->cols != image.cols))
        throw InputError("augment: image/mask shape mismatch");
    const AugmentOps ops =
        sample_augment(rng, image.rows, image.cols, crop_out, min_crop_frac);
    return apply_augment(image, mask, ops, crop_out);
}

}  // namespace cadaseg
