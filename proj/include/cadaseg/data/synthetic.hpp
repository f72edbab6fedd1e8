#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cadaseg/core/imgproc.hpp"
#include "cadaseg/core/rng.hpp"
#include "cadaseg/domain.hpp"

namespace cadaseg {

namespace syndetail {

// Concentric disc/annulus geometry: class 1 = inner disc, class 2 = ring.
// The disc is strictly nested inside the ring by construction.
inline MaskImage circular_mask(Rng& rng, int size) {
    MaskImage mask(size, size, 0);
    const double cx = size * (0.5 + rng.uniform(-0.10, 0.10));
    const double cy = size * (0.5 + rng.uniform(-0.10, 0.10));
    const double r2 = size * rng.uniform(0.20, 0.34);
    const double r1 = r2 * rng.uniform(0.45, 0.65);
    const double ax = rng.uniform(0.80, 1.20);
    const double ay = rng.uniform(0.80, 1.20);
    const double theta = rng.uniform(0.0, M_PI);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = (dx * ct + dy * st) / ax;
            const double v = (-dx * st + dy * ct) / ay;
            const double d = std::sqrt(u * u + v * v);
            if (d <= r1)
                mask.at(y, x) = 1;
            else if (d <= r2)
                mask.at(y, x) = 2;
        }
    return mask;
}

inline void stamp_disc(MaskImage& mask, double cx, double cy, double r) {
    const int lo_y = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int hi_y = std::min(mask.rows - 1, static_cast<int>(std::ceil(cy + r)));
    const int lo_x = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int hi_x = std::min(mask.cols - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = lo_y; y <= hi_y; ++y)
        for (int x = lo_x; x <= hi_x; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                mask.at(y, x) = 1;
}

struct PathPoint {
    double x, y, heading;
};

// Random branching curve, the vessel-like structure family.
inline MaskImage tubular_mask(Rng& rng, int size) {
    MaskImage mask(size, size, 0);

    auto walk = [&](double x, double y, double heading, int steps,
                    double thickness, std::vector<PathPoint>* trace) {
        for (int s = 0; s < steps; ++s) {
            stamp_disc(mask, x, y, thickness);
            if (trace) trace->push_back({x, y, heading});
            heading += rng.normal(0.0, 0.12);
            x += std::cos(heading);
            y += std::sin(heading);
            if (x < 2.0 || y < 2.0 || x > size - 3.0 || y > size - 3.0) break;
        }
    };

    // main curve enters from a random border point
    const int side = rng.uniform_int(0, 3);
    double x0, y0, heading;
    const double pos = rng.uniform(0.2, 0.8) * size;
    switch (side) {
        case 0: x0 = pos; y0 = 2.0; heading = M_PI / 2; break;
        case 1: x0 = pos; y0 = size - 3.0; heading = -M_PI / 2; break;
        case 2: x0 = 2.0; y0 = pos; heading = 0.0; break;
        default: x0 = size - 3.0; y0 = pos; heading = M_PI; break;
    }
    heading += rng.uniform(-0.3, 0.3);
    const int main_steps = static_cast<int>(size * 1.3);
    const double thickness = rng.uniform(1.0, 2.2);
    std::vector<PathPoint> trace;
    walk(x0, y0, heading, main_steps, thickness, &trace);

    const int branches = rng.bernoulli(0.65) + rng.bernoulli(0.35);
    for (int b = 0; b < branches && trace.size() > 8; ++b) {
        const size_t at = static_cast<size_t>(
            rng.uniform_int(static_cast<int>(trace.size()) / 4,
                            static_cast<int>(trace.size()) * 3 / 4));
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double branch_heading = trace[at].heading + sign * rng.uniform(0.5, 1.1);
        const int branch_steps = static_cast<int>(main_steps * rng.uniform(0.25, 0.5));
        walk(trace[at].x, trace[at].y, branch_heading, branch_steps,
             thickness * rng.uniform(0.6, 0.9), nullptr);
    }
    return mask;
}

// Smooth low-frequency value noise, bilinearly upsampled from a coarse grid.
inline GrayImage texture_field(Rng& rng, int size) {
    const int grid = 6;
    GrayImage coarse(grid, grid);
    for (double& v : coarse.data) v = rng.uniform(-1.0, 1.0);
    return resize_bilinear(coarse, size, size);
}

inline GrayImage render(const MaskImage& mask, const SyntheticStyle& style,
                        StructureKind kind, Rng& noise_rng, Rng& tex_rng) {
    const int size = mask.rows;
    // Per-image appearance jitter around the style's nominal values: no two
    // images share exactly the same intensity histogram, mirroring the
    // domain-shift setting the benchmark stands in for.
    const double bg = style.background_level + noise_rng.uniform(-0.10, 0.10);
    const double contrast = style.foreground_contrast * noise_rng.uniform(0.7, 1.3);
    GrayImage img(size, size, bg);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const uint8_t c = mask.at(y, x);
            if (c == 0) continue;
            double gain = 1.0;
            if (kind == StructureKind::Circular && c == 2) gain = 0.55;
            img.at(y, x) += contrast * gain;
        }
    if (style.blur_radius > 0.0) img = gaussian_blur(img, style.blur_radius);

    const GrayImage tex = texture_field(tex_rng, size);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] += 0.06 * tex.data[i];

    if (style.noise_sigma > 0.0)
        for (double& v : img.data) v += noise_rng.normal(0.0, style.noise_sigma);
    clamp01(img);
    return img;
}

inline std::string make_id(const char* prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, index);
    return buf;
}

inline LabeledSample make_sample(StructureKind kind, const SyntheticStyle& style,
                                 Domain domain, int image_size, uint64_t seed,
                                 uint64_t split_id, int index,
                                 const char* id_prefix) {
    Rng geo_rng(derive_seed(derive_seed(seed, split_id), index));
    Rng tex_rng(derive_seed(derive_seed(style.texture_seed, split_id), index));
    MaskImage mask = (kind == StructureKind::Circular)
                         ? circular_mask(geo_rng, image_size)
                         : tubular_mask(geo_rng, image_size);
    GrayImage img = render(mask, style, kind, geo_rng, tex_rng);
    LabeledSample s;
    s.image = std::move(img);
    s.mask = std::move(mask);
    s.domain = domain;
    s.id = make_id(id_prefix, index);
    return s;
}

}  // namespace syndetail

// Builds the full two-domain benchmark: the domains share the structure
// family but differ in rendered style. Bit-reproducible from the seed.
inline Dataset generate_synthetic_domains(StructureKind kind,
                                          const SyntheticStyle& style_source,
                                          const SyntheticStyle& style_target,
                                          const DatasetCounts& counts,
                                          uint64_t seed, int image_size = 64) {
    using namespace syndetail;
    counts.validate();
    style_source.validate();
    style_target.validate();
    if (style_source == style_target)
        throw ParameterError(
            "generate: source and target styles must differ in at least one field");
    if (image_size < 16)
        throw ParameterError("generate: image size too small");

    Dataset ds;
    ds.num_classes = kind_classes(kind);
    for (int i = 0; i < counts.source_labeled; ++i)
        ds.source_labeled.push_back(make_sample(kind, style_source, Domain::Source,
                                                image_size, seed, 0, i, "src"));
    const int n_target_train = counts.target_labeled + counts.target_unlabeled;
    for (int i = 0; i < n_target_train; ++i)
        ds.target_train_full.push_back(make_sample(
            kind, style_target, Domain::Target, image_size, seed, 1, i, "tgt"));
    for (int i = 0; i < counts.target_labeled; ++i)
        ds.target_labeled.push_back(ds.target_train_full[i]);
    for (int i = counts.target_labeled; i < n_target_train; ++i) {
        UnlabeledSample u;
        u.image = ds.target_train_full[i].image;
        u.domain = Domain::Target;
        u.id = ds.target_train_full[i].id;
        ds.target_unlabeled.push_back(std::move(u));
    }
    for (int i = 0; i < counts.validation; ++i)
        ds.validation.push_back(make_sample(kind, style_target, Domain::Target,
                                            image_size, seed, 2, i, "val"));
    for (int i = 0; i < counts.test; ++i)
        ds.test.push_back(make_sample(kind, style_target, Domain::Target,
                                      image_size, seed, 3, i, "test"));
    return ds;
}

}  // namespace cadaseg
