#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/tensor.hpp"
#include "cadaseg/domain.hpp"
#include "cadaseg/nn/model.hpp"

namespace cadaseg {

// ---------------------------------------------------------------------------
// Binary overlap metrics (percentages)
// ---------------------------------------------------------------------------

namespace metricdetail {

struct Counts {
    long tp = 0, fp = 0, fn = 0;
};

inline Counts overlap_counts(const MaskImage& pred, const MaskImage& gt) {
    if (!pred.same_shape(gt)) throw InputError("metrics: mask shape mismatch");
    Counts c;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        c.tp += p && g;
        c.fp += p && !g;
        c.fn += !p && g;
    }
    return c;
}

}  // namespace metricdetail

inline double dice_pct(const MaskImage& pred, const MaskImage& gt) {
    const auto c = metricdetail::overlap_counts(pred, gt);
    const long denom = 2 * c.tp + c.fp + c.fn;  // |P| + |G|
    if (denom == 0) return 100.0;               // both masks empty
    return 200.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline std::pair<double, double> recall_precision_pct(const MaskImage& pred,
                                                      const MaskImage& gt) {
    const auto c = metricdetail::overlap_counts(pred, gt);
    const double recall =
        (c.tp + c.fn == 0) ? 100.0 : 100.0 * c.tp / static_cast<double>(c.tp + c.fn);
    const double precision =
        (c.tp + c.fp == 0) ? 100.0 : 100.0 * c.tp / static_cast<double>(c.tp + c.fp);
    return {recall, precision};
}

// ---------------------------------------------------------------------------
// Average symmetric surface distance. Boundary = foreground pixel with a
// background 4-neighbor (outside the image counts as background). Distances
// are Euclidean via an exact two-pass distance transform, scaled by the
// pixel spacing.
// ---------------------------------------------------------------------------

namespace metricdetail {

inline std::vector<std::pair<int, int>> boundary_pixels(const MaskImage& m) {
    std::vector<std::pair<int, int>> out;
    auto fg = [&](int y, int x) {
        if (y < 0 || x < 0 || y >= m.rows || x >= m.cols) return false;
        return m.at(y, x) != 0;
    };
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            if (fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) ||
                             !fg(y, x + 1)))
                out.push_back({y, x});
    return out;
}

// Felzenszwalb-Huttenlocher 1D squared distance transform.
inline void dt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    d.assign(n, 0.0);
    std::vector<int> v(n, 0);
    std::vector<double> z(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

// Squared Euclidean distance to the given seed set, over the full grid.
inline Matrix<double> edt_squared(const std::vector<std::pair<int, int>>& seeds,
                                  int rows, int cols) {
    constexpr double kInf = 1e18;
    Matrix<double> d(rows, cols, kInf);
    for (const auto& [y, x] : seeds) d.at(y, x) = 0.0;
    std::vector<double> f, out;
    for (int x = 0; x < cols; ++x) {  // along columns
        f.resize(rows);
        for (int y = 0; y < rows; ++y) f[y] = d.at(y, x);
        dt_1d(f, out);
        for (int y = 0; y < rows; ++y) d.at(y, x) = out[y];
    }
    for (int y = 0; y < rows; ++y) {  // along rows
        f.assign(d.row_ptr(y), d.row_ptr(y) + cols);
        dt_1d(f, out);
        for (int x = 0; x < cols; ++x) d.at(y, x) = out[x];
    }
    return d;
}

}  // namespace metricdetail

inline double assd(const MaskImage& pred, const MaskImage& gt, double spacing) {
    using namespace metricdetail;
    if (!pred.same_shape(gt)) throw InputError("assd: mask shape mismatch");
    const auto bp = boundary_pixels(pred);
    const auto bg = boundary_pixels(gt);
    if (bp.empty() || bg.empty())
        throw UndefinedMetricError("assd: undefined for an empty mask");

    const Matrix<double> dist_to_gt = edt_squared(bg, pred.rows, pred.cols);
    const Matrix<double> dist_to_pred = edt_squared(bp, pred.rows, pred.cols);
    double acc_p = 0.0;
    for (const auto& [y, x] : bp) acc_p += std::sqrt(dist_to_gt.at(y, x));
    double acc_g = 0.0;
    for (const auto& [y, x] : bg) acc_g += std::sqrt(dist_to_pred.at(y, x));
    return 0.5 * (acc_p / bp.size() + acc_g / bg.size()) * spacing;
}

// ---------------------------------------------------------------------------
// Per-case aggregation: metrics per test case, then mean +- sd across cases
// (sample standard deviation). ASSD cases where either surface is empty are
// reported as missing and excluded with a count.
// ---------------------------------------------------------------------------

struct ClassStats {
    int class_id = 0;  // -1 marks the across-class average row
    double dice_mean = 0.0, dice_sd = 0.0;
    double recall_mean = 0.0, recall_sd = 0.0;
    double precision_mean = 0.0, precision_sd = 0.0;
    bool has_assd = false;
    double assd_mean = 0.0, assd_sd = 0.0;
    int assd_excluded = 0;
};

struct MetricsRow {
    std::string method;
    std::vector<ClassStats> per_class;
    ClassStats average;
    int n_cases = 0;
    std::string test_hash;
};

namespace metricdetail {

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    return {mean, std::sqrt(var)};
}

inline MaskImage class_binary(const MaskImage& m, int cls) {
    MaskImage out(m.rows, m.cols, 0);
    for (size_t i = 0; i < m.data.size(); ++i)
        out.data[i] = (m.data[i] == cls) ? 1 : 0;
    return out;
}

}  // namespace metricdetail

// Aggregates metrics for foreground classes 1..num_classes-1 over parallel
// prediction/ground-truth lists.
inline MetricsRow evaluate_cases(const std::vector<MaskImage>& preds,
                                 const std::vector<MaskImage>& gts,
                                 int num_classes, double spacing,
                                 const std::string& method = "") {
    using namespace metricdetail;
    if (preds.empty() || preds.size() != gts.size())
        throw InputError("evaluate_cases: empty or mismatched case lists");

    MetricsRow row;
    row.method = method;
    row.n_cases = static_cast<int>(preds.size());

    const int fg_classes = num_classes - 1;
    std::vector<std::vector<double>> dice(fg_classes), recall(fg_classes),
        precision(fg_classes), surf(fg_classes);
    std::vector<int> surf_missing(fg_classes, 0);
    std::vector<double> avg_dice, avg_recall, avg_precision, avg_surf;

    for (size_t i = 0; i < preds.size(); ++i) {
        double case_dice = 0.0, case_recall = 0.0, case_precision = 0.0;
        double case_surf = 0.0;
        int case_surf_n = 0;
        for (int c = 1; c < num_classes; ++c) {
            const MaskImage pb = class_binary(preds[i], c);
            const MaskImage gb = class_binary(gts[i], c);
            const double d = dice_pct(pb, gb);
            const auto [r, p] = recall_precision_pct(pb, gb);
            dice[c - 1].push_back(d);
            recall[c - 1].push_back(r);
            precision[c - 1].push_back(p);
            case_dice += d;
            case_recall += r;
            case_precision += p;
            try {
                const double a = assd(pb, gb, spacing);
                surf[c - 1].push_back(a);
                case_surf += a;
                ++case_surf_n;
            } catch (const UndefinedMetricError&) {
                ++surf_missing[c - 1];
            }
        }
        avg_dice.push_back(case_dice / fg_classes);
        avg_recall.push_back(case_recall / fg_classes);
        avg_precision.push_back(case_precision / fg_classes);
        if (case_surf_n > 0) avg_surf.push_back(case_surf / case_surf_n);
    }

    auto fill = [&](ClassStats& s, const std::vector<double>& d,
                    const std::vector<double>& r, const std::vector<double>& p,
                    const std::vector<double>& a, int missing) {
        std::tie(s.dice_mean, s.dice_sd) = mean_sd(d);
        std::tie(s.recall_mean, s.recall_sd) = mean_sd(r);
        std::tie(s.precision_mean, s.precision_sd) = mean_sd(p);
        s.assd_excluded = missing;
        s.has_assd = !a.empty();
        if (s.has_assd) std::tie(s.assd_mean, s.assd_sd) = mean_sd(a);
    };

    for (int c = 1; c < num_classes; ++c) {
        ClassStats s;
        s.class_id = c;
        fill(s, dice[c - 1], recall[c - 1], precision[c - 1], surf[c - 1],
             surf_missing[c - 1]);
        row.per_class.push_back(s);
    }
    row.average.class_id = -1;
    fill(row.average, avg_dice, avg_recall, avg_precision, avg_surf,
         static_cast<int>(preds.size() - avg_surf.size()));
    return row;
}

// Per-pixel argmax with ties broken toward the lowest class id.
template <typename T>
MaskImage argmax_mask(const FeatureMap<T>& probs, int batch_index) {
    MaskImage mask(probs.height, probs.width, 0);
    const size_t plane = probs.plane();
    const size_t hw = static_cast<size_t>(probs.height) * probs.width;
    for (size_t i = 0; i < hw; ++i) {
        int best_c = 0;
        T best = probs.data[static_cast<size_t>(batch_index) * hw + i];
        for (int c = 1; c < probs.channels; ++c) {
            const T v = probs.data[c * plane + batch_index * hw + i];
            if (v > best) {
                best = v;
                best_c = c;
            }
        }
        mask.data[i] = static_cast<uint8_t>(best_c);
    }
    return mask;
}

template <typename T>
MaskImage predict_mask(const ModelParams<T>& params, const GrayImage& image,
                       Domain domain) {
    std::vector<const GrayImage*> one = {&image};
    FeatureMap<T> x = images_to_input<T>(one);
    FeatureMap<T> probs = forward_segment_eval(x, domain, params);
    return argmax_mask(probs, 0);
}

// Inference and evaluation over a test set: eval-mode forwards routed
// through the given domain (the trained inference rule is the student's
// target-domain parameter set).
template <typename T>
MetricsRow evaluate_model(const ModelParams<T>& params,
                          const std::vector<LabeledSample>& test_set,
                          Domain domain = Domain::Target, double spacing = 1.0,
                          const std::string& method = "") {
    if (test_set.empty()) throw InputError("evaluate_model: empty test set");
    std::vector<MaskImage> preds, gts;
    preds.reserve(test_set.size());
    for (const auto& s : test_set) {
        preds.push_back(predict_mask(params, s.image, domain));
        gts.push_back(s.mask);
    }
    return evaluate_cases(preds, gts, params.arch.num_classes, spacing, method);
}

}  // namespace cadaseg
