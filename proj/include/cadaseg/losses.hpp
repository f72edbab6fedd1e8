#pragma once

#include <cmath>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

// ---------------------------------------------------------------------------
// Hybrid segmentation loss: 0.5 * cross-entropy + 0.5 * (1 - soft Dice),
// soft Dice with squared denominator and smoothing 1e-5 on both sides,
// averaged over foreground classes and then over the batch.
// ---------------------------------------------------------------------------

inline constexpr double kDiceSmooth = 1e-5;
inline constexpr double kLogFloor = 1e-12;

template <typename T>
void check_probs_masks(const FeatureMap<T>& p,
                       const std::vector<const MaskImage*>& masks) {
    if (static_cast<int>(masks.size()) != p.batch)
        throw InputError("seg_loss: batch size mismatch");
    for (const MaskImage* m : masks) {
        if (m->rows != p.height || m->cols != p.width)
            throw InputError("seg_loss: mask/prediction shape mismatch");
        for (uint8_t v : m->data)
            if (v >= p.channels)
                throw InputError("seg_loss: mask class id out of range");
    }
}

// Value only. dprobs, when given, receives scale * dL/dp accumulated.
template <typename T>
double seg_loss(const FeatureMap<T>& p,
                const std::vector<const MaskImage*>& masks,
                FeatureMap<T>* dprobs = nullptr, double scale = 1.0) {
    check_probs_masks(p, masks);
    const int C = p.channels;
    const int B = p.batch;
    const size_t plane = p.plane();
    const size_t hw = static_cast<size_t>(p.height) * p.width;
    const double inv_b = 1.0 / static_cast<double>(B);
    const int fg_classes = C - 1;

    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        const MaskImage& y = *masks[b];
        // cross-entropy, mean over pixels
        double ce = 0.0;
        for (size_t i = 0; i < hw; ++i) {
            const int cls = y.data[i];
            const double pv = std::max(
                static_cast<double>(
                    p.data[static_cast<size_t>(cls) * plane + b * hw + i]),
                kLogFloor);
            ce -= std::log(pv);
        }
        ce /= static_cast<double>(hw);

        // soft Dice per foreground class
        double dice_sum = 0.0;
        for (int c = 1; c < C; ++c) {
            const T* pc = p.data.data() + static_cast<size_t>(c) * plane + b * hw;
            double inter = 0.0, denom = 0.0;
            for (size_t i = 0; i < hw; ++i) {
                const double pv = pc[i];
                const double yv = (y.data[i] == c) ? 1.0 : 0.0;
                inter += pv * yv;
                denom += pv * pv + yv * yv;
            }
            const double dice = (2.0 * inter + kDiceSmooth) / (denom + kDiceSmooth);
            dice_sum += dice;

            if (dprobs) {
                // d(dice)/dp = (2y(D+s) - (2I+s)2p) / (D+s)^2
                const double ds = denom + kDiceSmooth;
                const double ns = 2.0 * inter + kDiceSmooth;
                const double coeff =
                    scale * inv_b * (-0.5 / static_cast<double>(fg_classes));
                T* dp = dprobs->data.data() + static_cast<size_t>(c) * plane + b * hw;
                for (size_t i = 0; i < hw; ++i) {
                    const double pv = pc[i];
                    const double yv = (y.data[i] == c) ? 1.0 : 0.0;
                    const double ddice = (2.0 * yv * ds - ns * 2.0 * pv) / (ds * ds);
                    dp[i] += static_cast<T>(coeff * ddice);
                }
            }
        }
        const double mean_dice = dice_sum / static_cast<double>(fg_classes);
        total += 0.5 * ce + 0.5 * (1.0 - mean_dice);

        if (dprobs) {
            const double ce_coeff = scale * inv_b * 0.5 / static_cast<double>(hw);
            for (size_t i = 0; i < hw; ++i) {
                const int cls = y.data[i];
                const size_t idx = static_cast<size_t>(cls) * plane + b * hw + i;
                const double pv = std::max(static_cast<double>(p.data[idx]), kLogFloor);
                dprobs->data[idx] += static_cast<T>(-ce_coeff / pv);
            }
        }
    }
    return total * inv_b;
}

// Sum of the per-batch means of the two labeled pools; either batch may be
// absent (nullptr) for baseline variants, but not both.
template <typename T>
double supervised_loss(const FeatureMap<T>* source_preds,
                       const std::vector<const MaskImage*>* source_masks,
                       const FeatureMap<T>* target_preds,
                       const std::vector<const MaskImage*>* target_masks) {
    if (!source_preds && !target_preds)
        throw InputError("supervised_loss: both batches absent");
    double loss = 0.0;
    if (source_preds) loss += seg_loss(*source_preds, *source_masks);
    if (target_preds) loss += seg_loss(*target_preds, *target_masks);
    return loss;
}

// ---------------------------------------------------------------------------
// Mean-square consistency between student and teacher probability maps.
// The teacher side is a constant: no gradient flows into it.
// ---------------------------------------------------------------------------

template <typename T>
double consistency_loss(const FeatureMap<T>& p_student,
                        const FeatureMap<T>& p_teacher,
                        FeatureMap<T>* dstudent = nullptr, double scale = 1.0) {
    if (!p_student.same_shape(p_teacher))
        throw InputError("consistency_loss: shape mismatch");
    const size_t m = p_student.size();
    const double inv_m = 1.0 / static_cast<double>(m);
    double acc = 0.0;
    for (size_t i = 0; i < m; ++i) {
        const double d = static_cast<double>(p_student.data[i]) -
                         static_cast<double>(p_teacher.data[i]);
        acc += d * d;
        if (dstudent)
            dstudent->data[i] += static_cast<T>(scale * 2.0 * d * inv_m);
    }
    return acc * inv_m;
}

// ---------------------------------------------------------------------------
// Cross-domain contrastive loss
// ---------------------------------------------------------------------------

template <typename T>
double cosine_sim(const T* a, const T* b, int dim) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < dim; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw NumericError("cosine_sim: zero-norm embedding");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

template <typename T>
double cosine_sim(const std::vector<T>& a, const std::vector<T>& b) {
    if (a.size() != b.size() || a.empty())
        throw InputError("cosine_sim: dimension mismatch");
    return cosine_sim(a.data(), b.data(), static_cast<int>(a.size()));
}

namespace lossdetail {

// -log softmax at the positive among {positive, negative1, negative2},
// logits = similarity / tau. dlogits, when given, receives the gradient.
inline double info_nce_3(double sim_pos, double sim_n1, double sim_n2,
                         double tau, double dlogits[3] = nullptr) {
    const double l0 = sim_pos / tau, l1 = sim_n1 / tau, l2 = sim_n2 / tau;
    const double mx = std::max(l0, std::max(l1, l2));
    const double e0 = std::exp(l0 - mx);
    const double e1 = std::exp(l1 - mx);
    const double e2 = std::exp(l2 - mx);
    const double z = e0 + e1 + e2;
    if (dlogits) {
        dlogits[0] = e0 / z - 1.0;
        dlogits[1] = e1 / z;
        dlogits[2] = e2 / z;
    }
    return -(std::log(e0) - std::log(z));
}

// d cosine(a,b)/da accumulated into da with weight w (and symmetrically db).
template <typename T>
void cosine_backward(const T* a, const T* b, int dim, double w, T* da, T* db) {
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int i = 0; i < dim; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na2 += static_cast<double>(a[i]) * a[i];
        nb2 += static_cast<double>(b[i]) * b[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double inv_nanb = 1.0 / (na * nb);
    const double sim = dot * inv_nanb;
    for (int i = 0; i < dim; ++i) {
        da[i] += static_cast<T>(w * (b[i] * inv_nanb - sim * a[i] / na2));
        db[i] += static_cast<T>(w * (a[i] * inv_nanb - sim * b[i] / nb2));
    }
}

}  // namespace lossdetail

template <typename T>
void check_embedding_batch(const Matrix<T>& m, const char* what) {
    if (m.rows <= 0 || m.cols <= 0)
        throw InputError(std::string("contrastive: empty embedding batch ") + what);
}

// Source-to-target direction: anchor g^S_i, positive g^T_j, negatives
// {g^T_i, g^S_j}. Averaged over the batch pairing (row k with row k).
template <typename T>
double contrastive_s2t(const Matrix<T>& g_s_i, const Matrix<T>& g_t_j,
                       const Matrix<T>& g_t_i, const Matrix<T>& g_s_j,
                       double tau) {
    if (tau <= 0.0) throw ParameterError("contrastive: tau must be positive");
    check_embedding_batch(g_s_i, "g_s_i");
    if (g_t_j.rows != g_s_i.rows || g_t_i.rows != g_s_i.rows ||
        g_s_j.rows != g_s_i.rows)
        throw InputError("contrastive: pair count mismatch");
    const int dim = g_s_i.cols;
    double acc = 0.0;
    for (int k = 0; k < g_s_i.rows; ++k) {
        const double sp = cosine_sim(g_s_i.row_ptr(k), g_t_j.row_ptr(k), dim);
        const double s1 = cosine_sim(g_s_i.row_ptr(k), g_t_i.row_ptr(k), dim);
        const double s2 = cosine_sim(g_s_i.row_ptr(k), g_s_j.row_ptr(k), dim);
        acc += lossdetail::info_nce_3(sp, s1, s2, tau);
    }
    return acc / g_s_i.rows;
}

// Target-to-source direction: anchor g^T_j, positive g^S_i, negatives
// {g^S_j, g^T_i}.
template <typename T>
double contrastive_t2s(const Matrix<T>& g_t_j, const Matrix<T>& g_s_i,
                       const Matrix<T>& g_s_j, const Matrix<T>& g_t_i,
                       double tau) {
    if (tau <= 0.0) throw ParameterError("contrastive: tau must be positive");
    check_embedding_batch(g_t_j, "g_t_j");
    if (g_s_i.rows != g_t_j.rows || g_s_j.rows != g_t_j.rows ||
        g_t_i.rows != g_t_j.rows)
        throw InputError("contrastive: pair count mismatch");
    const int dim = g_t_j.cols;
    double acc = 0.0;
    for (int k = 0; k < g_t_j.rows; ++k) {
        const double sp = cosine_sim(g_t_j.row_ptr(k), g_s_i.row_ptr(k), dim);
        const double s1 = cosine_sim(g_t_j.row_ptr(k), g_s_j.row_ptr(k), dim);
        const double s2 = cosine_sim(g_t_j.row_ptr(k), g_t_i.row_ptr(k), dim);
        acc += lossdetail::info_nce_3(sp, s1, s2, tau);
    }
    return acc / g_t_j.rows;
}

// Mean of the two directions. When the d* outputs are given, accumulates
// scale * dL/dg for each embedding batch.
template <typename T>
double contrastive_loss(const Matrix<T>& g_s_i, const Matrix<T>& g_t_i,
                        const Matrix<T>& g_s_j, const Matrix<T>& g_t_j,
                        double tau, Matrix<T>* d_s_i = nullptr,
                        Matrix<T>* d_t_i = nullptr, Matrix<T>* d_s_j = nullptr,
                        Matrix<T>* d_t_j = nullptr, double scale = 1.0) {
    const double s2t = contrastive_s2t(g_s_i, g_t_j, g_t_i, g_s_j, tau);
    const double t2s = contrastive_t2s(g_t_j, g_s_i, g_s_j, g_t_i, tau);
    if (d_s_i) {
        using lossdetail::cosine_backward;
        using lossdetail::info_nce_3;
        const int P = g_s_i.rows;
        const int dim = g_s_i.cols;
        const double w_pair = scale * 0.5 / static_cast<double>(P);
        for (int k = 0; k < P; ++k) {
            const T* si = g_s_i.row_ptr(k);
            const T* ti = g_t_i.row_ptr(k);
            const T* sj = g_s_j.row_ptr(k);
            const T* tj = g_t_j.row_ptr(k);
            T* dsi = d_s_i->row_ptr(k);
            T* dti = d_t_i->row_ptr(k);
            T* dsj = d_s_j->row_ptr(k);
            T* dtj = d_t_j->row_ptr(k);

            double dl[3];
            // s2t: anchor si; pairs (si,tj) (si,ti) (si,sj)
            info_nce_3(cosine_sim(si, tj, dim), cosine_sim(si, ti, dim),
                       cosine_sim(si, sj, dim), tau, dl);
            cosine_backward(si, tj, dim, w_pair * dl[0] / tau, dsi, dtj);
            cosine_backward(si, ti, dim, w_pair * dl[1] / tau, dsi, dti);
            cosine_backward(si, sj, dim, w_pair * dl[2] / tau, dsi, dsj);
            // t2s: anchor tj; pairs (tj,si) (tj,sj) (tj,ti)
            info_nce_3(cosine_sim(tj, si, dim), cosine_sim(tj, sj, dim),
                       cosine_sim(tj, ti, dim), tau, dl);
            cosine_backward(tj, si, dim, w_pair * dl[0] / tau, dtj, dsi);
            cosine_backward(tj, sj, dim, w_pair * dl[1] / tau, dtj, dsj);
            cosine_backward(tj, ti, dim, w_pair * dl[2] / tau, dtj, dti);
        }
    }
    return 0.5 * (s2t + t2s);
}

// ---------------------------------------------------------------------------
// Weighted total
// ---------------------------------------------------------------------------

struct LossBreakdown {
    double l_sup = 0.0;
    double l_unsup = 0.0;  // ramp-weighted consistency term
    double l_ct = 0.0;
    double total = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

inline LossBreakdown total_loss(double l_sup, double l_unsup, double l_ct,
                                double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw ParameterError("total_loss: weights must be non-negative");
    LossBreakdown b;
    b.l_sup = l_sup;
    b.l_unsup = l_unsup;
    b.l_ct = l_ct;
    b.lambda1 = lambda1;
    b.lambda2 = lambda2;
    b.total = l_sup + lambda1 * l_unsup + lambda2 * l_ct;
    return b;
}

}  // namespace cadaseg
