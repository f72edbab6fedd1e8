#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/gemm.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

// ---------------------------------------------------------------------------
// Convolution (square kernel, stride 1, zero padding k/2) via im2col + GEMM.
// Weight layout (out, in, ky, kx) doubles as the GEMM A matrix: row = out
// channel, column = (in, ky, kx) in the same order im2col emits rows.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvWeight {
    int out_ch = 0;
    int in_ch = 0;
    int ksize = 0;
    std::vector<T> w;     // out*in*k*k
    std::vector<T> bias;  // empty when the conv is followed by normalization

    ConvWeight() = default;
    ConvWeight(int out, int in, int k, bool with_bias)
        : out_ch(out),
          in_ch(in),
          ksize(k),
          w(static_cast<size_t>(out) * in * k * k, T(0)) {
        if (with_bias) bias.assign(out, T(0));
    }
    size_t weight_count() const { return w.size(); }
};

template <typename T>
void im2col(const FeatureMap<T>& in, int k, std::vector<T>& col) {
    const int pad = k / 2;
    const size_t n = in.plane();
    col.assign(static_cast<size_t>(in.channels) * k * k * n, T(0));
    for (int c = 0; c < in.channels; ++c) {
        const T* src = in.channel_ptr(c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col.data() +
                         ((static_cast<size_t>(c) * k + ky) * k + kx) * n;
                const int dy = ky - pad, dx = kx - pad;
                for (int b = 0; b < in.batch; ++b) {
                    for (int y = 0; y < in.height; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= in.height) continue;
                        const int x_lo = std::max(0, -dx);
                        const int x_hi = std::min(in.width, in.width - dx);
                        if (x_lo >= x_hi) continue;
                        const T* s = src + (static_cast<size_t>(b) * in.height + sy) * in.width;
                        T* d = dst + (static_cast<size_t>(b) * in.height + y) * in.width;
                        std::memcpy(d + x_lo, s + x_lo + dx,
                                    static_cast<size_t>(x_hi - x_lo) * sizeof(T));
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_acc(const std::vector<T>& col, int k, FeatureMap<T>& out) {
    const int pad = k / 2;
    const size_t n = out.plane();
    for (int c = 0; c < out.channels; ++c) {
        T* dst = out.channel_ptr(c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col.data() +
                               ((static_cast<size_t>(c) * k + ky) * k + kx) * n;
                const int dy = ky - pad, dx = kx - pad;
                for (int b = 0; b < out.batch; ++b) {
                    for (int y = 0; y < out.height; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= out.height) continue;
                        const int x_lo = std::max(0, -dx);
                        const int x_hi = std::min(out.width, out.width - dx);
                        const T* s = src + (static_cast<size_t>(b) * out.height + y) * out.width;
                        T* d = dst + (static_cast<size_t>(b) * out.height + sy) * out.width;
                        for (int x = x_lo; x < x_hi; ++x) d[x + dx] += s[x];
                    }
                }
            }
        }
    }
}

template <typename T>
FeatureMap<T> conv_forward(const FeatureMap<T>& in, const ConvWeight<T>& cw,
                           std::vector<T>* col_cache = nullptr) {
    if (in.channels != cw.in_ch)
        throw ShapeError("conv: input channel mismatch");
    const size_t n = in.plane();
    FeatureMap<T> out(cw.out_ch, in.batch, in.height, in.width);
    if (cw.ksize == 1) {
        gemm_acc(cw.w.data(), in.data.data(), out.data.data(), cw.out_ch,
                 cw.in_ch, static_cast<int>(n));
    } else {
        std::vector<T> local;
        std::vector<T>& col = col_cache ? *col_cache : local;
        im2col(in, cw.ksize, col);
        gemm_acc(cw.w.data(), col.data(), out.data.data(), cw.out_ch,
                 cw.in_ch * cw.ksize * cw.ksize, static_cast<int>(n));
    }
    if (!cw.bias.empty()) {
        for (int o = 0; o < cw.out_ch; ++o) {
            T* dst = out.channel_ptr(o);
            const T b = cw.bias[o];
            for (size_t i = 0; i < n; ++i) dst[i] += b;
        }
    }
    return out;
}

// Backward: accumulates weight/bias gradients, returns input gradient.
// `in` must be the forward input (the column matrix is rebuilt from it).
template <typename T>
FeatureMap<T> conv_backward(const FeatureMap<T>& dy, const FeatureMap<T>& in,
                            const ConvWeight<T>& cw, std::vector<T>& dweight,
                            std::vector<T>& dbias) {
    const size_t n = in.plane();
    const int kk = cw.in_ch * cw.ksize * cw.ksize;
    if (dweight.size() != cw.w.size()) dweight.assign(cw.w.size(), T(0));
    FeatureMap<T> dx(cw.in_ch, in.batch, in.height, in.width);

    if (cw.ksize == 1) {
        gemm_abt_acc(dy.data.data(), in.data.data(), dweight.data(), cw.out_ch,
                     kk, static_cast<int>(n));
        gemm_atb_acc(cw.w.data(), dy.data.data(), dx.data.data(), cw.out_ch,
                     cw.in_ch, static_cast<int>(n));
    } else {
        std::vector<T> col;
        im2col(in, cw.ksize, col);
        gemm_abt_acc(dy.data.data(), col.data(), dweight.data(), cw.out_ch, kk,
                     static_cast<int>(n));
        std::vector<T> dcol(col.size(), T(0));
        gemm_atb_acc(cw.w.data(), dy.data.data(), dcol.data(), cw.out_ch, kk,
                     static_cast<int>(n));
        col2im_acc(dcol, cw.ksize, dx);
    }
    if (!cw.bias.empty()) {
        if (dbias.size() != cw.bias.size()) dbias.assign(cw.bias.size(), T(0));
        for (int o = 0; o < cw.out_ch; ++o) {
            const T* src = dy.channel_ptr(o);
            T acc = T(0);
            for (size_t i = 0; i < n; ++i) acc += src[i];
            dbias[o] += acc;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Pointwise and pooling layers
// ---------------------------------------------------------------------------

template <typename T>
FeatureMap<T> relu_forward(const FeatureMap<T>& in) {
    FeatureMap<T> out = in;
    for (T& v : out.data) v = std::max(v, T(0));
    return out;
}

template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& dy, const FeatureMap<T>& out) {
    FeatureMap<T> dx = dy;
    for (size_t i = 0; i < dx.size(); ++i)
        if (out.data[i] <= T(0)) dx.data[i] = T(0);
    return dx;
}

template <typename T>
FeatureMap<T> maxpool2_forward(const FeatureMap<T>& in,
                               std::vector<uint8_t>& argmax) {
    if (in.height % 2 != 0 || in.width % 2 != 0)
        throw ShapeError("maxpool2: spatial dims must be even");
    const int oh = in.height / 2, ow = in.width / 2;
    FeatureMap<T> out(in.channels, in.batch, oh, ow);
    argmax.assign(out.size(), 0);
    size_t oi = 0;
    for (int c = 0; c < in.channels; ++c)
        for (int b = 0; b < in.batch; ++b)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x, ++oi) {
                    T best = in.at(c, b, 2 * y, 2 * x);
                    uint8_t which = 0;
                    const T cands[3] = {in.at(c, b, 2 * y, 2 * x + 1),
                                        in.at(c, b, 2 * y + 1, 2 * x),
                                        in.at(c, b, 2 * y + 1, 2 * x + 1)};
                    for (uint8_t i = 0; i < 3; ++i)
                        if (cands[i] > best) {
                            best = cands[i];
                            which = static_cast<uint8_t>(i + 1);
                        }
                    out.data[oi] = best;
                    argmax[oi] = which;
                }
    return out;
}

template <typename T>
FeatureMap<T> maxpool2_backward(const FeatureMap<T>& dy,
                                const std::vector<uint8_t>& argmax, int in_h,
                                int in_w) {
    FeatureMap<T> dx(dy.channels, dy.batch, in_h, in_w);
    size_t oi = 0;
    for (int c = 0; c < dy.channels; ++c)
        for (int b = 0; b < dy.batch; ++b)
            for (int y = 0; y < dy.height; ++y)
                for (int x = 0; x < dy.width; ++x, ++oi) {
                    const uint8_t which = argmax[oi];
                    const int yy = 2 * y + (which >> 1);
                    const int xx = 2 * x + (which & 1);
                    dx.at(c, b, yy, xx) += dy.data[oi];
                }
    return dx;
}

// Half-pixel-centered bilinear x2 upsampling.
struct UpsampleTaps {
    std::vector<int> lo;      // lower source index per output coordinate
    std::vector<double> frac; // weight of the upper source index
};

inline UpsampleTaps upsample2_taps(int in_size) {
    UpsampleTaps t;
    const int out_size = in_size * 2;
    t.lo.resize(out_size);
    t.frac.resize(out_size);
    for (int o = 0; o < out_size; ++o) {
        double f = (o + 0.5) * 0.5 - 0.5;
        f = std::clamp(f, 0.0, static_cast<double>(in_size - 1));
        int lo = static_cast<int>(f);
        t.lo[o] = lo;
        t.frac[o] = f - lo;
    }
    return t;
}

template <typename T>
FeatureMap<T> upsample2_forward(const FeatureMap<T>& in) {
    const UpsampleTaps ty = upsample2_taps(in.height);
    const UpsampleTaps tx = upsample2_taps(in.width);
    FeatureMap<T> out(in.channels, in.batch, in.height * 2, in.width * 2);
    for (int c = 0; c < in.channels; ++c)
        for (int b = 0; b < in.batch; ++b)
            for (int y = 0; y < out.height; ++y) {
                const int y0 = ty.lo[y];
                const int y1 = std::min(y0 + 1, in.height - 1);
                const T wy = static_cast<T>(ty.frac[y]);
                for (int x = 0; x < out.width; ++x) {
                    const int x0 = tx.lo[x];
                    const int x1 = std::min(x0 + 1, in.width - 1);
                    const T wx = static_cast<T>(tx.frac[x]);
                    out.at(c, b, y, x) =
                        (T(1) - wy) * ((T(1) - wx) * in.at(c, b, y0, x0) +
                                       wx * in.at(c, b, y0, x1)) +
                        wy * ((T(1) - wx) * in.at(c, b, y1, x0) +
                              wx * in.at(c, b, y1, x1));
                }
            }
    return out;
}

template <typename T>
FeatureMap<T> upsample2_backward(const FeatureMap<T>& dy, int in_h, int in_w) {
    const UpsampleTaps ty = upsample2_taps(in_h);
    const UpsampleTaps tx = upsample2_taps(in_w);
    FeatureMap<T> dx(dy.channels, dy.batch, in_h, in_w);
    for (int c = 0; c < dy.channels; ++c)
        for (int b = 0; b < dy.batch; ++b)
            for (int y = 0; y < dy.height; ++y) {
                const int y0 = ty.lo[y];
                const int y1 = std::min(y0 + 1, in_h - 1);
                const T wy = static_cast<T>(ty.frac[y]);
                for (int x = 0; x < dy.width; ++x) {
                    const int x0 = tx.lo[x];
                    const int x1 = std::min(x0 + 1, in_w - 1);
                    const T wx = static_cast<T>(tx.frac[x]);
                    const T g = dy.at(c, b, y, x);
                    dx.at(c, b, y0, x0) += (T(1) - wy) * (T(1) - wx) * g;
                    dx.at(c, b, y0, x1) += (T(1) - wy) * wx * g;
                    dx.at(c, b, y1, x0) += wy * (T(1) - wx) * g;
                    dx.at(c, b, y1, x1) += wy * wx * g;
                }
            }
    return dx;
}

// Channel concatenation; channel-major layout makes this two block copies.
template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
    if (a.batch != b.batch || a.height != b.height || a.width != b.width)
        throw ShapeError("concat: spatial/batch mismatch");
    FeatureMap<T> out(a.channels + b.channels, a.batch, a.height, a.width);
    std::memcpy(out.data.data(), a.data.data(), a.size() * sizeof(T));
    std::memcpy(out.data.data() + a.size(), b.data.data(), b.size() * sizeof(T));
    return out;
}

template <typename T>
void split_channels(const FeatureMap<T>& dy, FeatureMap<T>& da,
                    FeatureMap<T>& db) {
    std::memcpy(da.data.data(), dy.data.data(), da.size() * sizeof(T));
    std::memcpy(db.data.data(), dy.data.data() + da.size(),
                db.size() * sizeof(T));
}

// ---------------------------------------------------------------------------
// Dense head pieces
// ---------------------------------------------------------------------------

// (C,B,H,W) -> (B x C) matrix of spatial means.
template <typename T>
Matrix<T> global_avg_pool(const FeatureMap<T>& in) {
    Matrix<T> out(in.batch, in.channels);
    const size_t hw = static_cast<size_t>(in.height) * in.width;
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (int c = 0; c < in.channels; ++c)
        for (int b = 0; b < in.batch; ++b) {
            const T* p = in.data.data() +
                         (static_cast<size_t>(c) * in.batch + b) * hw;
            T acc = T(0);
            for (size_t i = 0; i < hw; ++i) acc += p[i];
            out.at(b, c) = acc * inv;
        }
    return out;
}

template <typename T>
FeatureMap<T> global_avg_pool_backward(const Matrix<T>& dy, int h, int w) {
    FeatureMap<T> dx(dy.cols, dy.rows, h, w);
    const size_t hw = static_cast<size_t>(h) * w;
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (int c = 0; c < dy.cols; ++c)
        for (int b = 0; b < dy.rows; ++b) {
            T* p = dx.data.data() + (static_cast<size_t>(c) * dy.rows + b) * hw;
            const T g = dy.at(b, c) * inv;
            for (size_t i = 0; i < hw; ++i) p[i] = g;
        }
    return dx;
}

template <typename T>
struct LinearWeight {
    Matrix<T> w;          // out x in
    std::vector<T> bias;  // out

    LinearWeight() = default;
    LinearWeight(int out, int in) : w(out, in), bias(out, T(0)) {}
};

template <typename T>
Matrix<T> linear_forward(const Matrix<T>& x, const LinearWeight<T>& lw) {
    if (x.cols != lw.w.cols) throw ShapeError("linear: input width mismatch");
    Matrix<T> out(x.rows, lw.w.rows);
    gemm_abt_acc(x.data.data(), lw.w.data.data(), out.data.data(), x.rows,
                 lw.w.rows, x.cols);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += lw.bias[c];
    return out;
}

template <typename T>
Matrix<T> linear_backward(const Matrix<T>& dy, const Matrix<T>& x,
                          const LinearWeight<T>& lw, Matrix<T>& dweight,
                          std::vector<T>& dbias) {
    if (dweight.rows != lw.w.rows)
        dweight = Matrix<T>(lw.w.rows, lw.w.cols);
    if (dbias.size() != lw.bias.size()) dbias.assign(lw.bias.size(), T(0));
    gemm_atb_acc(dy.data.data(), x.data.data(), dweight.data.data(), dy.rows,
                 dy.cols, x.cols);
    for (int r = 0; r < dy.rows; ++r)
        for (int c = 0; c < dy.cols; ++c) dbias[c] += dy.at(r, c);
    Matrix<T> dx(x.rows, x.cols);
    gemm_acc(dy.data.data(), lw.w.data.data(), dx.data.data(), dy.rows,
             dy.cols, x.cols);
    return dx;
}

template <typename T>
Matrix<T> relu_forward(const Matrix<T>& in) {
    Matrix<T> out = in;
    for (T& v : out.data) v = std::max(v, T(0));
    return out;
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& dy, const Matrix<T>& out) {
    Matrix<T> dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i)
        if (out.data[i] <= T(0)) dx.data[i] = T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// Channel softmax
// ---------------------------------------------------------------------------

template <typename T>
FeatureMap<T> softmax_channels(const FeatureMap<T>& logits) {
    FeatureMap<T> out(logits.channels, logits.batch, logits.height,
                      logits.width);
    const size_t plane = logits.plane();
    for (size_t i = 0; i < plane; ++i) {
        T mx = logits.data[i];
        for (int c = 1; c < logits.channels; ++c)
            mx = std::max(mx, logits.data[c * plane + i]);
        T sum = T(0);
        for (int c = 0; c < logits.channels; ++c) {
            const T e = std::exp(logits.data[c * plane + i] - mx);
            out.data[c * plane + i] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (int c = 0; c < logits.channels; ++c) out.data[c * plane + i] *= inv;
    }
    return out;
}

// dL/dlogits from dL/dprobs for a channel softmax.
template <typename T>
FeatureMap<T> softmax_channels_backward(const FeatureMap<T>& dprobs,
                                        const FeatureMap<T>& probs) {
    FeatureMap<T> dz(probs.channels, probs.batch, probs.height, probs.width);
    const size_t plane = probs.plane();
    for (size_t i = 0; i < plane; ++i) {
        T dot = T(0);
        for (int c = 0; c < probs.channels; ++c)
            dot += probs.data[c * plane + i] * dprobs.data[c * plane + i];
        for (int c = 0; c < probs.channels; ++c)
            dz.data[c * plane + i] =
                probs.data[c * plane + i] * (dprobs.data[c * plane + i] - dot);
    }
    return dz;
}

}  // namespace cadaseg
