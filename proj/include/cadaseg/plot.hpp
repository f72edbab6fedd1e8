#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/png_io.hpp"
#include "cadaseg/core/tensor.hpp"
#include "cadaseg/metrics.hpp"

namespace cadaseg {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

inline const std::array<Rgb, 8>& plot_palette() {
    static const std::array<Rgb, 8> palette = {{{31, 119, 180},
                                                {255, 127, 14},
                                                {44, 160, 44},
                                                {214, 39, 40},
                                                {148, 103, 189},
                                                {140, 86, 75},
                                                {227, 119, 194},
                                                {127, 127, 127}}};
    return palette;
}

namespace plotdetail {

// 5x7 bitmap glyphs, one byte per row, low 5 bits used.
inline const std::map<char, std::array<uint8_t, 7>>& font() {
    static const std::map<char, std::array<uint8_t, 7>> glyphs = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
        {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
        {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    return glyphs;
}

}  // namespace plotdetail

class Canvas {
public:
    Canvas(int width, int height, Rgb fill = {255, 255, 255})
        : width_(width), height_(height),
          rgb_(static_cast<size_t>(width) * height * 3) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) set(x, y, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
        const size_t i = (static_cast<size_t>(y) * width_ + x) * 3;
        rgb_[i] = c.r;
        rgb_[i + 1] = c.g;
        rgb_[i + 2] = c.b;
    }

    void fill_rect(int x0, int y0, int w, int h, Rgb c) {
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) set(x, y, c);
    }

    void line(int x0, int y0, int x1, int y1, Rgb c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void text(int x, int y, const std::string& s, Rgb c) {
        const auto& glyphs = plotdetail::font();
        int cx = x;
        for (char raw : s) {
            const char ch = static_cast<char>(
                raw >= 'a' && raw <= 'z' ? raw - 'a' + 'A' : raw);
            auto it = glyphs.find(ch);
            if (it != glyphs.end())
                for (int row = 0; row < 7; ++row)
                    for (int col = 0; col < 5; ++col)
                        if (it->second[row] & (1 << (4 - col)))
                            set(cx + col, y + row, c);
            cx += 6;
        }
    }

    static int text_width(const std::string& s) {
        return static_cast<int>(s.size()) * 6;
    }

    void save(const std::string& path) const {
        write_png(path, rgb_, width_, height_, 3);
    }

private:
    int width_, height_;
    std::vector<uint8_t> rgb_;
};

struct PlotSeries {
    std::string label;
    std::vector<double> xs, ys;
};

// Simple line plot with numeric tick labels and a legend.
inline void line_plot(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series) {
    const int W = 820, H = 520;
    const int ml = 70, mr = 20, mt = 30, mb = 45;
    Canvas canvas(W, H);

    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            x_lo = std::min(x_lo, s.xs[i]);
            x_hi = std::max(x_hi, s.xs[i]);
            y_lo = std::min(y_lo, s.ys[i]);
            y_hi = std::max(y_hi, s.ys[i]);
        }
    if (x_lo > x_hi) {
        x_lo = 0;
        x_hi = 1;
    }
    if (y_lo > y_hi) {
        y_lo = 0;
        y_hi = 1;
    }
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) y_hi = y_lo + 1;
    const double y_pad = 0.05 * (y_hi - y_lo);
    y_lo -= y_pad;
    y_hi += y_pad;

    auto px = [&](double x) {
        return ml + static_cast<int>((x - x_lo) / (x_hi - x_lo) * (W - ml - mr));
    };
    auto py = [&](double y) {
        return H - mb - static_cast<int>((y - y_lo) / (y_hi - y_lo) * (H - mt - mb));
    };

    const Rgb black{0, 0, 0}, grey{210, 210, 210};
    // grid + ticks
    char buf[32];
    for (int i = 0; i <= 5; ++i) {
        const double xv = x_lo + (x_hi - x_lo) * i / 5.0;
        const double yv = y_lo + (y_hi - y_lo) * i / 5.0;
        canvas.line(px(xv), mt, px(xv), H - mb, grey);
        canvas.line(ml, py(yv), W - mr, py(yv), grey);
        std::snprintf(buf, sizeof(buf), "%.4g", xv);
        canvas.text(px(xv) - Canvas::text_width(buf) / 2, H - mb + 8, buf, black);
        std::snprintf(buf, sizeof(buf), "%.4g", yv);
        canvas.text(ml - Canvas::text_width(buf) - 6, py(yv) - 3, buf, black);
    }
    canvas.line(ml, mt, ml, H - mb, black);
    canvas.line(ml, H - mb, W - mr, H - mb, black);
    canvas.text((W - Canvas::text_width(title)) / 2, 8, title, black);
    canvas.text(W - mr - Canvas::text_width(x_label), H - 14, x_label, black);
    canvas.text(6, mt - 12, y_label, black);

    for (size_t si = 0; si < series.size(); ++si) {
        const Rgb c = plot_palette()[si % plot_palette().size()];
        const auto& s = series[si];
        for (size_t i = 1; i < s.xs.size(); ++i)
            canvas.line(px(s.xs[i - 1]), py(s.ys[i - 1]), px(s.xs[i]), py(s.ys[i]), c);
        // legend
        const int ly = mt + 12 + static_cast<int>(si) * 14;
        canvas.fill_rect(W - mr - 150, ly, 10, 10, c);
        canvas.text(W - mr - 135, ly + 1, s.label, black);
    }
    canvas.save(path);
}

// Error overlay in the usual colors: true positives green, false negatives
// red, false positives orange, blended over the grayscale input, with the
// predicted boundary drawn solid.
inline void render_overlay(const std::string& path, const GrayImage& image,
                           const MaskImage& pred, const MaskImage& gt) {
    if (!pred.same_shape(gt) || pred.rows != image.rows || pred.cols != image.cols)
        throw InputError("overlay: shape mismatch");
    Canvas canvas(image.cols, image.rows);
    const Rgb green{40, 200, 60}, red{220, 40, 40}, orange{255, 150, 30};
    for (int y = 0; y < image.rows; ++y)
        for (int x = 0; x < image.cols; ++x) {
            const uint8_t v = static_cast<uint8_t>(
                std::clamp(image.at(y, x), 0.0, 1.0) * 255.0);
            Rgb c{v, v, v};
            const bool p = pred.at(y, x) != 0;
            const bool g = gt.at(y, x) != 0;
            auto blend = [&](Rgb t) {
                c.r = static_cast<uint8_t>((c.r + 2 * t.r) / 3);
                c.g = static_cast<uint8_t>((c.g + 2 * t.g) / 3);
                c.b = static_cast<uint8_t>((c.b + 2 * t.b) / 3);
            };
            if (p && g)
                blend(green);
            else if (!p && g)
                blend(red);
            else if (p && !g)
                blend(orange);
            canvas.set(x, y, c);
        }
    for (const auto& [y, x] : metricdetail::boundary_pixels(pred))
        canvas.set(x, y, Rgb{255, 255, 255});
    canvas.save(path);
}

}  // namespace cadaseg
