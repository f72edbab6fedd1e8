#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cadaseg/core/error.hpp"
#include "cadaseg/core/tensor.hpp"

namespace cadaseg {

// Minimal PNG reader/writer on top of zlib. Supports the subset this
// project emits and ingests: 8/16-bit grayscale, 8-bit RGB and RGBA,
// non-interlaced. Extra channels are collapsed on read (RGB -> luma,
// alpha dropped); 16-bit samples are truncated to their high byte.

namespace pngdetail {

inline uint32_t crc32_of(const uint8_t* data, size_t len, uint32_t seed = 0) {
    return static_cast<uint32_t>(
        ::crc32(seed, reinterpret_cast<const Bytef*>(data),
                static_cast<uInt>(len)));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t get_u32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
           (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void append_chunk(std::vector<uint8_t>& out, const char type[5],
                         const std::vector<uint8_t>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32_of(out.data() + crc_start, out.size() - crc_start);
    put_u32(out, crc);
}

inline std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png: zlib compression failed");
    out.resize(bound);
    return out;
}

inline std::vector<uint8_t> zlib_decompress(const std::vector<uint8_t>& comp,
                                            size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf out_len = static_cast<uLongf>(expected);
    int rc = uncompress(out.data(), &out_len, comp.data(),
                        static_cast<uLong>(comp.size()));
    if (rc != Z_OK || out_len != expected)
        throw IoError("png: zlib decompression failed");
    return out;
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace pngdetail

// channels: 1 (gray) or 3 (rgb). pixels laid out row-major, interleaved.
inline void write_png(const std::string& path, const std::vector<uint8_t>& pixels,
                      int width, int height, int channels) {
    using namespace pngdetail;
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
        throw ParameterError("write_png: bad dimensions or channel count");
    if (pixels.size() != static_cast<size_t>(width) * height * channels)
        throw ParameterError("write_png: pixel buffer size mismatch");

    // Filter type 0 (none) on every scanline; synthetic content compresses
    // fine without smarter filtering and the output stays deterministic.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + width * channels));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        const uint8_t* row = pixels.data() + static_cast<size_t>(y) * width * channels;
        raw.insert(raw.end(), row, row + static_cast<size_t>(width) * channels);
    }

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    out.insert(out.end(), sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(width));
    put_u32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);            // color type
    ihdr.push_back(0);                                // compression
    ihdr.push_back(0);                                // filter
    ihdr.push_back(0);                                // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_compress(raw));
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_png: write failed for " + path);
}

struct PngImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> gray;  // collapsed to one byte per pixel
};

// How to collapse color images to a single channel.
enum class ChannelCollapse { Luma, Green };

inline PngImage read_png(const std::string& path,
                         ChannelCollapse collapse = ChannelCollapse::Luma) {
    using namespace pngdetail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_png: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw IoError("read_png: not a PNG file: " + path);

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size())
            throw IoError("read_png: truncated chunk in " + path);
        std::string type(reinterpret_cast<const char*>(buf.data() + pos + 4), 4);
        const uint8_t* payload = buf.data() + pos + 8;
        if (type == "IHDR") {
            width = static_cast<int>(get_u32(payload));
            height = static_cast<int>(get_u32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0)
                throw IoError("read_png: interlaced PNG unsupported: " + path);
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0)
        throw IoError("read_png: missing IHDR in " + path);

    int samples;
    switch (color_type) {
        case 0: samples = 1; break;  // gray
        case 2: samples = 3; break;  // rgb
        case 4: samples = 2; break;  // gray+alpha
        case 6: samples = 4; break;  // rgba
        default:
            throw IoError("read_png: palette PNG unsupported: " + path);
    }
    if (bit_depth != 8 && bit_depth != 16)
        throw IoError("read_png: unsupported bit depth in " + path);

    const int bytes_per_sample = bit_depth / 8;
    const size_t stride = static_cast<size_t>(width) * samples * bytes_per_sample;
    std::vector<uint8_t> raw =
        zlib_decompress(idat, static_cast<size_t>(height) * (stride + 1));

    // Undo scanline filters in place.
    const int bpp = samples * bytes_per_sample;
    std::vector<uint8_t> prev(stride, 0);
    PngImage img;
    img.width = width;
    img.height = height;
    img.gray.resize(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        uint8_t* line = raw.data() + static_cast<size_t>(y) * (stride + 1);
        const uint8_t filter = line[0];
        uint8_t* cur = line + 1;
        for (size_t i = 0; i < stride; ++i) {
            const int a = (i >= static_cast<size_t>(bpp)) ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = (i >= static_cast<size_t>(bpp)) ? prev[i - bpp] : 0;
            int add;
            switch (filter) {
                case 0: add = 0; break;
                case 1: add = a; break;
                case 2: add = b; break;
                case 3: add = (a + b) / 2; break;
                case 4: add = paeth(a, b, c); break;
                default:
                    throw IoError("read_png: bad filter byte in " + path);
            }
            cur[i] = static_cast<uint8_t>((cur[i] + add) & 0xFF);
        }
        std::memcpy(prev.data(), cur, stride);

        for (int x = 0; x < width; ++x) {
            const uint8_t* px = cur + static_cast<size_t>(x) * bpp;
            uint8_t v;
            if (samples >= 3) {
                int r = px[0], g = px[bytes_per_sample], b2 = px[2 * bytes_per_sample];
                if (collapse == ChannelCollapse::Green)
                    v = static_cast<uint8_t>(g);
                else  // integer Rec.601 luma
                    v = static_cast<uint8_t>((299 * r + 587 * g + 114 * b2) / 1000);
            } else {
                v = px[0];  // high byte for 16-bit
            }
            img.gray[static_cast<size_t>(y) * width + x] = v;
        }
    }
    return img;
}

}  // namespace cadaseg
