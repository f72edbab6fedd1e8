#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace cadaseg {

// Streaming SHA-1, used for content hashes of datasets and run inputs.
class Sha1 {
public:
    Sha1() { reset(); }

    void reset() {
        h_ = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
        buffer_len_ = 0;
        total_bits_ = 0;
    }

    void update(const void* data, size_t len) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        total_bits_ += static_cast<uint64_t>(len) * 8;
        while (len > 0) {
            size_t take = std::min(len, sizeof(buffer_) - buffer_len_);
            std::memcpy(buffer_ + buffer_len_, p, take);
            buffer_len_ += take;
            p += take;
            len -= take;
            if (buffer_len_ == sizeof(buffer_)) {
                process_block(buffer_);
                buffer_len_ = 0;
            }
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    template <typename T>
    void update_vector(const std::vector<T>& v) {
        update(v.data(), v.size() * sizeof(T));
    }

    std::string hex_digest() {
        Sha1 copy = *this;
        const uint64_t bits = copy.total_bits_;
        uint8_t trailer[72] = {0x80};
        size_t pad_len = (copy.buffer_len_ < 56) ? 56 - copy.buffer_len_
                                                 : 120 - copy.buffer_len_;
        for (int i = 0; i < 8; ++i)
            trailer[pad_len + i] = static_cast<uint8_t>(bits >> (56 - 8 * i));
        copy.update(trailer, pad_len + 8);

        static const char* hex = "0123456789abcdef";
        std::string out(40, '0');
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j) {
                uint8_t byte = static_cast<uint8_t>(copy.h_[i] >> (24 - 8 * j));
                out[i * 8 + j * 2] = hex[byte >> 4];
                out[i * 8 + j * 2 + 1] = hex[byte & 0xF];
            }
        return out;
    }

private:
    static uint32_t rol(uint32_t v, int n) {
        return (v << n) | (v >> (32 - n));
    }

    void process_block(const uint8_t* block) {
        uint32_t w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = (uint32_t(block[i * 4]) << 24) |
                   (uint32_t(block[i * 4 + 1]) << 16) |
                   (uint32_t(block[i * 4 + 2]) << 8) | uint32_t(block[i * 4 + 3]);
        for (int i = 16; i < 80; ++i)
            w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

        uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
        for (int i = 0; i < 80; ++i) {
            uint32_t f, k;
            if (i < 20) {
                f = (b & c) | ((~b) & d);
                k = 0x5A827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            uint32_t tmp = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = tmp;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
    }

    std::array<uint32_t, 5> h_;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
    uint64_t total_bits_ = 0;
};

inline std::string sha1_hex(const void* data, size_t len) {
    Sha1 h;
    h.update(data, len);
    return h.hex_digest();
}

inline std::string sha1_hex(const std::string& s) {
    return sha1_hex(s.data(), s.size());
}

}  // namespace cadaseg
