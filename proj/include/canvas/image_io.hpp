#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "canvas/errors.hpp"
#include "canvas/grid.hpp"

namespace canvas {

/// Interleaved row-major 8-bit image; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;

    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), data(checked_size(w, h, c), fill) {}

    static std::size_t checked_size(int w, int h, int c) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("ImageU8: bad dimensions");
        return std::size_t(w) * std::size_t(h) * std::size_t(c);
    }

    std::size_t index(int x, int y, int c) const {
        return (std::size_t(y) * std::size_t(width) + std::size_t(x)) * std::size_t(channels) +
               std::size_t(c);
    }

    std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
};

inline bool images_equal(const ImageU8& a, const ImageU8& b) {
    return a.width == b.width && a.height == b.height && a.channels == b.channels &&
           a.data == b.data;
}

namespace detail {

/// Cursor over raw file bytes; every throw carries the offending byte offset.
struct PnmCursor {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    bool eof() const { return pos >= buf.size(); }

    void skip_header_space() {
        while (!eof()) {
            const std::uint8_t c = buf[pos];
            if (c == '#') {
                while (!eof() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                return;
            }
        }
    }

    int parse_uint(const char* what) {
        skip_header_space();
        if (eof()) throw ParseError(std::string("pnm: missing ") + what, pos);
        if (buf[pos] < '0' || buf[pos] > '9')
            throw ParseError(std::string("pnm: expected digit in ") + what, pos);
        long value = 0;
        while (!eof() && buf[pos] >= '0' && buf[pos] <= '9') {
            value = value * 10 + (buf[pos] - '0');
            if (value > 1000000) throw ParseError(std::string("pnm: oversized ") + what, pos);
            ++pos;
        }
        return static_cast<int>(value);
    }
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("pnm: cannot open " + path, 0);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ImageU8 parse_pnm(const std::vector<std::uint8_t>& bytes, char magic_digit, int channels) {
    PnmCursor cur{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != std::uint8_t(magic_digit))
        throw ParseError(std::string("pnm: expected magic P") + magic_digit, 0);
    cur.pos = 2;
    const int w = cur.parse_uint("width");
    const int h = cur.parse_uint("height");
    const int maxval = cur.parse_uint("maxval");
    if (w < 1 || h < 1) throw ParseError("pnm: non-positive dimensions", cur.pos);
    if (maxval != 255) throw ParseError("pnm: maxval must be 255", cur.pos);
    if (cur.eof() || (bytes[cur.pos] != '\n' && bytes[cur.pos] != ' ' && bytes[cur.pos] != '\t' &&
                      bytes[cur.pos] != '\r'))
        throw ParseError("pnm: missing whitespace after maxval", cur.pos);
    ++cur.pos;

    ImageU8 img(w, h, channels);
    if (bytes.size() - cur.pos < img.data.size())
        throw ParseError("pnm: truncated pixel data", bytes.size());
    if (bytes.size() - cur.pos > img.data.size())
        throw ParseError("pnm: trailing bytes after pixel data", cur.pos + img.data.size());
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos), bytes.end(),
              img.data.begin());
    return img;
}

inline void write_pnm(const std::string& path, const ImageU8& img, char magic_digit,
                      int channels) {
    if (img.channels != channels)
        throw std::invalid_argument("pnm: wrong channel count for format");
    if (img.data.size() != ImageU8::checked_size(img.width, img.height, img.channels))
        throw std::invalid_argument("pnm: data size does not match dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << 'P' << magic_digit << '\n'
        << img.width << ' ' << img.height << '\n'
        << "255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw std::runtime_error("pnm: short write to " + path);
}

}  // namespace detail

inline ImageU8 read_ppm(const std::string& path) {
    return detail::parse_pnm(detail::read_file_bytes(path), '6', 3);
}

inline ImageU8 read_pgm(const std::string& path) {
    return detail::parse_pnm(detail::read_file_bytes(path), '5', 1);
}

inline void write_ppm(const std::string& path, const ImageU8& img) {
    detail::write_pnm(path, img, '6', 3);
}

inline void write_pgm(const std::string& path, const ImageU8& img) {
    detail::write_pnm(path, img, '5', 1);
}

/// Masks are strict two-level images: 0 outside, 255 inside.
inline void require_binary_mask(const ImageU8& mask) {
    if (mask.channels != 1) throw std::invalid_argument("mask: expected one channel");
    for (std::uint8_t v : mask.data)
        if (v != 0 && v != 255) throw std::invalid_argument("mask: values must be 0 or 255");
}

inline double mask_fraction(const ImageU8& mask) {
    require_binary_mask(mask);
    std::size_t inside = 0;
    for (std::uint8_t v : mask.data) inside += (v == 255);
    return double(inside) / double(mask.data.size());
}

/// Maps bytes to [0,1] floats, channel-major; the inverse rounds half away
/// from zero after clamping so every byte value round-trips exactly.
inline LatentGrid image_to_grid(const ImageU8& img) {
    LatentGrid g(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                g.at(c, y, x) = float(img.at(x, y, c)) / 255.0f;
    return g;
}

inline std::uint8_t unit_to_u8(float v) {
    if (!(v == v)) throw std::invalid_argument("unit_to_u8: NaN sample");
    const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<std::uint8_t>(std::lround(double(clamped) * 255.0));
}

inline ImageU8 grid_to_image(const LatentGrid& g) {
    if (g.channels != 1 && g.channels != 3)
        throw std::invalid_argument("grid_to_image: need 1 or 3 channels");
    ImageU8 img(g.width, g.height, g.channels);
    for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) img.at(x, y, c) = unit_to_u8(g.at(c, y, x));
    return img;
}

}  // namespace canvas
