#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "canvas/rng.hpp"

namespace canvas {

/// Dense rank-3 real array (channels x height x width), the universal
/// image/latent carrier. Channel-major, row-major within a channel.
struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    LatentGrid() = default;

    LatentGrid(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(checked_size(c, h, w), fill) {}

    static std::size_t checked_size(int c, int h, int w) {
        if (c <= 0 || h <= 0 || w <= 0)
            throw std::invalid_argument("LatentGrid: non-positive dimensions");
        return static_cast<std::size_t>(c) * h * w;
    }

    std::size_t size() const noexcept { return data.size(); }

    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }

    float& at(int c, int y, int x) { return data[index(c, y, x)]; }
    float at(int c, int y, int x) const { return data[index(c, y, x)]; }

    bool same_shape(const LatentGrid& o) const noexcept {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool all_finite() const noexcept {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }
};

inline void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

inline bool grids_equal(const LatentGrid& a, const LatentGrid& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

inline LatentGrid grid_randn(int c, int h, int w, RngStream rng) {
    LatentGrid g(c, h, w);
    for (auto& v : g.data) v = rng.normal_f();
    return g;
}

/// Population mean / standard deviation over all elements, accumulated in
/// 64-bit as the oracle comparisons require.
inline double grid_mean(const LatentGrid& g) {
    double s = 0.0;
    for (float v : g.data) s += v;
    return s / static_cast<double>(g.data.size());
}

inline double grid_std(const LatentGrid& g) {
    double m = grid_mean(g);
    double s = 0.0;
    for (float v : g.data) {
        double d = v - m;
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(g.data.size()));
}

}  // namespace canvas
