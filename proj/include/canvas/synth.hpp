#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "canvas/grid.hpp"
#include "canvas/image_io.hpp"
#include "canvas/rng.hpp"

namespace canvas {

enum class ShapeKind { Ellipse, Rectangle, Diamond };
enum class BackgroundKind { Solid, HGradient, Checker, Noise };

using Rgb = std::array<std::uint8_t, 3>;

struct ShapeSpec {
    ShapeKind kind = ShapeKind::Ellipse;
    double cx = 0.0;
    double cy = 0.0;
    double rx = 1.0;
    double ry = 1.0;
    Rgb color = {0, 0, 0};

    bool contains(double wx, double wy) const {
        const double dx = (wx - cx) / rx;
        const double dy = (wy - cy) / ry;
        switch (kind) {
            case ShapeKind::Ellipse: return dx * dx + dy * dy <= 1.0;
            case ShapeKind::Rectangle: return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
            case ShapeKind::Diamond: return std::abs(dx) + std::abs(dy) <= 1.0;
        }
        return false;
    }
};

/// A scene is a pure function of world coordinates: rendering a larger canvas,
/// an offset window, or a finer scale never changes what any world point shows.
struct SceneSpec {
    int base_width = 0;
    int base_height = 0;
    BackgroundKind background = BackgroundKind::Solid;
    Rgb bg_a = {255, 255, 255};
    Rgb bg_b = {255, 255, 255};
    double checker_cell = 8.0;
    double noise_cell = 2.0;
    std::uint64_t noise_key = 0;
    std::vector<ShapeSpec> products;
};

namespace detail {

inline std::uint8_t lerp_channel(std::uint8_t a, std::uint8_t b, double t) {
    return static_cast<std::uint8_t>(std::lround(double(a) + t * (double(b) - double(a))));
}

inline std::uint64_t cell_hash(std::uint64_t key, double wx, double wy, double cell) {
    const auto cx = static_cast<std::int64_t>(std::floor(wx / cell));
    const auto cy = static_cast<std::int64_t>(std::floor(wy / cell));
    std::uint64_t h = mix64(key ^ 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(cx));
    h = mix64(h ^ static_cast<std::uint64_t>(cy));
    return h;
}

}  // namespace detail

inline Rgb background_at(const SceneSpec& s, double wx, double wy) {
    switch (s.background) {
        case BackgroundKind::Solid: return s.bg_a;
        case BackgroundKind::HGradient: {
            double t = wx / double(s.base_width);
            t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
            return {detail::lerp_channel(s.bg_a[0], s.bg_b[0], t),
                    detail::lerp_channel(s.bg_a[1], s.bg_b[1], t),
                    detail::lerp_channel(s.bg_a[2], s.bg_b[2], t)};
        }
        case BackgroundKind::Checker: {
            const auto cx = static_cast<std::int64_t>(std::floor(wx / s.checker_cell));
            const auto cy = static_cast<std::int64_t>(std::floor(wy / s.checker_cell));
            return ((cx + cy) & 1) == 0 ? s.bg_a : s.bg_b;
        }
        case BackgroundKind::Noise: {
            const std::uint64_t h = detail::cell_hash(s.noise_key, wx, wy, s.noise_cell);
            const double t = double(h >> 11) * 0x1.0p-53;
            return {detail::lerp_channel(s.bg_a[0], s.bg_b[0], t),
                    detail::lerp_channel(s.bg_a[1], s.bg_b[1], t),
                    detail::lerp_channel(s.bg_a[2], s.bg_b[2], t)};
        }
    }
    return s.bg_a;
}

/// Index of the topmost product covering a world point, or -1.
inline int product_at(const SceneSpec& s, double wx, double wy) {
    for (int i = static_cast<int>(s.products.size()) - 1; i >= 0; --i)
        if (s.products[std::size_t(i)].contains(wx, wy)) return i;
    return -1;
}

enum class RenderMode { Scene, OnWhite, Mask };

/// Renders a width x height window whose pixel (x, y) samples the world point
/// (origin_x + (x + 0.5) / scale, origin_y + (y + 0.5) / scale).
inline ImageU8 render_scene(const SceneSpec& s, int width, int height, double origin_x,
                            double origin_y, int scale, RenderMode mode) {
    if (scale < 1) throw std::invalid_argument("render_scene: scale < 1");
    const int channels = (mode == RenderMode::Mask) ? 1 : 3;
    ImageU8 img(width, height, channels);
    for (int y = 0; y < height; ++y) {
        const double wy = origin_y + (y + 0.5) / double(scale);
        for (int x = 0; x < width; ++x) {
            const double wx = origin_x + (x + 0.5) / double(scale);
            const int hit = product_at(s, wx, wy);
            if (mode == RenderMode::Mask) {
                img.at(x, y, 0) = hit >= 0 ? 255 : 0;
                continue;
            }
            Rgb px;
            if (hit >= 0) {
                px = s.products[std::size_t(hit)].color;
            } else if (mode == RenderMode::OnWhite) {
                px = {255, 255, 255};
            } else {
                px = background_at(s, wx, wy);
            }
            img.at(x, y, 0) = px[0];
            img.at(x, y, 1) = px[1];
            img.at(x, y, 2) = px[2];
        }
    }
    return img;
}

inline ImageU8 render_base(const SceneSpec& s, RenderMode mode, int scale = 1) {
    return render_scene(s, s.base_width * scale, s.base_height * scale, 0.0, 0.0, scale, mode);
}

struct NamedColor {
    const char* name;
    Rgb rgb;
};

inline const std::vector<NamedColor>& product_palette() {
    static const std::vector<NamedColor> palette = {
        {"red", {200, 48, 48}},    {"green", {48, 176, 80}},  {"blue", {48, 88, 200}},
        {"yellow", {224, 200, 64}}, {"purple", {144, 64, 176}}, {"orange", {232, 144, 48}},
        {"teal", {48, 168, 168}},  {"brown", {136, 96, 56}},
    };
    return palette;
}

inline const char* shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Ellipse: return "ellipse";
        case ShapeKind::Rectangle: return "rectangle";
        case ShapeKind::Diamond: return "diamond";
    }
    return "shape";
}

struct ProductImage {
    SceneSpec spec;
    LatentGrid image;
    LatentGrid on_white;
    LatentGrid mask;
    std::string caption;
    std::string sample_id;
};

struct ProductGenConfig {
    int width = 48;
    int height = 48;
    double min_fraction = 0.05;
    double max_fraction = 0.60;
    bool solid_background_only = false;
};

namespace detail {

inline LatentGrid mask_to_grid(const ImageU8& mask) {
    LatentGrid g(1, mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) g.at(0, y, x) = mask.at(x, y) == 255 ? 1.0f : 0.0f;
    return g;
}

inline ShapeSpec draw_shape(int width, int height, RngStream& rng) {
    ShapeSpec sh;
    const int kind = rng.uniform_int(3);
    sh.kind = kind == 0 ? ShapeKind::Ellipse : (kind == 1 ? ShapeKind::Rectangle
                                                          : ShapeKind::Diamond);
    sh.color = product_palette()[std::size_t(rng.uniform_int(
                                     int(product_palette().size())))].rgb;
    sh.cx = (0.30 + 0.40 * rng.uniform()) * width;
    sh.cy = (0.30 + 0.40 * rng.uniform()) * height;
    const double span = double(std::min(width, height));
    sh.rx = (0.12 + 0.30 * rng.uniform()) * span;
    sh.ry = (0.12 + 0.30 * rng.uniform()) * span;
    return sh;
}

inline void draw_background(SceneSpec& s, RngStream& rng, bool solid_only) {
    const auto& palette = product_palette();
    const int kind = solid_only ? 0 : rng.uniform_int(4);
    s.background = kind == 0   ? BackgroundKind::Solid
                   : kind == 1 ? BackgroundKind::HGradient
                   : kind == 2 ? BackgroundKind::Checker
                               : BackgroundKind::Noise;
    const Rgb base = palette[std::size_t(rng.uniform_int(int(palette.size())))].rgb;
    for (int c = 0; c < 3; ++c)
        s.bg_a[std::size_t(c)] = static_cast<std::uint8_t>(128 + base[std::size_t(c)] / 2);
    const Rgb other = palette[std::size_t(rng.uniform_int(int(palette.size())))].rgb;
    for (int c = 0; c < 3; ++c)
        s.bg_b[std::size_t(c)] = static_cast<std::uint8_t>(96 + other[std::size_t(c)] / 2);
    s.checker_cell = 4.0 + 8.0 * rng.uniform();
    s.noise_key = rng.next_u64();
}

inline std::string color_name_of(const Rgb& rgb) {
    for (const auto& entry : product_palette())
        if (entry.rgb == rgb) return entry.name;
    return "colored";
}

}  // namespace detail

/// Draws scenes until the product mask lands inside the configured area band;
/// degenerate draws are regenerated and never returned.
inline ProductImage gen_product_image(const ProductGenConfig& cfg, RngStream& rng) {
    if (cfg.width < 4 || cfg.height < 4)
        throw std::invalid_argument("gen_product_image: frame too small");
    if (!(cfg.min_fraction > 0.0 && cfg.min_fraction < cfg.max_fraction &&
          cfg.max_fraction < 0.9))
        throw std::invalid_argument("gen_product_image: bad area band");

    for (int attempt = 0; attempt < 1000; ++attempt) {
        SceneSpec s;
        s.base_width = cfg.width;
        s.base_height = cfg.height;
        detail::draw_background(s, rng, cfg.solid_background_only);
        s.products.push_back(detail::draw_shape(cfg.width, cfg.height, rng));

        const ImageU8 mask = render_base(s, RenderMode::Mask);
        std::size_t inside = 0;
        for (std::uint8_t v : mask.data) inside += (v == 255);
        const double fraction = double(inside) / double(mask.data.size());
        if (fraction < cfg.min_fraction || fraction > cfg.max_fraction) continue;

        ProductImage p;
        p.spec = s;
        p.image = image_to_grid(render_base(s, RenderMode::Scene));
        p.on_white = image_to_grid(render_base(s, RenderMode::OnWhite));
        p.mask = detail::mask_to_grid(mask);
        p.caption = std::string("a ") + detail::color_name_of(s.products[0].color) + " " +
                    shape_name(s.products[0].kind);
        char id[32];
        std::snprintf(id, sizeof(id), "prod-%016llx",
                      static_cast<unsigned long long>(rng.child(0x6964).next_u64()));
        p.sample_id = id;
        return p;
    }
    throw std::runtime_error("gen_product_image: no draw satisfied the area band");
}

/// Toy embedder: 4x4 average pool per channel, flattened and L2-normalized.
inline std::vector<double> embed_image(const LatentGrid& img) {
    constexpr int kPool = 4;
    std::vector<double> v(std::size_t(img.channels) * kPool * kPool, 0.0);
    std::vector<double> counts(v.size(), 0.0);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y) {
            const int py = std::min(kPool - 1, y * kPool / img.height);
            for (int x = 0; x < img.width; ++x) {
                const int px = std::min(kPool - 1, x * kPool / img.width);
                const std::size_t i = std::size_t((c * kPool + py) * kPool + px);
                v[i] += img.at(c, y, x);
                counts[i] += 1.0;
            }
        }
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (counts[i] > 0.0) v[i] /= counts[i];
        norm_sq += v[i] * v[i];
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& x : v) x *= inv;
    }
    return v;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

}  // namespace canvas
