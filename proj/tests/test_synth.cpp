#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>

#include "canvas/synth.hpp"

using namespace canvas;

namespace {

SceneSpec busy_scene() {
    SceneSpec s;
    s.base_width = 32;
    s.base_height = 32;
    s.background = BackgroundKind::Checker;
    s.bg_a = {200, 200, 200};
    s.bg_b = {40, 40, 40};
    s.checker_cell = 5.0;
    ShapeSpec shape;
    shape.kind = ShapeKind::Ellipse;
    shape.cx = 14.0;
    shape.cy = 17.0;
    shape.rx = 6.0;
    shape.ry = 4.0;
    shape.color = {200, 48, 48};
    s.products.push_back(shape);
    return s;
}

}  // namespace

TEST_CASE("rendering is deterministic") {
    const SceneSpec s = busy_scene();
    const ImageU8 a = render_base(s, RenderMode::Scene);
    const ImageU8 b = render_base(s, RenderMode::Scene);
    REQUIRE(images_equal(a, b));
}

TEST_CASE("an offset window matches the corresponding region of the base render") {
    const SceneSpec s = busy_scene();
    const ImageU8 base = render_base(s, RenderMode::Scene);
    const ImageU8 window = render_scene(s, 10, 8, 7.0, 5.0, 1, RenderMode::Scene);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x)
            for (int c = 0; c < 3; ++c)
                REQUIRE(window.at(x, y, c) == base.at(7 + x, 5 + y, c));
}

TEST_CASE("a wider canvas leaves the original region untouched") {
    const SceneSpec s = busy_scene();
    const ImageU8 base = render_base(s, RenderMode::Scene);
    const ImageU8 wide = render_scene(s, 48, 32, 0.0, 0.0, 1, RenderMode::Scene);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c) REQUIRE(wide.at(x, y, c) == base.at(x, y, c));
}

TEST_CASE("scale-3 pixel centers hit the same world points as scale-1") {
    for (const auto bg : {BackgroundKind::Solid, BackgroundKind::HGradient,
                          BackgroundKind::Checker, BackgroundKind::Noise}) {
        SceneSpec s = busy_scene();
        s.background = bg;
        s.noise_key = 77;
        const ImageU8 base = render_base(s, RenderMode::Scene);
        const ImageU8 hi = render_base(s, RenderMode::Scene, 3);
        REQUIRE(hi.width == 96);
        REQUIRE(hi.height == 96);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c)
                    REQUIRE(hi.at(3 * x + 1, 3 * y + 1, c) == base.at(x, y, c));
    }
}

TEST_CASE("mask and on-white renders agree about product coverage") {
    const SceneSpec s = busy_scene();
    const ImageU8 scene = render_base(s, RenderMode::Scene);
    const ImageU8 white = render_base(s, RenderMode::OnWhite);
    const ImageU8 mask = render_base(s, RenderMode::Mask);
    std::size_t inside = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            if (mask.at(x, y) == 255) {
                ++inside;
                for (int c = 0; c < 3; ++c) {
                    REQUIRE(white.at(x, y, c) == s.products[0].color[std::size_t(c)]);
                    REQUIRE(scene.at(x, y, c) == s.products[0].color[std::size_t(c)]);
                }
            } else {
                REQUIRE(mask.at(x, y) == 0);
                REQUIRE(white.at(x, y, 0) == 255);
                REQUIRE(white.at(x, y, 1) == 255);
                REQUIRE(white.at(x, y, 2) == 255);
            }
        }
    REQUIRE(inside > 0);
    REQUIRE(inside < 32u * 32u);
}

TEST_CASE("checker parity flips across a cell boundary") {
    SceneSpec s;
    s.base_width = 16;
    s.base_height = 16;
    s.background = BackgroundKind::Checker;
    s.bg_a = {10, 10, 10};
    s.bg_b = {240, 240, 240};
    s.checker_cell = 8.0;
    REQUIRE(background_at(s, 0.5, 0.5) == s.bg_a);
    REQUIRE(background_at(s, 8.5, 0.5) == s.bg_b);
    REQUIRE(background_at(s, 8.5, 8.5) == s.bg_a);
}

TEST_CASE("gradient clamps outside the base width") {
    SceneSpec s;
    s.base_width = 10;
    s.base_height = 10;
    s.background = BackgroundKind::HGradient;
    s.bg_a = {0, 0, 0};
    s.bg_b = {200, 100, 50};
    REQUIRE(background_at(s, -5.0, 1.0) == s.bg_a);
    REQUIRE(background_at(s, 25.0, 1.0) == s.bg_b);
    REQUIRE(background_at(s, 5.0, 1.0) == Rgb{100, 50, 25});
}

TEST_CASE("later products render on top") {
    SceneSpec s;
    s.base_width = 8;
    s.base_height = 8;
    ShapeSpec lower;
    lower.kind = ShapeKind::Rectangle;
    lower.cx = lower.cy = 4.0;
    lower.rx = lower.ry = 3.0;
    lower.color = {10, 20, 30};
    ShapeSpec upper = lower;
    upper.rx = upper.ry = 1.0;
    upper.color = {200, 210, 220};
    s.products = {lower, upper};
    REQUIRE(product_at(s, 4.0, 4.0) == 1);
    REQUIRE(product_at(s, 1.6, 4.0) == 0);
    REQUIRE(product_at(s, 0.2, 0.2) == -1);
}

TEST_CASE("palette has eight distinct named colors") {
    const auto& palette = product_palette();
    REQUIRE(palette.size() == 8);
    std::set<std::string> names;
    std::set<std::array<std::uint8_t, 3>> colors;
    for (const auto& entry : palette) {
        names.insert(entry.name);
        colors.insert(entry.rgb);
    }
    REQUIRE(names.size() == 8);
    REQUIRE(colors.size() == 8);
}

TEST_CASE("generated products respect the area band and are reproducible") {
    ProductGenConfig cfg;
    cfg.width = 24;
    cfg.height = 24;

    RngStream root(404, {7});
    std::set<std::string> ids;
    for (int i = 0; i < 200; ++i) {
        RngStream rng = root.child(std::uint64_t(i));
        const ProductImage p = gen_product_image(cfg, rng);

        std::size_t inside = 0;
        for (float v : p.mask.data) {
            REQUIRE((v == 0.0f || v == 1.0f));
            inside += (v == 1.0f);
        }
        const double fraction = double(inside) / double(p.mask.data.size());
        REQUIRE(fraction >= cfg.min_fraction);
        REQUIRE(fraction <= cfg.max_fraction);

        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                if (p.mask.at(0, y, x) == 0.0f) {
                    REQUIRE(p.on_white.at(0, y, x) == 1.0f);
                    REQUIRE(p.on_white.at(1, y, x) == 1.0f);
                    REQUIRE(p.on_white.at(2, y, x) == 1.0f);
                } else {
                    for (int c = 0; c < 3; ++c)
                        REQUIRE(p.on_white.at(c, y, x) == p.image.at(c, y, x));
                }

        REQUIRE(p.caption.rfind("a ", 0) == 0);
        REQUIRE(p.sample_id.rfind("prod-", 0) == 0);
        ids.insert(p.sample_id);
    }
    REQUIRE(ids.size() == 200);

    RngStream again = root.child(13);
    RngStream memo = root.child(13);
    const ProductImage a = gen_product_image(cfg, again);
    const ProductImage b = gen_product_image(cfg, memo);
    REQUIRE(a.sample_id == b.sample_id);
    REQUIRE(a.caption == b.caption);
    REQUIRE(a.image.data == b.image.data);
    REQUIRE(a.mask.data == b.mask.data);
}

TEST_CASE("solid-only product generation keeps the background flat") {
    ProductGenConfig cfg;
    cfg.width = 16;
    cfg.height = 16;
    cfg.solid_background_only = true;
    RngStream rng(5, {2});
    const ProductImage p = gen_product_image(cfg, rng);
    REQUIRE(p.spec.background == BackgroundKind::Solid);
}

TEST_CASE("embedding of a constant image is uniform with unit norm") {
    LatentGrid img(3, 8, 8, 1.0f);
    const std::vector<double> e = embed_image(img);
    REQUIRE(e.size() == 48);
    double norm = 0.0;
    for (double v : e) {
        REQUIRE(v == Catch::Approx(e[0]));
        norm += v * v;
    }
    REQUIRE(norm == Catch::Approx(1.0));
}

TEST_CASE("cosine similarity fixtures") {
    LatentGrid red(3, 8, 8, 0.0f);
    LatentGrid blue(3, 8, 8, 0.0f);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            red.at(0, y, x) = 1.0f;
            blue.at(2, y, x) = 1.0f;
        }
    const auto er = embed_image(red);
    const auto eb = embed_image(blue);
    REQUIRE(cosine_similarity(er, er) == Catch::Approx(1.0));
    REQUIRE(cosine_similarity(er, eb) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE_THROWS_AS(cosine_similarity(er, std::vector<double>{1.0}), std::invalid_argument);
}
