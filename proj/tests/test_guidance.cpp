#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>

#include "canvas/errors.hpp"
#include "canvas/flow.hpp"
#include "canvas/guidance.hpp"
#include "canvas/grid.hpp"
#include "canvas/rng.hpp"
#include "canvas/schedule.hpp"

using namespace canvas;

namespace {

LatentGrid scalar_grid(float v) {
    LatentGrid g(1, 1, 1);
    g.data[0] = v;
    return g;
}

/// Base field returning a fixed scalar per conditioning combination, so the
/// wrapper's arithmetic can be checked against the hand fixtures.
FunctionField fixture_field(float e_uu, float e_ui, float e_ti) {
    return FunctionField([=](const LatentGrid& z, double, const ConditionSet& c) {
        LatentGrid out = z;
        float v = e_uu;
        if (c.text.has_value() && !c.images.empty()) v = e_ti;
        else if (!c.text.has_value() && !c.images.empty()) v = e_ui;
        std::fill(out.data.begin(), out.data.end(), v);
        return out;
    });
}

ConditionSet full_condition() {
    ConditionSet c;
    c.text = TokenSeq{5, 9};
    c.images.push_back(LatentGrid(1, 4, 4, 0.5f));
    return c;
}

}  // namespace

TEST_CASE("scalar guidance fixtures") {
    const LatentGrid uu = scalar_grid(0.0f), ui = scalar_grid(1.0f), ti = scalar_grid(3.0f);
    REQUIRE(guide_sequential(uu, ui, ti, 2.0, 1.5).data[0] == Catch::Approx(5.0));
    REQUIRE(guide_text_drop(scalar_grid(1.0f), scalar_grid(3.0f), 7.0).data[0] ==
            Catch::Approx(15.0));
    REQUIRE(guide_full_drop(scalar_grid(0.0f), scalar_grid(2.0f), 3.0).data[0] ==
            Catch::Approx(6.0));
}

TEST_CASE("all variants collapse to the conditional prediction at unit scale") {
    RngStream rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const LatentGrid uu = grid_randn(2, 3, 3, rng.child(3 * rep));
        const LatentGrid ui = grid_randn(2, 3, 3, rng.child(3 * rep + 1));
        const LatentGrid ti = grid_randn(2, 3, 3, rng.child(3 * rep + 2));
        REQUIRE(grids_equal(guide_sequential(uu, ui, ti, 1.0, 1.0), ti));
        REQUIRE(grids_equal(guide_text_drop(ui, ti, 1.0), ti));
        REQUIRE(grids_equal(guide_full_drop(uu, ti, 1.0), ti));
    }
}

TEST_CASE("zero scales return the unconditional operand") {
    RngStream rng(2);
    const LatentGrid uu = grid_randn(1, 2, 2, rng.child(0));
    const LatentGrid ui = grid_randn(1, 2, 2, rng.child(1));
    const LatentGrid ti = grid_randn(1, 2, 2, rng.child(2));
    REQUIRE(grids_equal(guide_sequential(uu, ui, ti, 0.0, 0.0), uu));
    REQUIRE(grids_equal(guide_text_drop(ui, ti, 0.0), ui));
    REQUIRE(grids_equal(guide_full_drop(uu, ti, 0.0), uu));
}

TEST_CASE("unit image scale reduces sequential to text-drop") {
    RngStream rng(3);
    for (double s_t : {0.0, 0.7, 1.0, 3.0, 7.0}) {
        const LatentGrid uu = grid_randn(1, 3, 3, rng.child(10));
        const LatentGrid ui = grid_randn(1, 3, 3, rng.child(11));
        const LatentGrid ti = grid_randn(1, 3, 3, rng.child(12));
        REQUIRE(grids_equal(guide_sequential(uu, ui, ti, 1.0, s_t),
                            guide_text_drop(ui, ti, s_t)));
    }
}

TEST_CASE("rescale restores the conditional std") {
    LatentGrid x(1, 1, 2), e(1, 1, 2);
    x.data = {2.0f, 4.0f};
    e.data = {1.0f, 2.0f};
    const LatentGrid out = rescale_cfg(x, e);
    REQUIRE(out.data[0] == Catch::Approx(1.0));
    REQUIRE(out.data[1] == Catch::Approx(2.0));

    RngStream rng(4);
    for (int rep = 0; rep < 1000; ++rep) {
        const LatentGrid xr = grid_randn(1, 4, 4, rng.child(2 * rep));
        const LatentGrid er = grid_randn(1, 4, 4, rng.child(2 * rep + 1));
        const LatentGrid r = rescale_cfg(xr, er);
        REQUIRE(std::abs(grid_std(r) - grid_std(er)) < 1e-6);
        std::size_t argmax_in = 0, argmax_out = 0;
        for (std::size_t i = 0; i < xr.data.size(); ++i) {
            if (xr.data[i] > xr.data[argmax_in]) argmax_in = i;
            if (r.data[i] > r.data[argmax_out]) argmax_out = i;
            REQUIRE(std::signbit(r.data[i]) == std::signbit(xr.data[i]));
        }
        REQUIRE(argmax_in == argmax_out);
    }
}

TEST_CASE("rescale on an identical pair is a no-op") {
    RngStream rng(5);
    const LatentGrid x = grid_randn(2, 4, 4, rng);
    REQUIRE(grids_equal(rescale_cfg(x, x), x));
}

TEST_CASE("rescale rejects a flat grid") {
    REQUIRE_THROWS_AS(rescale_cfg(LatentGrid(1, 2, 2, 3.0f), LatentGrid(1, 2, 2, 1.0f)),
                      DegenerateInput);
}

TEST_CASE("guided field reproduces the variant arithmetic") {
    const FunctionField base = fixture_field(0.0f, 1.0f, 3.0f);
    const ConditionSet c = full_condition();
    const LatentGrid z(1, 4, 4, 0.0f);

    GuidedField seq(base, GuidanceConfig::sequential(2.0, 1.5));
    REQUIRE(seq.evaluate(z, 0.5, c).data[0] == Catch::Approx(5.0));

    GuidedField td(base, GuidanceConfig::text_drop(7.0));
    REQUIRE(td.evaluate(z, 0.5, c).data[0] == Catch::Approx(15.0));

    GuidedField fd(base, GuidanceConfig::full_drop(3.0));
    REQUIRE(fd.evaluate(z, 0.5, full_condition()).data[0] == Catch::Approx(9.0));

    GuidedField none(base, GuidanceConfig::none());
    REQUIRE(none.evaluate(z, 0.5, c).data[0] == Catch::Approx(3.0));
}

TEST_CASE("forward-pass accounting per variant over a 50-step sample") {
    const LatentGrid init(1, 2, 2, 0.0f);
    const Schedule sched = make_schedule(50, ShiftFactor(1.0));
    const ConditionSet c = full_condition();

    auto count_for = [&](GuidanceConfig cfg) {
        const FunctionField base([](const LatentGrid& z, double, const ConditionSet&) {
            LatentGrid out = z;
            std::fill(out.data.begin(), out.data.end(), 0.0f);
            return out;
        });
        const GuidedField field(base, cfg);
        euler_sample(field, init, sched, c);
        return std::make_pair(base.eval_count(), field.eval_count());
    };

    auto [b_none, g_none] = count_for(GuidanceConfig::none());
    REQUIRE(b_none == 50);
    REQUIRE(g_none == 50);
    auto [b_td, g_td] = count_for(GuidanceConfig::text_drop(7.0));
    REQUIRE(b_td == 100);
    REQUIRE(g_td == 50);
    auto [b_fd, g_fd] = count_for(GuidanceConfig::full_drop(3.0));
    REQUIRE(b_fd == 100);
    auto [b_seq, g_seq] = count_for(GuidanceConfig::sequential(2.0, 1.5));
    REQUIRE(b_seq == 150);
    REQUIRE(3 * b_td == 2 * b_seq);
    (void)g_fd;
    (void)g_seq;
}

TEST_CASE("negative text substitutes into the dropped slot") {
    std::vector<std::optional<TokenSeq>> seen;
    const FunctionField spy([&](const LatentGrid& z, double, const ConditionSet& c) {
        seen.push_back(c.text);
        return z;
    });
    ConditionSet c = full_condition();
    c.negative_text = TokenSeq{77};

    GuidanceConfig cfg = GuidanceConfig::text_drop(7.0);
    cfg.use_negative = true;
    const GuidedField with_neg(spy, cfg);
    const LatentGrid z(1, 2, 2, 1.0f);
    with_neg.evaluate(z, 0.5, c);
    REQUIRE(seen.size() == 2);
    REQUIRE(seen[0] == TokenSeq{77});
    REQUIRE(seen[1] == TokenSeq{5, 9});

    seen.clear();
    cfg.use_negative = false;
    const GuidedField without_neg(spy, cfg);
    without_neg.evaluate(z, 0.5, c);
    REQUIRE(seen[0] == std::nullopt);
}

TEST_CASE("task presets") {
    for (TaskKind task : {TaskKind::GeneralEdit, TaskKind::BackgroundOutpaint}) {
        const GuidanceConfig cfg = resolve_task_guidance(task);
        REQUIRE(cfg.variant == GuidanceVariant::TextDrop);
        REQUIRE(cfg.s == 7.0);
        REQUIRE(cfg.rescale);
        REQUIRE(cfg.use_negative);
    }
    const GuidanceConfig aspect = resolve_task_guidance(TaskKind::AspectRatioOutpaint);
    REQUIRE(aspect.variant == GuidanceVariant::FullDrop);
    REQUIRE(aspect.s == 3.0);
    REQUIRE(aspect.rescale);
    REQUIRE(!aspect.use_negative);
    const GuidanceConfig sr = resolve_task_guidance(TaskKind::SuperResolution);
    REQUIRE(sr.variant == GuidanceVariant::None);
    REQUIRE(!sr.rescale);
}

TEST_CASE("config validation") {
    GuidanceConfig bad = GuidanceConfig::none();
    bad.rescale = true;
    REQUIRE_THROWS_AS(bad.require_valid(), std::invalid_argument);
    GuidanceConfig nan_scale = GuidanceConfig::text_drop(std::nan(""));
    REQUIRE_THROWS_AS(nan_scale.require_valid(), std::invalid_argument);
}
