#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "canvas/condition.hpp"
#include "canvas/errors.hpp"
#include "canvas/flow.hpp"
#include "canvas/grid.hpp"

namespace canvas {

enum class GuidanceVariant { None, Sequential, TextDrop, FullDrop };

inline const char* to_string(GuidanceVariant v) {
    switch (v) {
        case GuidanceVariant::None: return "none";
        case GuidanceVariant::Sequential: return "sequential";
        case GuidanceVariant::TextDrop: return "text_drop";
        case GuidanceVariant::FullDrop: return "full_drop";
    }
    throw std::logic_error("unreachable GuidanceVariant");
}

inline GuidanceVariant parse_guidance_variant(const std::string& s) {
    if (s == "none") return GuidanceVariant::None;
    if (s == "sequential") return GuidanceVariant::Sequential;
    if (s == "text_drop") return GuidanceVariant::TextDrop;
    if (s == "full_drop") return GuidanceVariant::FullDrop;
    throw ConfigError("unknown guidance variant: " + s);
}

struct GuidanceConfig {
    GuidanceVariant variant = GuidanceVariant::None;
    double s_image = 1.0;
    double s_text = 1.0;
    double s = 1.0;
    bool rescale = false;
    bool use_negative = false;

    void require_valid() const {
        if (!std::isfinite(s_image) || !std::isfinite(s_text) || !std::isfinite(s))
            throw std::invalid_argument("GuidanceConfig: non-finite scale");
        if (variant == GuidanceVariant::None && rescale)
            throw std::invalid_argument("GuidanceConfig: NONE excludes rescale");
    }

    static GuidanceConfig none() { return {}; }

    static GuidanceConfig sequential(double s_i, double s_t) {
        GuidanceConfig c;
        c.variant = GuidanceVariant::Sequential;
        c.s_image = s_i;
        c.s_text = s_t;
        return c;
    }

    static GuidanceConfig text_drop(double scale) {
        GuidanceConfig c;
        c.variant = GuidanceVariant::TextDrop;
        c.s = scale;
        return c;
    }

    static GuidanceConfig full_drop(double scale) {
        GuidanceConfig c;
        c.variant = GuidanceVariant::FullDrop;
        c.s = scale;
        return c;
    }
};

namespace detail {

/// w_a*a + w_b*b, evaluated so a weight of exactly 0 or 1 reproduces the
/// surviving operand bit-for-bit (float sums with a +0.0 term are exact).
inline LatentGrid affine2(double w_a, const LatentGrid& a, double w_b, const LatentGrid& b) {
    require_same_shape(a, b, "guidance combine");
    LatentGrid out = a;
    const float fa = static_cast<float>(w_a);
    const float fb = static_cast<float>(w_b);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = fa * a.data[i] + fb * b.data[i];
    return out;
}

inline LatentGrid affine3(double w_a, const LatentGrid& a, double w_b, const LatentGrid& b,
                          double w_c, const LatentGrid& c) {
    require_same_shape(a, b, "guidance combine");
    require_same_shape(a, c, "guidance combine");
    LatentGrid out = a;
    const float fa = static_cast<float>(w_a);
    const float fb = static_cast<float>(w_b);
    const float fc = static_cast<float>(w_c);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = fa * a.data[i] + fb * b.data[i] + fc * c.data[i];
    return out;
}

}  // namespace detail

/// e_uu + s_I*(e_ui - e_uu) + s_T*(e_ti - e_ui), computed in the equivalent
/// weighted form (1-s_I)*e_uu + (s_I-s_T)*e_ui + s_T*e_ti so the collapse
/// points (s_I = s_T = 1, and s_I = 1 reducing to text-drop) are exact.
inline LatentGrid guide_sequential(const LatentGrid& e_uu, const LatentGrid& e_ui,
                                   const LatentGrid& e_ti, double s_i, double s_t) {
    return detail::affine3(1.0 - s_i, e_uu, s_i - s_t, e_ui, s_t, e_ti);
}

/// e_ui + s*(e_ti - e_ui) as (1-s)*e_ui + s*e_ti.
inline LatentGrid guide_text_drop(const LatentGrid& e_ui, const LatentGrid& e_ti, double s) {
    return detail::affine2(1.0 - s, e_ui, s, e_ti);
}

/// e_uu + s*(e_ti - e_uu) as (1-s)*e_uu + s*e_ti.
inline LatentGrid guide_full_drop(const LatentGrid& e_uu, const LatentGrid& e_ti, double s) {
    return detail::affine2(1.0 - s, e_uu, s, e_ti);
}

/// Scales the guided output back to the conditional prediction's global
/// population std, countering CFG overexposure.
inline LatentGrid rescale_cfg(const LatentGrid& x_cfg, const LatentGrid& e_cond) {
    require_same_shape(x_cfg, e_cond, "rescale_cfg");
    const double std_cfg = grid_std(x_cfg);
    if (std_cfg <= 1e-8) throw DegenerateInput("rescale_cfg: std(x_cfg) vanishes");
    const double scale = grid_std(e_cond) / std_cfg;
    LatentGrid out = x_cfg;
    const float fs = static_cast<float>(scale);
    for (float& v : out.data) v *= fs;
    return out;
}

/// CFG decorator around a base field. Condition dropping replaces the text
/// slot with NULL (or with negative_text when use_negative is set) and clears
/// image references for the fully-unconditional pass. The base field must
/// outlive the wrapper.
class GuidedField : public VelocityField {
public:
    GuidedField(const VelocityField& base, GuidanceConfig cfg) : base_(&base), cfg_(cfg) {
        cfg_.require_valid();
    }

    const GuidanceConfig& config() const noexcept { return cfg_; }

protected:
    LatentGrid do_evaluate(const LatentGrid& z, double t, const ConditionSet& c) const override {
        switch (cfg_.variant) {
            case GuidanceVariant::None:
                return base_->evaluate(z, t, c);
            case GuidanceVariant::TextDrop: {
                const LatentGrid e_ui = base_->evaluate(z, t, dropped_text(c));
                const LatentGrid e_ti = base_->evaluate(z, t, c);
                return finish(guide_text_drop(e_ui, e_ti, cfg_.s), e_ti);
            }
            case GuidanceVariant::FullDrop: {
                const LatentGrid e_uu = base_->evaluate(z, t, dropped_text(c).without_images());
                const LatentGrid e_ti = base_->evaluate(z, t, c);
                return finish(guide_full_drop(e_uu, e_ti, cfg_.s), e_ti);
            }
            case GuidanceVariant::Sequential: {
                const LatentGrid e_uu = base_->evaluate(z, t, dropped_text(c).without_images());
                const LatentGrid e_ui = base_->evaluate(z, t, dropped_text(c));
                const LatentGrid e_ti = base_->evaluate(z, t, c);
                return finish(guide_sequential(e_uu, e_ui, e_ti, cfg_.s_image, cfg_.s_text), e_ti);
            }
        }
        throw std::logic_error("unreachable GuidanceVariant");
    }

private:
    ConditionSet dropped_text(const ConditionSet& c) const {
        return c.with_text(cfg_.use_negative ? c.negative_text : std::nullopt);
    }

    LatentGrid finish(LatentGrid x_cfg, const LatentGrid& e_cond) const {
        if (!cfg_.rescale) return x_cfg;
        return rescale_cfg(x_cfg, e_cond);
    }

    const VelocityField* base_;
    GuidanceConfig cfg_;
};

inline GuidanceConfig resolve_task_guidance(TaskKind task) {
    GuidanceConfig cfg;
    switch (task) {
        case TaskKind::GeneralEdit:
        case TaskKind::BackgroundOutpaint:
            cfg = GuidanceConfig::text_drop(7.0);
            cfg.rescale = true;
            cfg.use_negative = true;
            return cfg;
        case TaskKind::AspectRatioOutpaint:
            cfg = GuidanceConfig::full_drop(3.0);
            cfg.rescale = true;
            cfg.use_negative = false;
            return cfg;
        case TaskKind::SuperResolution:
            return GuidanceConfig::none();
    }
    throw std::logic_error("unreachable TaskKind");
}

}  // namespace canvas
