#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "canvas/condition.hpp"
#include "canvas/errors.hpp"
#include "canvas/model.hpp"
#include "canvas/rng.hpp"

namespace canvas {

struct OptimizerState {
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::optional<double> clip_norm;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    void require_valid() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            throw std::invalid_argument("OptimizerState: betas outside (0,1)");
        if (!(lr > 0.0) || !(eps > 0.0) || weight_decay < 0.0)
            throw std::invalid_argument("OptimizerState: bad hyperparameters");
        if (clip_norm && !(*clip_norm > 0.0))
            throw std::invalid_argument("OptimizerState: clip_norm must be positive");
    }
};

inline OptimizerState make_optimizer(const ModelParams& p, double lr, double weight_decay = 0.0,
                                     std::optional<double> clip_norm = std::nullopt) {
    OptimizerState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.clip_norm = clip_norm;
    s.m.resize(p.blocks.size());
    s.v.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        s.m[i].assign(p.blocks[i].numel(), 0.0f);
        s.v[i].assign(p.blocks[i].numel(), 0.0f);
    }
    s.require_valid();
    return s;
}

/// Global-norm clipping; a gradient at or under the limit passes through
/// untouched, anything larger is scaled onto the sphere of radius max_norm.
inline void clip_gradients(Grads& g, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm <= 0");
    const double norm = std::sqrt(g.sq_norm());
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& b : g.g)
        for (double& x : b) x *= scale;
}

/// Decoupled-weight-decay Adam with bias correction; persistent state stays in
/// 32-bit while the arithmetic runs in 64-bit, so a reloaded checkpoint
/// resumes bit-identically.
inline void adamw_step(OptimizerState& s, ModelParams& p, const Grads& g) {
    s.require_valid();
    if (s.m.size() != p.blocks.size() || g.g.size() != p.blocks.size())
        throw std::invalid_argument("adamw_step: state/gradient shape mismatch");
    for (const auto& b : g.g)
        for (double x : b)
            if (!std::isfinite(x))
                throw NumericDivergence("adamw_step: non-finite gradient",
                                        static_cast<int>(s.step));
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        auto& pv = p.blocks[bi].v;
        auto& mv = s.m[bi];
        auto& vv = s.v[bi];
        const auto& gv = g.g[bi];
        if (mv.size() != pv.size() || gv.size() != pv.size())
            throw std::invalid_argument("adamw_step: block size mismatch");
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double grad = gv[i];
            const double m = s.beta1 * static_cast<double>(mv[i]) + (1.0 - s.beta1) * grad;
            const double v = s.beta2 * static_cast<double>(vv[i]) + (1.0 - s.beta2) * grad * grad;
            mv[i] = static_cast<float>(m);
            vv[i] = static_cast<float>(v);
            const double m_hat = static_cast<double>(mv[i]) / bc1;
            const double v_hat = static_cast<double>(vv[i]) / bc2;
            const double param = static_cast<double>(pv[i]);
            pv[i] = static_cast<float>(param - s.lr * m_hat / (std::sqrt(v_hat) + s.eps) -
                                       s.lr * s.weight_decay * param);
        }
    }
}

struct EmaState {
    double decay = 0.99;
    std::vector<std::vector<float>> shadow;

    void require_valid() const {
        if (!(decay > 0.0 && decay < 1.0))
            throw std::invalid_argument("EmaState: decay outside (0,1)");
    }
};

inline EmaState make_ema(const ModelParams& p, double decay) {
    EmaState e;
    e.decay = decay;
    e.shadow.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i)
        e.shadow[i].assign(p.blocks[i].v.begin(), p.blocks[i].v.end());
    e.require_valid();
    return e;
}

/// shadow <- decay * shadow + (1 - decay) * p.
inline void ema_update(EmaState& e, const ModelParams& p) {
    e.require_valid();
    if (e.shadow.size() != p.blocks.size())
        throw std::invalid_argument("ema_update: shape mismatch");
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        auto& sv = e.shadow[bi];
        const auto& pv = p.blocks[bi].v;
        if (sv.size() != pv.size()) throw std::invalid_argument("ema_update: block mismatch");
        for (std::size_t i = 0; i < sv.size(); ++i)
            sv[i] = static_cast<float>(e.decay * static_cast<double>(sv[i]) +
                                       (1.0 - e.decay) * static_cast<double>(pv[i]));
    }
}

/// Copies EMA shadow weights into a params shell (the inference weights).
inline ModelParams ema_params(const EmaState& e, const ModelParams& p) {
    ModelParams out = p;
    if (e.shadow.size() != p.blocks.size())
        throw std::invalid_argument("ema_params: shape mismatch");
    for (std::size_t bi = 0; bi < out.blocks.size(); ++bi)
        out.blocks[bi].v.assign(e.shadow[bi].begin(), e.shadow[bi].end());
    return out;
}

/// True iff current > ratio * median(history). Even-sized windows use the
/// midpoint of the two central order statistics.
inline bool detect_loss_spike(const std::vector<double>& history, double current, double ratio) {
    if (history.empty()) throw std::invalid_argument("detect_loss_spike: empty history");
    std::vector<double> h = history;
    const std::size_t mid = h.size() / 2;
    std::nth_element(h.begin(), h.begin() + mid, h.end());
    double median = h[mid];
    if (h.size() % 2 == 0) {
        std::nth_element(h.begin(), h.begin() + mid - 1, h.begin() + mid);
        median = 0.5 * (median + h[mid - 1]);
    }
    return current > ratio * median;
}

/// Independently drops the text condition and the image references. Both
/// uniforms are always consumed so downstream draws stay aligned whatever the
/// probabilities are.
inline ConditionSet condition_dropout(const ConditionSet& c, double p_text, double p_image,
                                      RngStream& rng) {
    if (!(p_text >= 0.0 && p_text <= 1.0) || !(p_image >= 0.0 && p_image <= 1.0))
        throw std::invalid_argument("condition_dropout: probabilities outside [0,1]");
    const bool drop_text = rng.uniform() < p_text;
    const bool drop_image = rng.uniform() < p_image;
    ConditionSet out = c;
    if (drop_text) out.text = std::nullopt;
    if (drop_image) out.images.clear();
    return out;
}

}  // namespace canvas
