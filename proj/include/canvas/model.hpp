#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "canvas/condition.hpp"
#include "canvas/flow.hpp"
#include "canvas/grid.hpp"
#include "canvas/rng.hpp"
#include "canvas/schedule.hpp"

namespace canvas {

/// Reference images are zero-padded to this channel count before patching so
/// grayscale, RGB, and RGB+mask references share one patch projection.
inline constexpr int kPatchChannels = 4;

struct ModelConfig {
    int channels = 3;
    int height = 8;
    int width = 8;
    int d_emb = 16;
    int d_time = 8;
    int d_hidden = 48;
    int vocab = 257;
    int patch = 4;
    double gamma = 0.75;

    int d_cond() const { return d_time + d_emb; }
    int flat() const { return channels * height * width; }
    int patch_dim() const { return kPatchChannels * patch * patch; }

    void require_valid() const {
        if (channels < 1 || height < 1 || width < 1)
            throw std::invalid_argument("ModelConfig: non-positive resolution");
        if (d_emb < 1 || d_hidden < 1 || patch < 1 || vocab < 2)
            throw std::invalid_argument("ModelConfig: bad dimensions");
        if (d_time < 2 || d_time % 2 != 0)
            throw std::invalid_argument("ModelConfig: d_time must be even and >= 2");
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("ModelConfig: gamma outside (0,1]");
    }

    std::uint64_t arch_hash() const {
        std::uint64_t h = detail::mix64(0x43564d31ULL);
        for (int v : {channels, height, width, d_emb, d_time, d_hidden, vocab, patch})
            h = detail::mix64(h ^ static_cast<std::uint64_t>(v));
        h = detail::mix64(h ^ static_cast<std::uint64_t>(gamma * 65536.0));
        return h;
    }
};

/// Parameter block ids in checkpoint order. Blocks marked shared survive a
/// resolution change between training stages; the rest are re-instantiated.
enum BlockId : int {
    kTokenTable = 0,
    kPatchW,
    kPatchB,
    kWIn,
    kBIn,
    kWMid,
    kBMid,
    kWOut,
    kBOut,
    kWCond,
    kBCond,
    kNumBlocks,
};

inline const char* block_name(int id) {
    switch (id) {
        case kTokenTable: return "token_table";
        case kPatchW: return "patch_w";
        case kPatchB: return "patch_b";
        case kWIn: return "w_in";
        case kBIn: return "b_in";
        case kWMid: return "w_mid";
        case kBMid: return "b_mid";
        case kWOut: return "w_out";
        case kBOut: return "b_out";
        case kWCond: return "w_cond";
        case kBCond: return "b_cond";
    }
    throw std::logic_error("bad block id");
}

inline bool block_is_shared(int id) {
    return id != kWIn && id != kBIn && id != kWOut && id != kBOut;
}

/// rows x cols row-major matrix block; biases use cols = 1.
template <typename T>
struct BlockT {
    int rows = 0;
    int cols = 1;
    std::vector<T> v;

    std::size_t numel() const { return v.size(); }
};

template <typename T>
struct ParamsT {
    ModelConfig cfg;
    std::vector<BlockT<T>> blocks;

    BlockT<T>& operator[](int id) { return blocks[static_cast<std::size_t>(id)]; }
    const BlockT<T>& operator[](int id) const { return blocks[static_cast<std::size_t>(id)]; }

    bool all_finite() const {
        for (const auto& b : blocks)
            for (T x : b.v)
                if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

using ModelParams = ParamsT<float>;

/// Per-block gradients, always accumulated in 64-bit.
struct Grads {
    std::vector<std::vector<double>> g;

    void zero() {
        for (auto& b : g) std::fill(b.begin(), b.end(), 0.0);
    }

    double sq_norm() const {
        double s = 0.0;
        for (const auto& b : g)
            for (double x : b) s += x * x;
        return s;
    }
};

namespace detail {

inline void block_shape(const ModelConfig& cfg, int id, int& rows, int& cols) {
    switch (id) {
        case kTokenTable: rows = cfg.vocab; cols = cfg.d_emb; return;
        case kPatchW: rows = cfg.d_emb; cols = cfg.patch_dim(); return;
        case kPatchB: rows = cfg.d_emb; cols = 1; return;
        case kWIn: rows = cfg.d_hidden; cols = cfg.flat() + cfg.d_cond(); return;
        case kBIn: rows = cfg.d_hidden; cols = 1; return;
        case kWMid: rows = cfg.d_hidden; cols = cfg.d_hidden; return;
        case kBMid: rows = cfg.d_hidden; cols = 1; return;
        case kWOut: rows = cfg.flat(); cols = cfg.d_hidden; return;
        case kBOut: rows = cfg.flat(); cols = 1; return;
        case kWCond: rows = cfg.channels; cols = cfg.d_cond(); return;
        case kBCond: rows = cfg.channels; cols = 1; return;
    }
    throw std::logic_error("bad block id");
}

template <typename T>
void init_block(BlockT<T>& b, int id, RngStream rng) {
    switch (id) {
        case kWOut:
        case kBOut:
        case kWCond:
        case kBCond:
        case kBIn:
        case kBMid:
        case kPatchB:
            std::fill(b.v.begin(), b.v.end(), T(0));
            return;
        default: {
            const double scale = (id == kTokenTable) ? 0.3 : 1.0 / std::sqrt(double(b.cols));
            for (auto& x : b.v) x = static_cast<T>(scale * rng.normal());
            return;
        }
    }
}

}  // namespace detail

template <typename T>
ParamsT<T> make_params_t(const ModelConfig& cfg, const RngStream& rng) {
    cfg.require_valid();
    ParamsT<T> p;
    p.cfg = cfg;
    p.blocks.resize(kNumBlocks);
    for (int id = 0; id < kNumBlocks; ++id) {
        auto& b = p.blocks[static_cast<std::size_t>(id)];
        detail::block_shape(cfg, id, b.rows, b.cols);
        b.v.assign(static_cast<std::size_t>(b.rows) * b.cols, T(0));
        detail::init_block(b, id, rng.child(static_cast<std::uint64_t>(id)));
    }
    return p;
}

inline ModelParams make_params(const ModelConfig& cfg, const RngStream& rng) {
    return make_params_t<float>(cfg, rng);
}

/// Carries shared blocks into a new resolution; input layer is re-drawn and
/// the output layers restart at zero, like the initial state.
template <typename T>
ParamsT<T> reinstantiate_resolution(const ParamsT<T>& p, int height, int width,
                                    const RngStream& rng) {
    ModelConfig cfg = p.cfg;
    cfg.height = height;
    cfg.width = width;
    ParamsT<T> out = make_params_t<T>(cfg, rng);
    for (int id = 0; id < kNumBlocks; ++id)
        if (block_is_shared(id)) out.blocks[std::size_t(id)] = p.blocks[std::size_t(id)];
    return out;
}

template <typename T>
Grads make_grads(const ParamsT<T>& p) {
    Grads g;
    g.g.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i) g.g[i].assign(p.blocks[i].numel(), 0.0);
    return g;
}

template <typename T>
ParamsT<double> to_double(const ParamsT<T>& p) {
    ParamsT<double> out;
    out.cfg = p.cfg;
    out.blocks.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        out.blocks[i].rows = p.blocks[i].rows;
        out.blocks[i].cols = p.blocks[i].cols;
        out.blocks[i].v.assign(p.blocks[i].v.begin(), p.blocks[i].v.end());
    }
    return out;
}

/// One entry of the encoded condition sequence: a text token id, or a patch
/// payload cut from a reference image.
struct EncodedToken {
    int text_id = -1;
    std::vector<float> patch;

    bool is_text() const { return text_id >= 0; }
};

/// [text tokens | patch tokens per reference, in list order]. NULL text
/// contributes the reserved null token; empty (non-null) text contributes
/// nothing, which keeps the two distinguishable downstream.
inline std::vector<EncodedToken> encode_conditions(const ConditionSet& c, int patch_size) {
    c.require_valid();
    if (patch_size < 1) throw std::invalid_argument("encode_conditions: patch_size < 1");
    std::vector<EncodedToken> seq;
    if (!c.text.has_value()) {
        EncodedToken tk;
        tk.text_id = kNullTokenId;
        seq.push_back(std::move(tk));
    } else {
        for (int id : *c.text) {
            EncodedToken tk;
            tk.text_id = id;
            seq.push_back(std::move(tk));
        }
    }
    const int P = patch_size;
    for (const LatentGrid& ref : c.images) {
        if (ref.channels > kPatchChannels)
            throw std::invalid_argument("encode_conditions: reference has more than 4 channels");
        const int ph = (ref.height + P - 1) / P;
        const int pw = (ref.width + P - 1) / P;
        for (int py = 0; py < ph; ++py) {
            for (int px = 0; px < pw; ++px) {
                EncodedToken tk;
                tk.patch.assign(static_cast<std::size_t>(kPatchChannels) * P * P, 0.0f);
                for (int ch = 0; ch < ref.channels; ++ch) {
                    for (int dy = 0; dy < P; ++dy) {
                        const int y = py * P + dy;
                        if (y >= ref.height) continue;
                        for (int dx = 0; dx < P; ++dx) {
                            const int x = px * P + dx;
                            if (x >= ref.width) continue;
                            tk.patch[std::size_t((ch * P + dy) * P + dx)] = ref.at(ch, y, x);
                        }
                    }
                }
                seq.push_back(std::move(tk));
            }
        }
    }
    return seq;
}

/// Forward-pass scratch kept for backprop.
struct Activations {
    std::vector<EncodedToken> tokens;
    std::vector<double> x;     // [flat z | time features | condition summary]
    std::vector<double> h1;    // tanh of input layer
    std::vector<double> h2;    // tanh of mid layer
    std::vector<double> gate;  // per-channel condition bias
};

namespace detail {

inline void time_features(double t, int d_time, double* out) {
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < d_time / 2; ++k) {
        const double w = pi * static_cast<double>(1 << k);
        out[2 * k] = std::sin(w * t);
        out[2 * k + 1] = std::cos(w * t);
    }
}

template <typename T>
void matvec(const BlockT<T>& m, const double* x, double* y) {
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const T* row = m.v.data() + static_cast<std::size_t>(i) * m.cols;
        for (int j = 0; j < m.cols; ++j) s += static_cast<double>(row[j]) * x[j];
        y[i] = s;
    }
}

template <typename T>
void matvec_t_acc(const BlockT<T>& m, const double* d, double* x_grad) {
    for (int i = 0; i < m.rows; ++i) {
        const T* row = m.v.data() + static_cast<std::size_t>(i) * m.cols;
        const double di = d[i];
        for (int j = 0; j < m.cols; ++j) x_grad[j] += static_cast<double>(row[j]) * di;
    }
}

inline void outer_acc(std::vector<double>& gw, int rows, int cols, const double* d,
                      const double* x) {
    for (int i = 0; i < rows; ++i) {
        double* row = gw.data() + static_cast<std::size_t>(i) * cols;
        const double di = d[i];
        for (int j = 0; j < cols; ++j) row[j] += di * x[j];
    }
}

}  // namespace detail

/// Velocity prediction in 64-bit. Layout: the flattened latent, sinusoidal
/// time features, and a gamma-discounted sum of condition-token embeddings run
/// through a 3-layer tanh MLP; a separate linear head on the non-latent part
/// adds a per-channel bias, so condition knowledge transfers across stages.
template <typename T>
std::vector<double> forward_raw(const ParamsT<T>& p, const LatentGrid& z, double t,
                                const ConditionSet& c, Activations* acts) {
    const ModelConfig& cfg = p.cfg;
    require_timestep(t);
    if (z.channels != cfg.channels || z.height != cfg.height || z.width != cfg.width)
        throw std::invalid_argument("forward: latent shape " + z.shape_str() +
                                    " does not match configured resolution");
    Activations local;
    Activations& A = acts ? *acts : local;

    A.tokens = encode_conditions(c, cfg.patch);
    const int flat = cfg.flat();
    const int d_cond = cfg.d_cond();
    A.x.assign(static_cast<std::size_t>(flat) + d_cond, 0.0);
    for (int i = 0; i < flat; ++i) A.x[std::size_t(i)] = static_cast<double>(z.data[std::size_t(i)]);
    detail::time_features(t, cfg.d_time, A.x.data() + flat);

    double* cond_sum = A.x.data() + flat + cfg.d_time;
    double coeff = 1.0;
    std::vector<double> patch_emb(static_cast<std::size_t>(cfg.d_emb));
    for (const EncodedToken& tk : A.tokens) {
        if (tk.is_text()) {
            if (tk.text_id >= cfg.vocab)
                throw std::invalid_argument("forward: token id outside vocabulary");
            const T* row = p[kTokenTable].v.data() +
                           static_cast<std::size_t>(tk.text_id) * cfg.d_emb;
            for (int k = 0; k < cfg.d_emb; ++k) cond_sum[k] += coeff * static_cast<double>(row[k]);
        } else {
            if (static_cast<int>(tk.patch.size()) != cfg.patch_dim())
                throw std::invalid_argument("forward: malformed patch token");
            std::vector<double> pv(tk.patch.begin(), tk.patch.end());
            detail::matvec(p[kPatchW], pv.data(), patch_emb.data());
            for (int k = 0; k < cfg.d_emb; ++k)
                cond_sum[k] += coeff * (patch_emb[std::size_t(k)] +
                                        static_cast<double>(p[kPatchB].v[std::size_t(k)]));
        }
        coeff *= cfg.gamma;
    }

    A.h1.assign(static_cast<std::size_t>(cfg.d_hidden), 0.0);
    detail::matvec(p[kWIn], A.x.data(), A.h1.data());
    for (int i = 0; i < cfg.d_hidden; ++i)
        A.h1[std::size_t(i)] = std::tanh(A.h1[std::size_t(i)] +
                                         static_cast<double>(p[kBIn].v[std::size_t(i)]));

    A.h2.assign(static_cast<std::size_t>(cfg.d_hidden), 0.0);
    detail::matvec(p[kWMid], A.h1.data(), A.h2.data());
    for (int i = 0; i < cfg.d_hidden; ++i)
        A.h2[std::size_t(i)] = std::tanh(A.h2[std::size_t(i)] +
                                         static_cast<double>(p[kBMid].v[std::size_t(i)]));

    std::vector<double> y(static_cast<std::size_t>(flat));
    detail::matvec(p[kWOut], A.h2.data(), y.data());
    for (int i = 0; i < flat; ++i) y[std::size_t(i)] += static_cast<double>(p[kBOut].v[std::size_t(i)]);

    A.gate.assign(static_cast<std::size_t>(cfg.channels), 0.0);
    detail::matvec(p[kWCond], A.x.data() + flat, A.gate.data());
    const int hw = cfg.height * cfg.width;
    for (int ch = 0; ch < cfg.channels; ++ch) {
        A.gate[std::size_t(ch)] += static_cast<double>(p[kBCond].v[std::size_t(ch)]);
        for (int i = 0; i < hw; ++i) y[std::size_t(ch * hw + i)] += A.gate[std::size_t(ch)];
    }
    return y;
}

/// Accumulates dLoss/dparams given dLoss/doutput, reversing forward_raw.
template <typename T>
void backward_raw(const ParamsT<T>& p, const Activations& A, const std::vector<double>& dout,
                  Grads& grads) {
    const ModelConfig& cfg = p.cfg;
    const int flat = cfg.flat();
    const int hw = cfg.height * cfg.width;
    const int d_cond = cfg.d_cond();

    std::vector<double> dgate(static_cast<std::size_t>(cfg.channels), 0.0);
    for (int ch = 0; ch < cfg.channels; ++ch)
        for (int i = 0; i < hw; ++i) dgate[std::size_t(ch)] += dout[std::size_t(ch * hw + i)];

    detail::outer_acc(grads.g[kWOut], flat, cfg.d_hidden, dout.data(), A.h2.data());
    for (int i = 0; i < flat; ++i) grads.g[kBOut][std::size_t(i)] += dout[std::size_t(i)];

    std::vector<double> dh2(static_cast<std::size_t>(cfg.d_hidden), 0.0);
    detail::matvec_t_acc(p[kWOut], dout.data(), dh2.data());
    for (int i = 0; i < cfg.d_hidden; ++i)
        dh2[std::size_t(i)] *= 1.0 - A.h2[std::size_t(i)] * A.h2[std::size_t(i)];

    detail::outer_acc(grads.g[kWMid], cfg.d_hidden, cfg.d_hidden, dh2.data(), A.h1.data());
    for (int i = 0; i < cfg.d_hidden; ++i) grads.g[kBMid][std::size_t(i)] += dh2[std::size_t(i)];

    std::vector<double> dh1(static_cast<std::size_t>(cfg.d_hidden), 0.0);
    detail::matvec_t_acc(p[kWMid], dh2.data(), dh1.data());
    for (int i = 0; i < cfg.d_hidden; ++i)
        dh1[std::size_t(i)] *= 1.0 - A.h1[std::size_t(i)] * A.h1[std::size_t(i)];

    detail::outer_acc(grads.g[kWIn], cfg.d_hidden, flat + d_cond, dh1.data(), A.x.data());
    for (int i = 0; i < cfg.d_hidden; ++i) grads.g[kBIn][std::size_t(i)] += dh1[std::size_t(i)];

    std::vector<double> dx(static_cast<std::size_t>(flat) + d_cond, 0.0);
    detail::matvec_t_acc(p[kWIn], dh1.data(), dx.data());

    detail::outer_acc(grads.g[kWCond], cfg.channels, d_cond, dgate.data(), A.x.data() + flat);
    for (int ch = 0; ch < cfg.channels; ++ch) grads.g[kBCond][std::size_t(ch)] += dgate[std::size_t(ch)];
    detail::matvec_t_acc(p[kWCond], dgate.data(), dx.data() + flat);

    const double* dcond = dx.data() + flat + cfg.d_time;
    double coeff = 1.0;
    for (const EncodedToken& tk : A.tokens) {
        if (tk.is_text()) {
            double* row = grads.g[kTokenTable].data() +
                          static_cast<std::size_t>(tk.text_id) * cfg.d_emb;
            for (int k = 0; k < cfg.d_emb; ++k) row[k] += coeff * dcond[k];
        } else {
            for (int k = 0; k < cfg.d_emb; ++k) {
                const double dk = coeff * dcond[k];
                grads.g[kPatchB][std::size_t(k)] += dk;
                double* row = grads.g[kPatchW].data() +
                              static_cast<std::size_t>(k) * cfg.patch_dim();
                for (int j = 0; j < cfg.patch_dim(); ++j)
                    row[j] += dk * static_cast<double>(tk.patch[std::size_t(j)]);
            }
        }
        coeff *= cfg.gamma;
    }
}

inline LatentGrid forward(const ModelParams& p, const LatentGrid& z, double t,
                          const ConditionSet& c) {
    const std::vector<double> y = forward_raw(p, z, t, c, nullptr);
    LatentGrid out(z.channels, z.height, z.width);
    for (std::size_t i = 0; i < y.size(); ++i) out.data[i] = static_cast<float>(y[i]);
    return out;
}

/// The trained network as a sampler-facing velocity field.
class ModelField : public VelocityField {
public:
    explicit ModelField(ModelParams params) : params_(std::move(params)) {}

    const ModelParams& params() const noexcept { return params_; }

protected:
    LatentGrid do_evaluate(const LatentGrid& z, double t, const ConditionSet& c) const override {
        return forward(params_, z, t, c);
    }

private:
    ModelParams params_;
};

struct FlowExample {
    LatentGrid x0;
    ConditionSet cond;
};

/// Mean over the batch of the squared velocity-regression error, with per
/// sample (t, eps) drawn from child streams of rng so the matching gradient
/// call sees identical draws and batch order never matters.
template <typename T>
double fm_loss_and_grad(const ParamsT<T>& p, const std::vector<FlowExample>& batch,
                        ShiftFactor shift, const RngStream& rng, Grads* grads) {
    if (batch.empty()) throw std::invalid_argument("fm_loss: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    Activations acts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        RngStream s = rng.child(i);
        const double t = timestep_shift(s.uniform(), shift);
        LatentGrid eps(batch[i].x0.channels, batch[i].x0.height, batch[i].x0.width);
        for (auto& v : eps.data) v = s.normal_f();
        const LatentGrid z_t = interpolate(batch[i].x0, eps, t);
        const LatentGrid target = fm_target(batch[i].x0, eps);
        const std::vector<double> y = forward_raw(p, z_t, t, batch[i].cond, grads ? &acts : nullptr);
        std::vector<double> dout;
        if (grads) dout.assign(y.size(), 0.0);
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double r = y[j] - static_cast<double>(target.data[j]);
            loss += r * r * inv_b;
            if (grads) dout[j] = 2.0 * r * inv_b;
        }
        if (grads) backward_raw(p, acts, dout, *grads);
    }
    return loss;
}

template <typename T>
double fm_loss(const ParamsT<T>& p, const std::vector<FlowExample>& batch, ShiftFactor shift,
               const RngStream& rng) {
    return fm_loss_and_grad(p, batch, shift, rng, nullptr);
}

template <typename T>
Grads fm_grad(const ParamsT<T>& p, const std::vector<FlowExample>& batch, ShiftFactor shift,
              const RngStream& rng, double* loss_out = nullptr) {
    Grads g = make_grads(p);
    const double loss = fm_loss_and_grad(p, batch, shift, rng, &g);
    if (loss_out) *loss_out = loss;
    return g;
}

}  // namespace canvas
