#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "canvas/checkpoint.hpp"
#include "canvas/errors.hpp"
#include "canvas/grid.hpp"
#include "canvas/review.hpp"
#include "canvas/rng.hpp"
#include "canvas/synth.hpp"

namespace canvas {

constexpr int kRewardFeatureDim = 7;

/// Paired defect features: [in-mask MAE, boundary gradient energy, background
/// saturation, background variance, mask fraction, height, width].
inline std::vector<double> reward_features(const LatentGrid& reference,
                                           const LatentGrid& generated, const LatentGrid& mask) {
    if (!reference.same_shape(generated))
        throw std::invalid_argument("reward_features: reference/generated shape mismatch");
    if (mask.channels != 1 || mask.height != generated.height || mask.width != generated.width)
        throw std::invalid_argument("reward_features: mask shape mismatch");

    const int C = generated.channels;
    const int H = generated.height;
    const int W = generated.width;

    double mae = 0.0;
    std::size_t in_count = 0;
    double sat = 0.0, gray_sum = 0.0, gray_sq = 0.0;
    std::size_t out_count = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (mask.at(0, y, x) >= 0.5f) {
                for (int c = 0; c < C; ++c)
                    mae += std::abs(double(generated.at(c, y, x)) - double(reference.at(c, y, x)));
                ++in_count;
            } else {
                double lo = 1e30, hi = -1e30, gray = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double v = generated.at(c, y, x);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                    gray += v;
                }
                gray /= C;
                sat += (C >= 3) ? (hi - lo) : 0.0;
                gray_sum += gray;
                gray_sq += gray * gray;
                ++out_count;
            }
        }
    mae = in_count ? mae / double(in_count * std::size_t(C)) : 0.0;
    sat = out_count ? sat / double(out_count) : 0.0;
    double variance = 0.0;
    if (out_count) {
        const double mean = gray_sum / double(out_count);
        variance = gray_sq / double(out_count) - mean * mean;
        variance = variance < 0.0 ? 0.0 : variance;
    }

    double energy = 0.0;
    std::size_t edges = 0;
    auto accumulate_edge = [&](int x0, int y0, int x1, int y1) {
        if ((mask.at(0, y0, x0) >= 0.5f) == (mask.at(0, y1, x1) >= 0.5f)) return;
        for (int c = 0; c < C; ++c) {
            const double d = double(generated.at(c, y0, x0)) - double(generated.at(c, y1, x1));
            energy += d * d;
        }
        ++edges;
    };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x + 1 < W; ++x) accumulate_edge(x, y, x + 1, y);
    for (int y = 0; y + 1 < H; ++y)
        for (int x = 0; x < W; ++x) accumulate_edge(x, y, x, y + 1);
    energy = edges ? energy / double(edges) : 0.0;

    const double fraction = double(in_count) / double(std::size_t(H) * std::size_t(W));
    return {mae, energy, sat, variance, fraction, double(H), double(W)};
}

inline std::vector<double> reward_features(const ProductImage& original,
                                           const LatentGrid& generated, const LatentGrid& mask) {
    return reward_features(original.on_white, generated, mask);
}

struct RewardParams {
    int feature_dim = kRewardFeatureDim;
    std::string task = "background";
    std::vector<double> w;
    std::vector<double> mu;
    std::vector<double> sigma;
    double bias = 0.0;
    bool calibration_warning = false;

    void require_valid() const {
        if (int(w.size()) != feature_dim || int(mu.size()) != feature_dim ||
            int(sigma.size()) != feature_dim)
            throw std::invalid_argument("RewardParams: dimension mismatch");
        for (double v : w)
            if (!std::isfinite(v)) throw std::invalid_argument("RewardParams: non-finite weight");
        if (!std::isfinite(bias)) throw std::invalid_argument("RewardParams: non-finite bias");
    }
};

constexpr double kProbFloor = 1e-7;

inline double clamp_prob(double p) {
    return p < kProbFloor ? kProbFloor : (p > 1.0 - kProbFloor ? 1.0 - kProbFloor : p);
}

/// Predicted defect probability, always inside (0,1).
inline double reward_score(const RewardParams& params, const std::vector<double>& features) {
    params.require_valid();
    if (int(features.size()) != params.feature_dim)
        throw std::invalid_argument("reward_score: feature length mismatch");
    double z = params.bias;
    for (int i = 0; i < params.feature_dim; ++i) {
        const std::size_t ui = std::size_t(i);
        const double s = params.sigma[ui] > 0.0 ? params.sigma[ui] : 1.0;
        z += params.w[ui] * ((features[ui] - params.mu[ui]) / s);
    }
    return clamp_prob(1.0 / (1.0 + std::exp(-z)));
}

/// Cross-entropy against the fraction of raters flagging a defect; out-of-range
/// predictions are clamped and counted rather than poisoning the loss.
inline double aggregated_rater_loss(double pred, double target,
                                    std::uint64_t* clamp_warnings = nullptr) {
    if (!(target >= 0.0 && target <= 1.0))
        throw std::invalid_argument("aggregated_rater_loss: target outside [0,1]");
    if (!std::isfinite(pred)) throw std::invalid_argument("aggregated_rater_loss: bad pred");
    const double p = clamp_prob(pred);
    if (p != pred && clamp_warnings) ++(*clamp_warnings);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

struct RewardExample {
    std::vector<double> features;
    double target = 0.0;
};

struct RewardTrainConfig {
    std::string task = "background";
    double lr = 0.5;
    int epochs = 400;
    std::uint64_t seed = 0;
};

struct RewardTrainResult {
    RewardParams params;
    std::vector<double> epoch_loss;
    std::uint64_t clamp_warnings = 0;
};

/// Full-batch logistic regression on standardized features; convex, so the
/// zero init makes training deterministic for a given example order.
inline RewardTrainResult train_reward(const std::vector<RewardExample>& examples,
                                      const RewardTrainConfig& cfg) {
    if (examples.empty()) throw std::invalid_argument("train_reward: no examples");
    const int dim = int(examples[0].features.size());
    for (const auto& ex : examples) {
        if (int(ex.features.size()) != dim)
            throw std::invalid_argument("train_reward: ragged feature vectors");
        if (!(ex.target >= 0.0 && ex.target <= 1.0))
            throw std::invalid_argument("train_reward: target outside [0,1]");
    }

    RewardTrainResult res;
    RewardParams& p = res.params;
    p.feature_dim = dim;
    p.task = cfg.task;
    p.w.assign(std::size_t(dim), 0.0);
    p.mu.assign(std::size_t(dim), 0.0);
    p.sigma.assign(std::size_t(dim), 0.0);

    const double n = double(examples.size());
    for (const auto& ex : examples)
        for (int i = 0; i < dim; ++i) p.mu[std::size_t(i)] += ex.features[std::size_t(i)] / n;
    for (const auto& ex : examples)
        for (int i = 0; i < dim; ++i) {
            const double d = ex.features[std::size_t(i)] - p.mu[std::size_t(i)];
            p.sigma[std::size_t(i)] += d * d / n;
        }
    for (int i = 0; i < dim; ++i) {
        const std::size_t ui = std::size_t(i);
        p.sigma[ui] = p.sigma[ui] > 0.0 ? std::sqrt(p.sigma[ui]) : 1.0;
    }

    bool has_low = false, has_high = false;
    for (const auto& ex : examples) {
        has_low = has_low || ex.target < 0.5;
        has_high = has_high || ex.target > 0.5;
    }
    p.calibration_warning = !(has_low && has_high);

    std::vector<std::vector<double>> std_features(examples.size());
    for (std::size_t k = 0; k < examples.size(); ++k) {
        std_features[k].resize(std::size_t(dim));
        for (int i = 0; i < dim; ++i) {
            const std::size_t ui = std::size_t(i);
            std_features[k][ui] = (examples[k].features[ui] - p.mu[ui]) / p.sigma[ui];
        }
    }

    res.epoch_loss.reserve(std::size_t(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<double> gw(std::size_t(dim), 0.0);
        double gb = 0.0, loss = 0.0;
        for (std::size_t k = 0; k < examples.size(); ++k) {
            double z = p.bias;
            for (int i = 0; i < dim; ++i)
                z += p.w[std::size_t(i)] * std_features[k][std::size_t(i)];
            const double pred = 1.0 / (1.0 + std::exp(-z));
            loss += aggregated_rater_loss(pred, examples[k].target, &res.clamp_warnings) / n;
            const double err = (clamp_prob(pred) - examples[k].target) / n;
            for (int i = 0; i < dim; ++i) gw[std::size_t(i)] += err * std_features[k][std::size_t(i)];
            gb += err;
        }
        res.epoch_loss.push_back(loss);
        for (int i = 0; i < dim; ++i) p.w[std::size_t(i)] -= cfg.lr * gw[std::size_t(i)];
        p.bias -= cfg.lr * gb;
    }
    p.require_valid();
    return res;
}

struct OracleRaterSpec {
    double tau_p = 0.02;
    double tau_b = 0.05;
    double sat_lo = 0.0;
    double sat_hi = 0.9;
    double rho = 0.0;
};

/// Threshold rules on the defect features plus per-answer flip noise; the two
/// uniforms are always drawn so records stay stream-aligned across specs.
inline RaterRecord oracle_rater(const LatentGrid& reference, const LatentGrid& generated,
                                const LatentGrid& mask, const OracleRaterSpec& spec,
                                const std::string& image_id, const std::string& rater_id,
                                RngStream rng) {
    if (!(spec.rho >= 0.0 && spec.rho <= 1.0))
        throw std::invalid_argument("oracle_rater: flip probability outside [0,1]");
    const std::vector<double> f = reward_features(reference, generated, mask);
    bool product_defect = f[0] > spec.tau_p;
    bool background_defect = f[1] > spec.tau_b || f[2] < spec.sat_lo || f[2] > spec.sat_hi;
    if (rng.uniform() < spec.rho) product_defect = !product_defect;
    if (rng.uniform() < spec.rho) background_defect = !background_defect;

    RaterRecord r;
    r.image_id = image_id;
    r.rater_id = rater_id;
    r.task = ReviewTask::Background;
    r.defect = {product_defect, background_defect};
    return r;
}

inline std::uint64_t reward_arch_hash(int feature_dim) {
    return detail::mix64(0x5245574152443100ULL ^ static_cast<std::uint64_t>(feature_dim));
}

inline void save_reward_checkpoint(const std::string& path, const RewardParams& p) {
    p.require_valid();
    CvckFile f;
    f.arch_hash = reward_arch_hash(p.feature_dim);
    detail::ByteWriter extra;
    extra.i32(p.feature_dim);
    extra.u8(p.calibration_warning ? 1 : 0);
    extra.str(p.task);
    f.extra = std::move(extra.buf);

    auto blob = [](const char* name, const std::vector<double>& v) {
        CvckBlob b;
        b.name = name;
        b.rows = 1;
        b.cols = int(v.size());
        b.data.assign(v.begin(), v.end());
        return b;
    };
    f.params.push_back(blob("w", p.w));
    f.params.push_back(blob("mu", p.mu));
    f.params.push_back(blob("sigma", p.sigma));
    f.params.push_back(blob("bias", {p.bias}));
    write_cvck(path, f);
}

inline RewardParams load_reward_checkpoint(const std::string& path) {
    const CvckFile f = read_cvck(path);
    detail::ByteReader extra{f.extra.data(), f.extra.size()};
    RewardParams p;
    p.feature_dim = extra.i32();
    if (f.arch_hash != reward_arch_hash(p.feature_dim))
        throw ParseError("reward checkpoint: architecture hash mismatch", 8);
    p.calibration_warning = extra.u8() != 0;
    p.task = extra.str();
    if (extra.pos != extra.size)
        throw ParseError("reward checkpoint: trailing extra bytes", static_cast<long>(extra.pos));

    auto find = [&](const char* name) -> const CvckBlob& {
        for (const auto& b : f.params)
            if (b.name == name) return b;
        throw ParseError(std::string("reward checkpoint: missing block ") + name, 0);
    };
    auto to_vec = [](const CvckBlob& b) {
        return std::vector<double>(b.data.begin(), b.data.end());
    };
    p.w = to_vec(find("w"));
    p.mu = to_vec(find("mu"));
    p.sigma = to_vec(find("sigma"));
    const CvckBlob& bias = find("bias");
    if (bias.data.size() != 1) throw ParseError("reward checkpoint: malformed bias block", 0);
    p.bias = bias.data[0];
    p.require_valid();
    return p;
}

}  // namespace canvas
