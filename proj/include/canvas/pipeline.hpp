#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "canvas/condition.hpp"
#include "canvas/datasets.hpp"
#include "canvas/flow.hpp"
#include "canvas/guidance.hpp"
#include "canvas/model.hpp"
#include "canvas/reward.hpp"
#include "canvas/rng.hpp"
#include "canvas/schedule.hpp"
#include "canvas/synth.hpp"

namespace canvas {

enum class EligibilityReason {
    OK,
    NOT_WHITE_BACKGROUND,
    HUMAN_PRESENT,
    ASPECT_TOO_TALL,
    SOLID_BACKGROUND,
    FAILURE_PRONE,
};

inline const char* eligibility_reason_name(EligibilityReason r) {
    switch (r) {
        case EligibilityReason::OK: return "OK";
        case EligibilityReason::NOT_WHITE_BACKGROUND: return "NOT_WHITE_BACKGROUND";
        case EligibilityReason::HUMAN_PRESENT: return "HUMAN_PRESENT";
        case EligibilityReason::ASPECT_TOO_TALL: return "ASPECT_TOO_TALL";
        case EligibilityReason::SOLID_BACKGROUND: return "SOLID_BACKGROUND";
        case EligibilityReason::FAILURE_PRONE: return "FAILURE_PRONE";
    }
    return "UNKNOWN";
}

struct EligibilityVerdict {
    bool eligible = false;
    EligibilityReason reason = EligibilityReason::OK;
};

struct EligibilityConfig {
    double near_white_level = 245.0 / 255.0;
    double near_white_fraction = 0.90;
    double solid_variance_threshold = 1e-5;
    double max_aspect_ratio = 1.4;
};

using HumanPredicate = std::function<bool(const ProductImage&)>;

struct MaskBbox {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    bool empty() const { return width == 0 || height == 0; }
};

inline MaskBbox mask_bbox(const LatentGrid& mask) {
    if (mask.channels != 1) throw std::invalid_argument("mask_bbox: expected one channel");
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(0, y, x) >= 0.5f) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    MaskBbox b;
    if (x1 >= 0) {
        b.x0 = x0;
        b.y0 = y0;
        b.width = x1 - x0 + 1;
        b.height = y1 - y0 + 1;
    }
    return b;
}

/// Pre-generation screening. The human predicate defaults to constant-false
/// because synthetic scenes contain no people; production would plug in a
/// detector here.
inline EligibilityVerdict check_eligibility(const ProductImage& p, TaskKind task,
                                            const EligibilityConfig& cfg = {},
                                            const HumanPredicate& human = {}) {
    auto reject = [](EligibilityReason r) { return EligibilityVerdict{false, r}; };
    if (human && human(p)) return reject(EligibilityReason::HUMAN_PRESENT);

    const MaskBbox box = mask_bbox(p.mask);
    if (box.empty() || box.x0 == 0 || box.y0 == 0 || box.x0 + box.width == p.mask.width ||
        box.y0 + box.height == p.mask.height)
        return reject(EligibilityReason::FAILURE_PRONE);

    if (task == TaskKind::BackgroundOutpaint) {
        std::size_t outside = 0, near_white = 0;
        for (int y = 0; y < p.on_white.height; ++y)
            for (int x = 0; x < p.on_white.width; ++x) {
                if (p.mask.at(0, y, x) >= 0.5f) continue;
                ++outside;
                bool white = true;
                for (int c = 0; c < p.on_white.channels; ++c)
                    white = white && p.on_white.at(c, y, x) >= float(cfg.near_white_level);
                near_white += white;
            }
        if (outside == 0 ||
            double(near_white) / double(outside) < cfg.near_white_fraction)
            return reject(EligibilityReason::NOT_WHITE_BACKGROUND);
    } else if (task == TaskKind::AspectRatioOutpaint) {
        if (double(p.image.height) / double(p.image.width) >= cfg.max_aspect_ratio)
            return reject(EligibilityReason::ASPECT_TOO_TALL);
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (int y = 0; y < p.image.height; ++y)
            for (int x = 0; x < p.image.width; ++x) {
                if (p.mask.at(0, y, x) >= 0.5f) continue;
                double gray = 0.0;
                for (int c = 0; c < p.image.channels; ++c) gray += p.image.at(c, y, x);
                gray /= p.image.channels;
                sum += gray;
                sq += gray * gray;
                ++n;
            }
        const double variance = n ? std::max(0.0, sq / double(n) - (sum / double(n)) * (sum / double(n))) : 0.0;
        if (variance < cfg.solid_variance_threshold)
            return reject(EligibilityReason::SOLID_BACKGROUND);
    }
    return {true, EligibilityReason::OK};
}

namespace detail {

inline std::uint64_t string_key(const std::string& s) {
    std::uint64_t h = mix64(0x6964686173680000ULL);
    for (unsigned char ch : s) h = mix64(h ^ ch);
    return h;
}

struct PromptTemplate {
    int tier;
    const char* text;
};

inline const std::vector<PromptTemplate>& prompt_bank() {
    static const std::vector<PromptTemplate> bank = {
        {0, "{product} on a plain white seamless background"},
        {0, "{product} on a soft pastel studio backdrop"},
        {0, "{product} centered on a solid matte background"},
        {1, "{product} on a wooden tabletop"},
        {1, "{product} on a marble countertop"},
        {1, "{product} resting on a linen cloth"},
        {2, "{product} in a sunlit living room"},
        {2, "{product} on a kitchen counter in a bright home"},
        {2, "{product} in a leafy outdoor garden"},
    };
    return bank;
}

inline std::string fill_template(const char* tmpl, const std::string& product) {
    std::string out(tmpl);
    const std::string slot = "{product}";
    const std::size_t at = out.find(slot);
    if (at != std::string::npos) out.replace(at, slot.size(), product);
    return out;
}

}  // namespace detail

/// Draws k prompts without replacement, cycling complexity tiers so small k
/// still spans simple-through-lifestyle backgrounds.
inline std::vector<std::string> metaprompt(const std::string& caption, int k, RngStream rng) {
    const auto& bank = detail::prompt_bank();
    if (k < 1) throw std::invalid_argument("metaprompt: k must be positive");
    if (std::size_t(k) > bank.size())
        throw std::invalid_argument("metaprompt: k exceeds template bank size");

    int max_tier = 0;
    for (const auto& t : bank) max_tier = std::max(max_tier, t.tier);
    std::vector<bool> used(bank.size(), false);
    std::vector<std::string> prompts;
    int tier = 0;
    while (int(prompts.size()) < k) {
        std::vector<std::size_t> avail;
        for (std::size_t i = 0; i < bank.size(); ++i)
            if (!used[i] && bank[i].tier == tier) avail.push_back(i);
        if (!avail.empty()) {
            const std::size_t pick = avail[std::size_t(rng.uniform_int(int(avail.size())))];
            used[pick] = true;
            prompts.push_back(detail::fill_template(bank[pick].text, caption));
        }
        tier = (tier + 1) % (max_tier + 1);
    }
    return prompts;
}

struct Placement {
    int dst_x = 0;
    int dst_y = 0;
    int src_x0 = 0;
    int src_y0 = 0;
    int width = 0;
    int height = 0;
};

/// Maps the product's relative center from the source frame onto the target
/// canvas, clamped so the cutout stays fully inside.
inline Placement dynamic_placement(const LatentGrid& mask, int target_h, int target_w) {
    const MaskBbox box = mask_bbox(mask);
    if (box.empty()) throw std::invalid_argument("dynamic_placement: empty mask");
    if (box.width > target_w || box.height > target_h)
        throw std::invalid_argument("dynamic_placement: product larger than target");

    const double cx_rel = (box.x0 + box.width / 2.0) / double(mask.width);
    const double cy_rel = (box.y0 + box.height / 2.0) / double(mask.height);
    int dst_x = int(std::lround(cx_rel * target_w - box.width / 2.0));
    int dst_y = int(std::lround(cy_rel * target_h - box.height / 2.0));
    dst_x = std::clamp(dst_x, 0, target_w - box.width);
    dst_y = std::clamp(dst_y, 0, target_h - box.height);
    return {dst_x, dst_y, box.x0, box.y0, box.width, box.height};
}

inline void require_placement_fits(const Placement& pl, int target_h, int target_w) {
    if (pl.dst_x < 0 || pl.dst_y < 0 || pl.dst_x + pl.width > target_w ||
        pl.dst_y + pl.height > target_h)
        throw std::invalid_argument("placement out of target bounds");
}

inline LatentGrid place_mask(const LatentGrid& src_mask, const Placement& pl, int target_h,
                             int target_w) {
    require_placement_fits(pl, target_h, target_w);
    LatentGrid out(1, target_h, target_w, 0.0f);
    for (int y = 0; y < pl.height; ++y)
        for (int x = 0; x < pl.width; ++x)
            out.at(0, pl.dst_y + y, pl.dst_x + x) =
                src_mask.at(0, pl.src_y0 + y, pl.src_x0 + x);
    return out;
}

/// Product cutout on a white canvas at its placed location; this is both the
/// model's reference conditioning and the reward model's reference image.
inline LatentGrid place_product(const ProductImage& p, const Placement& pl, int target_h,
                                int target_w) {
    require_placement_fits(pl, target_h, target_w);
    LatentGrid out(p.on_white.channels, target_h, target_w, 1.0f);
    for (int y = 0; y < pl.height; ++y)
        for (int x = 0; x < pl.width; ++x) {
            if (p.mask.at(0, pl.src_y0 + y, pl.src_x0 + x) < 0.5f) continue;
            for (int c = 0; c < p.on_white.channels; ++c)
                out.at(c, pl.dst_y + y, pl.dst_x + x) =
                    p.on_white.at(c, pl.src_y0 + y, pl.src_x0 + x);
        }
    return out;
}

/// Pixels under the placed mask come from the product shot bit-exactly; all
/// other pixels come from the generated canvas bit-exactly.
inline LatentGrid composite_cutout(const LatentGrid& generated, const ProductImage& original,
                                   const Placement& pl) {
    require_placement_fits(pl, generated.height, generated.width);
    if (generated.channels != original.on_white.channels)
        throw std::invalid_argument("composite_cutout: channel mismatch");
    LatentGrid out = generated;
    for (int y = 0; y < pl.height; ++y)
        for (int x = 0; x < pl.width; ++x) {
            if (original.mask.at(0, pl.src_y0 + y, pl.src_x0 + x) < 0.5f) continue;
            for (int c = 0; c < generated.channels; ++c)
                out.at(c, pl.dst_y + y, pl.dst_x + x) =
                    original.on_white.at(c, pl.src_y0 + y, pl.src_x0 + x);
        }
    return out;
}

/// Overwrites the rows [top, top+block.height) with the block, bit-exactly.
inline LatentGrid composite_band(const LatentGrid& generated, const LatentGrid& block, int top) {
    if (block.channels != generated.channels || block.width != generated.width ||
        top < 0 || top + block.height > generated.height)
        throw std::invalid_argument("composite_band: block does not fit");
    LatentGrid out = generated;
    for (int c = 0; c < block.channels; ++c)
        for (int y = 0; y < block.height; ++y)
            for (int x = 0; x < block.width; ++x) out.at(c, top + y, x) = block.at(c, y, x);
    return out;
}

/// Distance-weighted two-scale blend: inside the band around the known-region
/// boundary, the generated image is pulled toward the known pixels' boundary
/// difference, fading with distance; known pixels themselves stay bit-exact.
inline LatentGrid harmonize_boundary(const LatentGrid& generated,
                                     const LatentGrid& masked_original, const LatentGrid& mask,
                                     int band = 4) {
    require_same_shape(generated, masked_original, "harmonize_boundary");
    if (mask.channels != 1 || mask.height != generated.height || mask.width != generated.width)
        throw std::invalid_argument("harmonize_boundary: mask shape mismatch");
    if (band < 1) throw std::invalid_argument("harmonize_boundary: band must be positive");

    const int H = generated.height;
    const int W = generated.width;
    const int C = generated.channels;
    auto known = [&](int x, int y) { return mask.at(0, y, x) >= 0.5f; };

    constexpr int kFar = 1 << 20;
    std::vector<int> dist(std::size_t(H) * std::size_t(W), kFar);
    std::deque<std::pair<int, int>> frontier;
    std::vector<bool> boundary(std::size_t(H) * std::size_t(W), false);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (known(x, y)) {
                dist[std::size_t(y) * std::size_t(W) + std::size_t(x)] = 0;
                frontier.emplace_back(x, y);
                for (int dy = -1; dy <= 1 && !boundary[std::size_t(y) * std::size_t(W) + std::size_t(x)]; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                        if (!known(nx, ny)) {
                            boundary[std::size_t(y) * std::size_t(W) + std::size_t(x)] = true;
                            break;
                        }
                    }
            }
    while (!frontier.empty()) {
        const auto [x, y] = frontier.front();
        frontier.pop_front();
        const int d = dist[std::size_t(y) * std::size_t(W) + std::size_t(x)];
        if (d >= band) continue;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                auto& nd = dist[std::size_t(ny) * std::size_t(W) + std::size_t(nx)];
                if (nd > d + 1) {
                    nd = d + 1;
                    frontier.emplace_back(nx, ny);
                }
            }
    }

    LatentGrid out = generated;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (known(x, y))
                for (int c = 0; c < C; ++c) out.at(c, y, x) = masked_original.at(c, y, x);

    static const int kScales[2] = {2, 4};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int d = dist[std::size_t(y) * std::size_t(W) + std::size_t(x)];
            if (d < 1 || d > band) continue;
            double delta_sum[4] = {0, 0, 0, 0};
            int scales_used = 0;
            for (int r : kScales) {
                double acc[4] = {0, 0, 0, 0};
                int count = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                        if (!boundary[std::size_t(ny) * std::size_t(W) + std::size_t(nx)]) continue;
                        for (int c = 0; c < C; ++c)
                            acc[c] += double(masked_original.at(c, ny, nx)) -
                                      double(generated.at(c, ny, nx));
                        ++count;
                    }
                if (count > 0) {
                    for (int c = 0; c < C; ++c) delta_sum[c] += acc[c] / count;
                    ++scales_used;
                }
            }
            if (scales_used == 0) continue;
            const double fade = 1.0 - double(d) / double(band + 1);
            for (int c = 0; c < C; ++c) {
                const double delta = delta_sum[c] / scales_used;
                if (delta != 0.0)
                    out.at(c, y, x) =
                        static_cast<float>(double(generated.at(c, y, x)) + fade * delta);
            }
        }
    return out;
}

struct Candidate {
    LatentGrid image;
    std::uint64_t seed = 0;
    std::string prompt;
    int prompt_index = 0;
    std::optional<double> reward;
    bool failed = false;
    std::string note;
};

struct GenerationConfig {
    int width = 16;
    int height = 24;
    int steps = 8;
    double shift = 1.0;
    int n_candidates = 2;
    std::vector<std::uint64_t> tuned_seeds = {1};
    double post_filter_threshold = 0.5;
    int harmonize_band = 4;
    bool superres = false;
    int superres_steps = 4;
    std::string negative_prompt = "cluttered, distorted product";
    EligibilityConfig eligibility;
};

namespace detail {

inline ConditionSet outpaint_condition(const LatentGrid& canvas, const LatentGrid& mask,
                                       const std::string& prompt, const std::string& negative,
                                       int vocab) {
    ConditionSet c;
    c.text = tokenize(prompt, vocab);
    if (!negative.empty()) c.negative_text = tokenize(negative, vocab);
    c.images.push_back(canvas);
    c.images.push_back(mask);
    return c;
}

inline LatentGrid sample_candidate(const ModelParams& params, const ConditionSet& cond,
                                   TaskKind task, std::uint64_t seed, int steps, double shift) {
    const ModelField field(params);
    const GuidanceConfig guidance = resolve_task_guidance(task);
    const GuidedField guided(field, guidance);
    const LatentGrid z_init = grid_randn(params.cfg.channels, params.cfg.height,
                                         params.cfg.width, RngStream(seed, {0x7a696e6974ULL}));
    return euler_sample(guided, z_init, make_schedule(steps, ShiftFactor(shift)), cond);
}

}  // namespace detail

/// Background task: diversity via n metaprompts sharing one tuned seed.
/// Aspect task: one canonical prompt across n tuned seeds. A diverging sample
/// becomes a failed candidate rather than aborting the batch.
inline std::vector<Candidate> generate_candidates(const ProductImage& p, TaskKind task, int n,
                                                  const ModelParams& params,
                                                  const GenerationConfig& cfg) {
    if (n < 1) throw std::invalid_argument("generate_candidates: n must be positive");
    if (cfg.tuned_seeds.empty())
        throw std::invalid_argument("generate_candidates: no tuned seeds");

    struct Request {
        std::string prompt;
        int prompt_index;
        std::uint64_t seed;
    };
    std::vector<Request> requests;
    LatentGrid canvas, mask;

    if (task == TaskKind::BackgroundOutpaint) {
        const Placement pl = dynamic_placement(p.mask, cfg.height, cfg.width);
        canvas = place_product(p, pl, cfg.height, cfg.width);
        mask = place_mask(p.mask, pl, cfg.height, cfg.width);
        const RngStream prompt_rng(cfg.tuned_seeds[0],
                                   {0x6d657461ULL, detail::string_key(p.sample_id)});
        const std::vector<std::string> prompts = metaprompt(p.caption, n, prompt_rng);
        for (int i = 0; i < n; ++i) requests.push_back({prompts[std::size_t(i)], i, cfg.tuned_seeds[0]});
    } else if (task == TaskKind::AspectRatioOutpaint) {
        const int canvas_h = aspect_canvas_height(p.image.width);
        const int band = canvas_h - p.image.height;
        const int top = band / 2;
        canvas = embed_in_canvas(p.image, canvas_h, top);
        mask = band_mask(p.image.width, canvas_h, top, p.image.height);
        if (std::size_t(n) > cfg.tuned_seeds.size())
            throw std::invalid_argument("generate_candidates: not enough tuned seeds");
        for (int i = 0; i < n; ++i)
            requests.push_back({dataset_task_prefix(DatasetTask::AspectRatioOutpaint), 0,
                                cfg.tuned_seeds[std::size_t(i)]});
    } else {
        throw std::invalid_argument("generate_candidates: unsupported task");
    }

    if (canvas.height != params.cfg.height || canvas.width != params.cfg.width)
        throw std::invalid_argument("generate_candidates: model resolution mismatch");

    std::vector<Candidate> out;
    for (const Request& rq : requests) {
        Candidate cand;
        cand.seed = rq.seed;
        cand.prompt = rq.prompt;
        cand.prompt_index = rq.prompt_index;
        const ConditionSet cond = detail::outpaint_condition(
            canvas, mask, rq.prompt, cfg.negative_prompt, params.cfg.vocab);
        try {
            cand.image =
                detail::sample_candidate(params, cond, task, rq.seed, cfg.steps, cfg.shift);
        } catch (const NumericDivergence& e) {
            cand.failed = true;
            cand.note = e.what();
        }
        out.push_back(std::move(cand));
    }
    return out;
}

inline void score_candidates(std::vector<Candidate>& cands, const RewardParams& reward,
                             const LatentGrid& reference, const LatentGrid& mask) {
    for (auto& c : cands) {
        if (c.failed) continue;
        c.reward = reward_score(reward, reward_features(reference, c.image, mask));
    }
}

/// Ascending predicted defect probability; ties resolve by (seed, prompt
/// index) so ranking is reproducible. Failed candidates are excluded.
inline std::vector<Candidate> rank_candidates(std::vector<Candidate> cands) {
    std::vector<Candidate> ok;
    for (auto& c : cands) {
        if (c.failed) continue;
        if (!c.reward) throw std::invalid_argument("rank_candidates: unscored candidate");
        ok.push_back(std::move(c));
    }
    std::stable_sort(ok.begin(), ok.end(), [](const Candidate& a, const Candidate& b) {
        if (*a.reward != *b.reward) return *a.reward < *b.reward;
        if (a.seed != b.seed) return a.seed < b.seed;
        return a.prompt_index < b.prompt_index;
    });
    return ok;
}

enum class FilterDecision { Keep, Drop };

inline FilterDecision post_filter(const Candidate& top, double threshold) {
    if (!top.reward) throw std::invalid_argument("post_filter: unscored candidate");
    return *top.reward > threshold ? FilterDecision::Drop : FilterDecision::Keep;
}

/// x3 upscale through the super-resolution task head with guidance disabled.
inline LatentGrid superres_x3(const LatentGrid& image, const ModelParams& sr_params, int steps,
                              std::uint64_t seed) {
    if (sr_params.cfg.height != image.height * 3 || sr_params.cfg.width != image.width * 3)
        throw std::invalid_argument("superres_x3: model resolution is not 3x the input");
    ConditionSet cond;
    cond.text = tokenize(dataset_task_prefix(DatasetTask::SuperResolution), sr_params.cfg.vocab);
    cond.images.push_back(image);
    return detail::sample_candidate(sr_params, cond, TaskKind::SuperResolution, seed, steps, 1.0);
}

struct CandidateRecord {
    std::uint64_t seed = 0;
    int prompt_index = 0;
    std::string prompt;
    std::optional<double> reward;
    bool failed = false;
    std::string note;
};

struct PipelineManifest {
    std::string input_id;
    TaskKind task = TaskKind::BackgroundOutpaint;
    EligibilityVerdict verdict;
    std::vector<std::string> prompts;
    std::vector<CandidateRecord> candidates;
    std::optional<int> selected;
    std::optional<std::string> dropped_reason;
    bool has_output = false;
    LatentGrid output;
    /// 1 where the output is guaranteed bit-identical to the source product
    /// content at the emitted resolution.
    LatentGrid output_mask;
    Placement placement;
    int band_top = 0;
    int output_scale = 1;
    std::vector<std::string> notes;

    void require_valid() const {
        if (selected.has_value() == dropped_reason.has_value())
            throw std::logic_error("manifest must have exactly one of selected/dropped");
    }
};

/// Full outpainting flow for one input. Per-input failures turn into a
/// DROPPED manifest rather than an exception, so batches always finish.
inline PipelineManifest run_pipeline(const ProductImage& p, TaskKind task,
                                     const GenerationConfig& cfg, const ModelParams& params,
                                     const RewardParams& reward,
                                     const ModelParams* sr_params = nullptr,
                                     const HumanPredicate& human = {}) {
    PipelineManifest m;
    m.input_id = p.sample_id;
    m.task = task;
    try {
        m.verdict = check_eligibility(p, task, cfg.eligibility, human);
        if (!m.verdict.eligible) {
            m.dropped_reason =
                std::string("INELIGIBLE:") + eligibility_reason_name(m.verdict.reason);
            m.require_valid();
            return m;
        }

        std::vector<Candidate> cands =
            generate_candidates(p, task, cfg.n_candidates, params, cfg);
        LatentGrid reference, mask;
        if (task == TaskKind::BackgroundOutpaint) {
            m.placement = dynamic_placement(p.mask, params.cfg.height, params.cfg.width);
            reference = place_product(p, m.placement, params.cfg.height, params.cfg.width);
            mask = place_mask(p.mask, m.placement, params.cfg.height, params.cfg.width);
        } else {
            const int canvas_h = aspect_canvas_height(p.image.width);
            m.band_top = (canvas_h - p.image.height) / 2;
            reference = embed_in_canvas(p.image, canvas_h, m.band_top);
            mask = band_mask(p.image.width, canvas_h, m.band_top, p.image.height);
        }

        score_candidates(cands, reward, reference, mask);
        for (const auto& c : cands) {
            m.candidates.push_back({c.seed, c.prompt_index, c.prompt, c.reward, c.failed, c.note});
            if (std::find(m.prompts.begin(), m.prompts.end(), c.prompt) == m.prompts.end())
                m.prompts.push_back(c.prompt);
        }

        const std::vector<Candidate> ranked = rank_candidates(std::move(cands));
        if (ranked.empty()) {
            m.dropped_reason = "ALL_FAILED";
            m.require_valid();
            return m;
        }
        const Candidate& top = ranked.front();
        if (post_filter(top, cfg.post_filter_threshold) == FilterDecision::Drop) {
            m.dropped_reason = "POST_FILTER";
            m.require_valid();
            return m;
        }
        for (std::size_t i = 0; i < m.candidates.size(); ++i)
            if (!m.candidates[i].failed && m.candidates[i].seed == top.seed &&
                m.candidates[i].prompt_index == top.prompt_index) {
                m.selected = int(i);
                break;
            }

        LatentGrid composed;
        if (task == TaskKind::BackgroundOutpaint) {
            composed = composite_cutout(top.image, p, m.placement);
        } else {
            composed = composite_band(top.image, p.image, m.band_top);
        }
        composed = harmonize_boundary(composed, reference, mask, cfg.harmonize_band);
        m.output = std::move(composed);
        m.output_mask = mask;
        m.output_scale = 1;

        if (cfg.superres && sr_params) {
            LatentGrid high = superres_x3(m.output, *sr_params, cfg.superres_steps, top.seed);
            if (task == TaskKind::BackgroundOutpaint) {
                Placement hp = m.placement;
                hp.dst_x *= 3;
                hp.dst_y *= 3;
                hp.src_x0 *= 3;
                hp.src_y0 *= 3;
                hp.width *= 3;
                hp.height *= 3;
                ProductImage hi;
                hi.spec = p.spec;
                hi.on_white = image_to_grid(render_base(p.spec, RenderMode::OnWhite, 3));
                hi.mask = detail::mask_to_grid(render_base(p.spec, RenderMode::Mask, 3));
                high = composite_cutout(high, hi, hp);
                m.output_mask = place_mask(hi.mask, hp, high.height, high.width);
            } else {
                const LatentGrid hi_band = image_to_grid(
                    render_scene(p.spec, 3 * p.image.width, 3 * p.image.height, 0.0, 0.0, 3,
                                 RenderMode::Scene));
                high = composite_band(high, hi_band, 3 * m.band_top);
                m.output_mask = band_mask(3 * p.image.width, high.height, 3 * m.band_top,
                                          3 * p.image.height);
            }
            m.output = std::move(high);
            m.output_scale = 3;
        }
        m.has_output = true;
        m.require_valid();
    } catch (const std::exception& e) {
        m.selected.reset();
        m.has_output = false;
        m.dropped_reason = std::string("ERROR:") + e.what();
        m.notes.push_back(e.what());
    }
    return m;
}

struct SweepEntry {
    std::uint64_t seed = 0;
    double mean_reward = 0.0;
    int rank = 0;
};

struct SweepReport {
    std::vector<SweepEntry> entries;
    std::vector<std::uint64_t> top_subset;
};

using CandidateScorer =
    std::function<double(const Candidate&, const LatentGrid& reference, const LatentGrid& mask)>;

/// Ranks seeds by mean predicted defect probability over the input set,
/// ascending; the top subset (decile by default) feeds production configs.
inline SweepReport seed_sweep(const std::vector<ProductImage>& inputs,
                              const std::vector<std::uint64_t>& seeds, TaskKind task,
                              const ModelParams& params, const GenerationConfig& base_cfg,
                              const CandidateScorer& scorer, double top_fraction = 0.10) {
    if (inputs.empty() || seeds.empty())
        throw std::invalid_argument("seed_sweep: need inputs and seeds");

    SweepReport report;
    for (const std::uint64_t seed : seeds) {
        GenerationConfig cfg = base_cfg;
        cfg.tuned_seeds = {seed};
        double total = 0.0;
        std::size_t counted = 0;
        for (const auto& p : inputs) {
            std::vector<Candidate> cands = generate_candidates(p, task, 1, params, cfg);
            LatentGrid reference, mask;
            if (task == TaskKind::BackgroundOutpaint) {
                const Placement pl = dynamic_placement(p.mask, params.cfg.height, params.cfg.width);
                reference = place_product(p, pl, params.cfg.height, params.cfg.width);
                mask = place_mask(p.mask, pl, params.cfg.height, params.cfg.width);
            } else {
                const int canvas_h = aspect_canvas_height(p.image.width);
                const int top = (canvas_h - p.image.height) / 2;
                reference = embed_in_canvas(p.image, canvas_h, top);
                mask = band_mask(p.image.width, canvas_h, top, p.image.height);
            }
            for (const auto& c : cands) {
                if (c.failed) continue;
                total += scorer(c, reference, mask);
                ++counted;
            }
        }
        report.entries.push_back({seed, counted ? total / double(counted) : 1.0, 0});
    }

    std::stable_sort(report.entries.begin(), report.entries.end(),
                     [](const SweepEntry& a, const SweepEntry& b) {
                         if (a.mean_reward != b.mean_reward) return a.mean_reward < b.mean_reward;
                         return a.seed < b.seed;
                     });
    for (std::size_t i = 0; i < report.entries.size(); ++i)
        report.entries[i].rank = int(i) + 1;
    const std::size_t keep = std::max<std::size_t>(
        1, std::size_t(std::floor(double(report.entries.size()) * top_fraction)));
    for (std::size_t i = 0; i < keep && i < report.entries.size(); ++i)
        report.top_subset.push_back(report.entries[i].seed);
    return report;
}

inline SweepReport seed_sweep(const std::vector<ProductImage>& inputs,
                              const std::vector<std::uint64_t>& seeds, TaskKind task,
                              const ModelParams& params, const GenerationConfig& base_cfg,
                              const RewardParams& reward, double top_fraction = 0.10) {
    return seed_sweep(inputs, seeds, task, params, base_cfg,
                      [&reward](const Candidate& c, const LatentGrid& reference,
                                const LatentGrid& mask) {
                          return reward_score(reward,
                                              reward_features(reference, c.image, mask));
                      },
                      top_fraction);
}

inline double psnr(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse <= 0.0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace canvas
