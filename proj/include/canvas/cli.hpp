#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "canvas/checkpoint.hpp"
#include "canvas/config.hpp"
#include "canvas/datasets.hpp"
#include "canvas/errors.hpp"
#include "canvas/flow.hpp"
#include "canvas/guidance.hpp"
#include "canvas/image_io.hpp"
#include "canvas/model.hpp"
#include "canvas/pipeline.hpp"
#include "canvas/review.hpp"
#include "canvas/reward.hpp"
#include "canvas/synth.hpp"
#include "canvas/train.hpp"

namespace canvas {

struct CliArgs {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
};

inline const char* cli_usage() {
    return "usage: canvas <train-flow|sample|outpaint|seed-sweep|eval-rewards|"
           "simulate-review|benchmark> --config <path> [--out <dir>] [--seed <u64>]";
}

inline std::uint64_t parse_u64_text(const std::string& s, const std::string& what) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(what + ": expected an unsigned integer, got \"" + s + "\"");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ConfigError(what + ": value out of range: " + s);
    }
}

inline CliArgs parse_cli_args(const std::vector<std::string>& args) {
    if (args.empty()) throw ConfigError(std::string("missing command\n") + cli_usage());
    CliArgs a;
    a.command = args[0];
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& flag = args[i];
        auto value = [&]() -> const std::string& {
            if (i + 1 >= args.size()) throw ConfigError("missing value for " + flag);
            return args[++i];
        };
        if (flag == "--config") {
            a.config_path = value();
        } else if (flag == "--out") {
            a.out_dir = value();
        } else if (flag == "--seed") {
            a.seed = parse_u64_text(value(), "--seed");
        } else {
            throw ConfigError("unknown argument \"" + flag + "\"\n" + cli_usage());
        }
    }
    if (a.config_path.empty())
        throw ConfigError(std::string("--config is required\n") + cli_usage());
    return a;
}

/// CANVAS_THREADS caps worker threads; unset falls back to the hardware count.
inline int thread_budget() {
    if (const char* env = std::getenv("CANVAS_THREADS")) {
        const std::uint64_t v = parse_u64_text(env, "CANVAS_THREADS");
        if (v < 1) throw ConfigError("CANVAS_THREADS must be >= 1");
        return static_cast<int>(std::min<std::uint64_t>(v, 1024));
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

/// Runs fn(0..n-1); each index must write only its own output slot, so the
/// schedule cannot change results. The first worker exception is rethrown.
template <typename Fn>
inline void parallel_for(int n, Fn&& fn) {
    const int workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex error_mu;
    std::exception_ptr first_error;
    auto body = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace detail {

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string image_digest(const ImageU8& img) {
    std::uint64_t h = fnv1a64(img.data.data(), img.data.size());
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(&img.width), sizeof(int)) ^ h;
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(&img.height), sizeof(int)) ^ h;
    return hex64(h);
}

inline std::string out_path(const CliArgs& args, const std::string& name) {
    return (std::filesystem::path(args.out_dir) / name).string();
}

inline void ensure_out_dir(const CliArgs& args) {
    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + args.out_dir);
}

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) throw ConfigError(what + " not found: " + path);
}

inline std::string indexed_name(const char* stem, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.%s", stem, index, ext);
    return buf;
}

inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

inline void write_jsonl_file(const std::string& path, const std::vector<Json>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (const Json& j : rows) f << j.dump() << "\n";
}

/// Wall-clock phases land in a sidecar file that determinism comparisons skip.
class Timer {
public:
    explicit Timer(std::string command) : command_(std::move(command)) {
        start_ = std::chrono::steady_clock::now();
        last_ = start_;
    }

    void phase(const std::string& name) {
        const auto now = std::chrono::steady_clock::now();
        phases_[name] += std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
    }

    void write_sidecar(const CliArgs& args) const {
        const auto now = std::chrono::steady_clock::now();
        Json j;
        j["command"] = command_;
        j["total_ms"] = std::chrono::duration<double, std::milli>(now - start_).count();
        Json ph = Json::object();
        for (const auto& [name, ms] : phases_) ph[name] = ms;
        j["phases_ms"] = ph;
        write_json_file(out_path(args, "timings.json"), j);
    }

private:
    std::string command_;
    std::chrono::steady_clock::time_point start_, last_;
    std::map<std::string, double> phases_;
};

}  // namespace detail

inline GuidanceVariant parse_guidance_variant(const std::string& s, const std::string& where) {
    for (GuidanceVariant v : {GuidanceVariant::None, GuidanceVariant::Sequential,
                              GuidanceVariant::TextDrop, GuidanceVariant::FullDrop})
        if (s == to_string(v)) return v;
    throw ConfigError(where + ": unknown guidance variant \"" + s + "\"");
}

inline TaskKind parse_task_kind(const std::string& s, const std::string& where) {
    if (s == "background") return TaskKind::BackgroundOutpaint;
    if (s == "aspect") return TaskKind::AspectRatioOutpaint;
    for (TaskKind t : {TaskKind::GeneralEdit, TaskKind::BackgroundOutpaint,
                       TaskKind::AspectRatioOutpaint, TaskKind::SuperResolution})
        if (s == to_string(t)) return t;
    throw ConfigError(where + ": unknown task \"" + s + "\"");
}

inline TaskKind parse_outpaint_task(const std::string& s, const std::string& where) {
    const TaskKind t = parse_task_kind(s, where);
    if (t != TaskKind::BackgroundOutpaint && t != TaskKind::AspectRatioOutpaint)
        throw ConfigError(where + ": outpainting supports background and aspect only");
    return t;
}

inline DatasetTask parse_dataset_task(const std::string& s, const std::string& where) {
    for (DatasetTask t :
         {DatasetTask::GeneralEdit, DatasetTask::BackgroundOutpaint,
          DatasetTask::AspectRatioOutpaint, DatasetTask::SuperResolution, DatasetTask::Keyframe,
          DatasetTask::SceneExtract, DatasetTask::SceneSynthesize})
        if (s == dataset_task_name(t)) return t;
    throw ConfigError(where + ": unknown dataset task \"" + s + "\"");
}

inline ModelConfig model_config_from(ConfigCursor c) {
    ModelConfig cfg;
    cfg.channels = c.get_int("channels", cfg.channels);
    cfg.height = c.get_int("height", cfg.height);
    cfg.width = c.get_int("width", cfg.width);
    cfg.d_emb = c.get_int("d_emb", cfg.d_emb);
    cfg.d_time = c.get_int("d_time", cfg.d_time);
    cfg.d_hidden = c.get_int("d_hidden", cfg.d_hidden);
    cfg.vocab = c.get_int("vocab", cfg.vocab);
    cfg.patch = c.get_int("patch", cfg.patch);
    cfg.gamma = c.get_double("gamma", cfg.gamma);
    c.done();
    cfg.require_valid();
    return cfg;
}

inline GuidanceConfig guidance_config_from(ConfigCursor c) {
    GuidanceConfig g;
    g.variant = parse_guidance_variant(c.get_string("variant", "none"), c.path());
    g.s = c.get_double("s", g.s);
    g.s_text = c.get_double("s_text", g.s_text);
    g.s_image = c.get_double("s_image", g.s_image);
    g.rescale = c.get_bool("rescale", g.rescale);
    g.use_negative = c.get_bool("use_negative", g.use_negative);
    c.done();
    g.require_valid();
    return g;
}

/// clip_norm <= 0 disables clipping.
inline TrainHyper train_hyper_from(ConfigCursor c) {
    TrainHyper h;
    h.batch_size = c.get_int("batch_size", h.batch_size);
    h.lr = c.get_double("lr", h.lr);
    h.beta1 = c.get_double("beta1", h.beta1);
    h.beta2 = c.get_double("beta2", h.beta2);
    h.eps = c.get_double("eps", h.eps);
    h.weight_decay = c.get_double("weight_decay", h.weight_decay);
    if (c.has("clip_norm")) {
        const double v = c.require_double("clip_norm");
        h.clip_norm = v > 0.0 ? std::optional<double>(v) : std::nullopt;
    }
    h.ema_decay = c.get_double("ema_decay", h.ema_decay);
    h.p_text = c.get_double("p_text", h.p_text);
    h.p_image = c.get_double("p_image", h.p_image);
    h.spike_ratio = c.get_double("spike_ratio", h.spike_ratio);
    h.spike_window = c.get_int("spike_window", h.spike_window);
    h.max_consecutive_spikes = c.get_int("max_consecutive_spikes", h.max_consecutive_spikes);
    c.done();
    if (h.batch_size < 1) throw ConfigError(c.path() + ".batch_size: must be >= 1");
    return h;
}

inline EligibilityConfig eligibility_config_from(ConfigCursor c) {
    EligibilityConfig e;
    e.near_white_level = c.get_double("near_white_level", e.near_white_level);
    e.near_white_fraction = c.get_double("near_white_fraction", e.near_white_fraction);
    e.solid_variance_threshold = c.get_double("solid_variance_threshold",
                                              e.solid_variance_threshold);
    e.max_aspect_ratio = c.get_double("max_aspect_ratio", e.max_aspect_ratio);
    c.done();
    return e;
}

inline GenerationConfig generation_config_from(ConfigCursor c) {
    GenerationConfig g;
    g.width = c.get_int("width", g.width);
    g.height = c.get_int("height", g.height);
    g.steps = c.get_int("steps", g.steps);
    g.shift = c.get_double("shift", g.shift);
    g.n_candidates = c.get_int("n_candidates", g.n_candidates);
    if (c.has("tuned_seeds")) g.tuned_seeds = c.require_u64_array("tuned_seeds");
    g.post_filter_threshold = c.get_double("post_filter_threshold", g.post_filter_threshold);
    g.harmonize_band = c.get_int("harmonize_band", g.harmonize_band);
    g.superres = c.get_bool("superres", g.superres);
    g.superres_steps = c.get_int("superres_steps", g.superres_steps);
    g.negative_prompt = c.get_string("negative_prompt", g.negative_prompt);
    g.eligibility = eligibility_config_from(c.child_or_empty("eligibility"));
    c.done();
    if (g.tuned_seeds.empty()) throw ConfigError(c.path() + ".tuned_seeds: must not be empty");
    if (g.n_candidates < 1) throw ConfigError(c.path() + ".n_candidates: must be >= 1");
    return g;
}

/// Forbidden marks configs whose product dimensions come from elsewhere
/// (training stages), so a width key there would be silently ignored.
enum class ProductDims { Required, Optional, Forbidden };

inline ProductGenConfig product_config_from(ConfigCursor c, ProductDims dims) {
    ProductGenConfig p;
    if (dims == ProductDims::Required) {
        p.width = c.require_int("width");
        p.height = c.require_int("height");
    } else if (dims == ProductDims::Optional) {
        p.width = c.get_int("width", p.width);
        p.height = c.get_int("height", p.height);
    }
    p.min_fraction = c.get_double("min_fraction", p.min_fraction);
    p.max_fraction = c.get_double("max_fraction", p.max_fraction);
    p.solid_background_only = c.get_bool("solid_background_only", p.solid_background_only);
    c.done();
    return p;
}

inline OracleRaterSpec oracle_spec_from(ConfigCursor c) {
    OracleRaterSpec s;
    s.tau_p = c.get_double("tau_p", s.tau_p);
    s.tau_b = c.get_double("tau_b", s.tau_b);
    s.sat_lo = c.get_double("sat_lo", s.sat_lo);
    s.sat_hi = c.get_double("sat_hi", s.sat_hi);
    s.rho = c.get_double("rho", s.rho);
    c.done();
    return s;
}

inline std::uint64_t effective_seed(ConfigCursor& c, const CliArgs& args,
                                    std::uint64_t def = 0) {
    if (args.seed) {
        c.get_u64("seed", def);
        return *args.seed;
    }
    return c.get_u64("seed", def);
}

// ---------------------------------------------------------------------------
// Training data plumbing

struct TrainDataSpec {
    std::vector<DatasetTask> tasks;
    ProductGenConfig product;
    double superres_noise = 0.01;
    int vocab = 257;
};

inline EditSample draw_edit_sample(DatasetTask task, const TrainStageConfig& stage,
                                   const TrainDataSpec& spec, RngStream& rng) {
    ProductGenConfig pc = spec.product;
    pc.width = stage.width;
    pc.height = stage.height;
    switch (task) {
        case DatasetTask::GeneralEdit: {
            ProductImage p = gen_product_image(pc, rng);
            return make_general_edit_sample(p, rng);
        }
        case DatasetTask::BackgroundOutpaint: {
            ProductImage p = gen_product_image(pc, rng);
            return make_background_outpaint_sample(p);
        }
        case DatasetTask::AspectRatioOutpaint: {
            pc.height = stage.width;
            ProductImage p = gen_product_image(pc, rng);
            return make_aspect_ratio_sample(p, rng);
        }
        case DatasetTask::SuperResolution: {
            ProductImage p = gen_product_image(pc, rng);
            return make_superres_pair(p.image, rng, spec.superres_noise);
        }
        case DatasetTask::Keyframe: {
            ProductImage p = gen_product_image(pc, rng);
            return make_keyframe_pair(p, rng);
        }
        case DatasetTask::SceneExtract:
        case DatasetTask::SceneSynthesize: {
            const std::size_t count = 2 + rng.uniform_int(2);
            std::vector<ProductImage> products;
            for (std::size_t i = 0; i < count; ++i)
                products.push_back(gen_product_image(pc, rng));
            return make_scene_pair(products, task == DatasetTask::SceneExtract
                                                 ? SceneDirection::Extract
                                                 : SceneDirection::Synthesize);
        }
    }
    throw std::logic_error("unreachable DatasetTask");
}

/// Mixture weights come from the stage config so curricula can rebalance
/// tasks between stages without a new sampler.
inline SampleFn make_train_sampler(TrainDataSpec spec) {
    return [spec = std::move(spec)](const TrainStageConfig& stage, RngStream& rng) {
        MixtureSpec mix;
        for (std::size_t i = 0; i < spec.tasks.size(); ++i)
            mix.entries.push_back({dataset_task_name(spec.tasks[i]),
                                   i < stage.mix_weights.size() ? stage.mix_weights[i] : 0.0});
        const std::size_t pick = pick_mixture(mix, rng);
        EditSample s = draw_edit_sample(spec.tasks[pick], stage, spec, rng);
        FlowExample ex;
        ex.x0 = std::move(s.target);
        ex.cond = std::move(s.inputs);
        ex.cond.text = tokenize(s.prompt, spec.vocab);
        return ex;
    };
}

// ---------------------------------------------------------------------------
// Checkpoint helpers

/// Inference runs on the EMA weights when the checkpoint carries them.
inline ModelParams inference_params(ModelCheckpoint&& ck, bool use_ema, bool* used_ema) {
    ModelParams p = std::move(ck.params);
    const bool apply = use_ema && ck.ema.has_value();
    if (apply)
        for (std::size_t i = 0; i < p.blocks.size(); ++i) p.blocks[i].v = ck.ema->shadow[i];
    if (used_ema) *used_ema = apply;
    return p;
}

inline ModelCheckpoint load_checkpoint_checked(const std::string& path, const std::string& what) {
    detail::require_file(path, what);
    return load_model_checkpoint(path);
}

inline RewardParams load_reward_checked(const std::string& path) {
    detail::require_file(path, "reward checkpoint");
    return load_reward_checkpoint(path);
}

// ---------------------------------------------------------------------------
// Synthetic judged composites (reward training and review simulation)

struct JudgedComposite {
    ProductImage product;
    LatentGrid reference;
    LatentGrid mask;
    LatentGrid generated;
    bool corrupted = false;
    std::string kind = "clean";
    std::string image_id;
};

/// Clean composites reproduce the reference bit-exactly; corruptions push one
/// defect feature across its oracle threshold (in-mask noise or an
/// oversaturated background fill).
inline JudgedComposite make_judged_composite(const ProductGenConfig& pc, int canvas_h,
                                             int canvas_w, bool corrupt, RngStream rng) {
    JudgedComposite j;
    RngStream prng = rng.child(1);
    j.product = gen_product_image(pc, prng);
    const Placement pl = dynamic_placement(j.product.mask, canvas_h, canvas_w);
    j.reference = place_product(j.product, pl, canvas_h, canvas_w);
    j.mask = place_mask(j.product.mask, pl, canvas_h, canvas_w);
    j.generated = j.reference;
    j.corrupted = corrupt;
    j.image_id = j.product.sample_id;
    if (!corrupt) return j;

    RngStream crng = rng.child(2);
    if (crng.uniform_int(2) == 0) {
        j.kind = "product_noise";
        for (int y = 0; y < canvas_h; ++y)
            for (int x = 0; x < canvas_w; ++x) {
                if (j.mask.at(0, y, x) < 0.5f) continue;
                for (int c = 0; c < j.generated.channels; ++c) {
                    const float bump = 0.35f * static_cast<float>(crng.uniform() - 0.5);
                    float v = j.generated.at(c, y, x) + bump;
                    j.generated.at(c, y, x) = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                }
            }
    } else {
        j.kind = "saturated_background";
        const int hot = static_cast<int>(crng.uniform_int(3));
        for (int y = 0; y < canvas_h; ++y)
            for (int x = 0; x < canvas_w; ++x) {
                if (j.mask.at(0, y, x) >= 0.5f) continue;
                for (int c = 0; c < j.generated.channels; ++c)
                    j.generated.at(c, y, x) = (c == hot) ? 1.0f : 0.0f;
            }
    }
    return j;
}

// ---------------------------------------------------------------------------
// Manifest serialization

inline Json pipeline_manifest_json(const PipelineManifest& m, const std::string& output_file,
                                   const std::string& mask_file, const std::string& output_hash) {
    Json j;
    j["input_id"] = m.input_id;
    j["task"] = to_string(m.task);
    j["eligible"] = m.verdict.eligible;
    j["eligibility_reason"] = eligibility_reason_name(m.verdict.reason);
    j["prompts"] = m.prompts;
    Json cands = Json::array();
    for (const CandidateRecord& c : m.candidates) {
        Json cj;
        cj["seed"] = c.seed;
        cj["prompt_index"] = c.prompt_index;
        cj["prompt"] = c.prompt;
        if (c.reward)
            cj["reward"] = *c.reward;
        else
            cj["reward"] = nullptr;
        cj["failed"] = c.failed;
        cj["note"] = c.note;
        cands.push_back(std::move(cj));
    }
    j["candidates"] = std::move(cands);
    if (m.selected)
        j["selected"] = *m.selected;
    else
        j["selected"] = nullptr;
    if (m.dropped_reason)
        j["dropped_reason"] = *m.dropped_reason;
    else
        j["dropped_reason"] = nullptr;
    if (m.has_output) {
        j["output"] = output_file;
        j["output_mask"] = mask_file;
        j["output_hash"] = output_hash;
    } else {
        j["output"] = nullptr;
        j["output_mask"] = nullptr;
        j["output_hash"] = nullptr;
    }
    j["scale"] = m.output_scale;
    j["band_top"] = m.band_top;
    j["placement"] = Json{{"dst_x", m.placement.dst_x},
                          {"dst_y", m.placement.dst_y},
                          {"src_x0", m.placement.src_x0},
                          {"src_y0", m.placement.src_y0},
                          {"width", m.placement.width},
                          {"height", m.placement.height}};
    j["notes"] = m.notes;
    return j;
}

// ---------------------------------------------------------------------------
// train-flow

inline int cmd_train_flow(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                          std::ostream& err) {
    detail::Timer timer("train-flow");
    const ModelConfig base = model_config_from(root.child_or_empty("model"));
    const TrainHyper hyper = train_hyper_from(root.child_or_empty("hyper"));

    const Json& stages_json = root.require_array("stages");
    if (stages_json.empty()) throw ConfigError("config.stages: need at least one stage");
    std::vector<TrainStageConfig> stages;
    std::vector<std::map<DatasetTask, double>> stage_mix;
    for (std::size_t i = 0; i < stages_json.size(); ++i) {
        ConfigCursor sc = root.element("stages", stages_json[i], i);
        TrainStageConfig st;
        st.stage_id = sc.get_int("stage_id", static_cast<int>(i));
        st.height = sc.require_int("height");
        st.width = sc.require_int("width");
        st.steps = sc.require_int("steps");
        st.shift = sc.get_double("shift", 1.0);

        std::map<DatasetTask, double> mix;
        if (sc.has("mixture")) {
            ConfigCursor mc = sc.child("mixture");
            for (DatasetTask t :
                 {DatasetTask::GeneralEdit, DatasetTask::BackgroundOutpaint,
                  DatasetTask::AspectRatioOutpaint, DatasetTask::SuperResolution,
                  DatasetTask::Keyframe, DatasetTask::SceneExtract,
                  DatasetTask::SceneSynthesize})
                if (mc.has(dataset_task_name(t))) mix[t] = mc.require_double(dataset_task_name(t));
            mc.done();
            if (mix.empty()) throw ConfigError(sc.path() + ".mixture: no tasks given");
        } else {
            mix[DatasetTask::BackgroundOutpaint] = 1.0;
        }
        sc.done();

        for (const auto& [task, weight] : mix) {
            if (weight <= 0.0) continue;
            if (task == DatasetTask::AspectRatioOutpaint &&
                st.height != aspect_canvas_height(st.width))
                throw ConfigError(sc.path() + ": aspect_ratio_outpaint needs height == " +
                                  std::to_string(aspect_canvas_height(st.width)) +
                                  " for width " + std::to_string(st.width));
            if (task == DatasetTask::SuperResolution && (st.height % 3 || st.width % 3))
                throw ConfigError(sc.path() +
                                  ": super_resolution needs dimensions divisible by 3");
        }
        stages.push_back(st);
        stage_mix.push_back(std::move(mix));
    }
    for (std::size_t i = 1; i < stages.size(); ++i)
        if (stages[i].stage_id <= stages[i - 1].stage_id)
            throw ConfigError("config.stages: stage_id must be strictly increasing");

    TrainDataSpec data;
    {
        ConfigCursor dc = root.child_or_empty("data");
        data.product = product_config_from(dc.child_or_empty("product"), ProductDims::Forbidden);
        data.superres_noise = dc.get_double("superres_noise", data.superres_noise);
        dc.done();
    }
    data.vocab = base.vocab;
    for (DatasetTask t :
         {DatasetTask::GeneralEdit, DatasetTask::BackgroundOutpaint,
          DatasetTask::AspectRatioOutpaint, DatasetTask::SuperResolution, DatasetTask::Keyframe,
          DatasetTask::SceneExtract, DatasetTask::SceneSynthesize}) {
        bool used = false;
        for (const auto& mix : stage_mix) used = used || mix.count(t) > 0;
        if (used) data.tasks.push_back(t);
    }
    for (std::size_t si = 0; si < stages.size(); ++si) {
        stages[si].mix_weights.resize(data.tasks.size(), 0.0);
        for (std::size_t ti = 0; ti < data.tasks.size(); ++ti) {
            const auto it = stage_mix[si].find(data.tasks[ti]);
            if (it != stage_mix[si].end()) stages[si].mix_weights[ti] = it->second;
        }
    }

    const std::uint64_t seed = effective_seed(root, args);
    const std::string resume_path = root.get_string("resume", "");
    const std::string ck_name = root.get_string("checkpoint_name", "flow.cvck");
    const std::string log_name = root.get_string("log_name", "train_log.jsonl");
    root.done();

    std::optional<ModelParams> resume_params;
    std::optional<OptimizerState> resume_opt;
    std::optional<EmaState> resume_ema;
    int resume_stage = 0, resume_step = 0;
    if (!resume_path.empty()) {
        ModelCheckpoint ck = load_checkpoint_checked(resume_path, "resume checkpoint");
        if (!ck.optimizer || !ck.ema)
            throw ConfigError("resume checkpoint lacks optimizer or EMA state: " + resume_path);
        resume_stage = ck.stage;
        resume_step = ck.step;
        if (resume_stage < 0 || resume_stage >= static_cast<int>(stages.size()))
            throw ConfigError("resume checkpoint stage index outside config stages");
        ModelConfig expect = base;
        expect.height = stages[static_cast<std::size_t>(resume_stage)].height;
        expect.width = stages[static_cast<std::size_t>(resume_stage)].width;
        if (ck.params.cfg.arch_hash() != expect.arch_hash())
            throw ConfigError("resume checkpoint architecture differs from config");
        resume_params = std::move(ck.params);
        resume_opt = std::move(ck.optimizer);
        resume_ema = std::move(ck.ema);
    }
    timer.phase("setup");

    const TrainResult res =
        train(base, stages, make_train_sampler(std::move(data)), hyper, seed,
              std::move(resume_params), std::move(resume_opt), std::move(resume_ema),
              resume_stage, resume_step);
    timer.phase("train");

    detail::ensure_out_dir(args);
    std::vector<Json> rows;
    rows.reserve(res.log.size());
    for (const TrainLogRow& r : res.log)
        rows.push_back(Json{{"stage", r.stage},
                            {"step", r.step},
                            {"loss", r.loss},
                            {"grad_norm", r.grad_norm},
                            {"spike", r.spike}});
    detail::write_jsonl_file(detail::out_path(args, log_name), rows);

    int ck_stage = static_cast<int>(stages.size()) - 1;
    int ck_step = stages.back().steps;
    if (res.aborted) {
        ck_stage = resume_stage;
        ck_step = resume_step;
        if (!res.log.empty()) {
            for (std::size_t i = 0; i < stages.size(); ++i)
                if (stages[i].stage_id == res.log.back().stage)
                    ck_stage = static_cast<int>(i);
            ck_step = res.log.back().step;
        }
    }
    save_model_checkpoint(detail::out_path(args, ck_name), res.params, &res.optimizer, &res.ema,
                          ck_stage, ck_step);
    timer.phase("write");
    timer.write_sidecar(args);

    out << "train-flow: " << res.log.size() << " steps logged, checkpoint "
        << detail::out_path(args, ck_name) << "\n";
    if (res.aborted) {
        err << "training aborted: " << res.abort_reason << "\n";
        return 4;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// sample

inline int cmd_sample(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                      std::ostream& /*err*/) {
    detail::Timer timer("sample");
    const std::string ck_path = root.require_string("checkpoint");
    const bool use_ema = root.get_bool("use_ema", true);

    const std::vector<std::string> prompts = root.require_string_array("prompts");
    if (prompts.empty()) throw ConfigError("config.prompts: must not be empty");
    const std::string negative = root.get_string("negative_prompt", "");
    const int steps = root.get_int("steps", 8);
    const double shift = root.get_double("shift", 1.0);

    GuidanceConfig guidance;
    if (root.has("guidance") && root.has("task"))
        throw ConfigError("config: give either \"task\" or \"guidance\", not both");
    if (root.has("guidance"))
        guidance = guidance_config_from(root.child("guidance"));
    else if (root.has("task"))
        guidance = resolve_task_guidance(parse_task_kind(root.require_string("task"),
                                                         "config.task"));
    if (guidance.use_negative && negative.empty())
        throw ConfigError("config: guidance drops to the negative prompt but none is set");

    const std::uint64_t seed = effective_seed(root, args);
    root.done();

    bool used_ema = false;
    const ModelParams params =
        inference_params(load_checkpoint_checked(ck_path, "checkpoint"), use_ema, &used_ema);
    const ModelConfig& cfg = params.cfg;
    timer.phase("setup");

    const ModelField field(params);
    const GuidedField guided(field, guidance);
    const Schedule schedule = make_schedule(steps, ShiftFactor(shift));

    detail::ensure_out_dir(args);
    std::vector<Json> rows;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        ConditionSet cond;
        cond.text = tokenize(prompts[i], cfg.vocab);
        if (!negative.empty()) cond.negative_text = tokenize(negative, cfg.vocab);
        const LatentGrid z = grid_randn(cfg.channels, cfg.height, cfg.width,
                                        RngStream(seed, {0x73616d706c65ULL, i}));
        field.reset_eval_count();
        const LatentGrid x = euler_sample(guided, z, schedule, cond);
        const ImageU8 img = grid_to_image(x);
        const std::string name = detail::indexed_name("sample", static_cast<int>(i), "ppm");
        write_ppm(detail::out_path(args, name), img);
        rows.push_back(Json{{"index", i},
                            {"prompt", prompts[i]},
                            {"file", name},
                            {"hash", detail::image_digest(img)},
                            {"seed", seed},
                            {"steps", steps},
                            {"variant", to_string(guidance.variant)},
                            {"model_evals", field.eval_count()},
                            {"ema", used_ema}});
    }
    timer.phase("sample");
    detail::write_jsonl_file(detail::out_path(args, "manifest.jsonl"), rows);
    timer.write_sidecar(args);
    out << "sample: wrote " << prompts.size() << " images to " << args.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// outpaint

struct SynthInputsSpec {
    int count = 0;
    std::uint64_t seed = 0;
    ProductGenConfig product;
};

inline SynthInputsSpec parse_synth_inputs(ConfigCursor& ic, const CliArgs& args) {
    SynthInputsSpec s;
    s.count = ic.require_int("count");
    if (s.count < 1) throw ConfigError(ic.path() + ".count: must be >= 1");
    s.seed = args.seed ? (ic.get_u64("seed", 0), *args.seed) : ic.get_u64("seed", 0);
    s.product = product_config_from(ic.child("product"), ProductDims::Required);
    ic.done();
    return s;
}

inline std::vector<ProductImage> synth_inputs(const SynthInputsSpec& spec) {
    std::vector<ProductImage> inputs;
    inputs.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        RngStream rng(spec.seed, {0x696e70757473ULL, static_cast<std::uint64_t>(i)});
        inputs.push_back(gen_product_image(spec.product, rng));
    }
    return inputs;
}

inline std::vector<ProductImage> load_inputs_manifest(const std::string& path) {
    detail::require_file(path, "inputs manifest");
    std::ifstream f(path, std::ios::binary);
    std::vector<ProductImage> inputs;
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json row;
        try {
            row = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        ConfigCursor rc(row, path + ":" + std::to_string(lineno));
        ProductImage p;
        p.sample_id = rc.require_string("id");
        const std::string scene = (dir / rc.require_string("scene")).string();
        const std::string on_white = (dir / rc.require_string("on_white")).string();
        const std::string mask = (dir / rc.require_string("mask")).string();
        p.caption = rc.require_string("caption");
        rc.done();
        p.image = image_to_grid(read_ppm(scene));
        p.on_white = image_to_grid(read_ppm(on_white));
        const ImageU8 m = read_pgm(mask);
        require_binary_mask(m);
        p.mask = image_to_grid(m);
        if (!p.image.same_shape(p.on_white) || p.mask.height != p.image.height ||
            p.mask.width != p.image.width)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": image/on_white/mask dimensions disagree");
        inputs.push_back(std::move(p));
    }
    if (inputs.empty()) throw ConfigError(path + ": no inputs");
    return inputs;
}

inline int cmd_outpaint(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                        std::ostream& /*err*/) {
    detail::Timer timer("outpaint");
    const TaskKind task = parse_outpaint_task(root.require_string("task"), "config.task");
    const std::string ck_path = root.require_string("checkpoint");
    const bool use_ema = root.get_bool("use_ema", true);
    const std::string reward_path = root.require_string("reward_checkpoint");
    const GenerationConfig gen = generation_config_from(root.child_or_empty("generation"));

    std::string sr_path;
    if (gen.superres) {
        if (!root.has("sr_checkpoint"))
            throw ConfigError("config: superres needs \"sr_checkpoint\"");
        sr_path = root.require_string("sr_checkpoint");
    } else if (root.has("sr_checkpoint")) {
        throw ConfigError("config.sr_checkpoint given but generation.superres is false");
    }

    const bool have_synth = root.has("inputs");
    const bool have_manifest = root.has("inputs_manifest");
    if (have_synth == have_manifest)
        throw ConfigError("config: give exactly one of \"inputs\" or \"inputs_manifest\"");
    if (have_manifest && gen.superres)
        throw ConfigError("config: superres recompositing needs synthesized inputs");

    SynthInputsSpec synth_spec;
    std::string manifest_path;
    if (have_synth) {
        ConfigCursor ic = root.child("inputs");
        synth_spec = parse_synth_inputs(ic, args);
    } else {
        manifest_path = root.require_string("inputs_manifest");
    }
    root.done();

    const ModelParams params =
        inference_params(load_checkpoint_checked(ck_path, "checkpoint"), use_ema, nullptr);
    const RewardParams reward = load_reward_checked(reward_path);
    std::optional<ModelParams> sr_params;
    if (gen.superres) {
        ModelCheckpoint sr = load_checkpoint_checked(sr_path, "sr checkpoint");
        if (sr.params.cfg.height != 3 * params.cfg.height ||
            sr.params.cfg.width != 3 * params.cfg.width)
            throw ConfigError("config.sr_checkpoint: resolution must be 3x the base model");
        sr_params = inference_params(std::move(sr), use_ema, nullptr);
    }
    const std::vector<ProductImage> inputs =
        have_synth ? synth_inputs(synth_spec) : load_inputs_manifest(manifest_path);

    if (task == TaskKind::BackgroundOutpaint) {
        if (gen.width != params.cfg.width || gen.height != params.cfg.height)
            throw ConfigError("config.generation: resolution must match the model (" +
                              std::to_string(params.cfg.width) + "x" +
                              std::to_string(params.cfg.height) + ")");
        for (const ProductImage& p : inputs)
            if (p.image.width > gen.width || p.image.height > gen.height)
                throw ConfigError("config.inputs: product larger than the generation canvas");
    } else {
        for (const ProductImage& p : inputs)
            if (p.image.width != params.cfg.width ||
                aspect_canvas_height(p.image.width) != params.cfg.height)
                throw ConfigError("config.inputs: aspect canvas for width " +
                                  std::to_string(p.image.width) + " does not match the model");
        if (static_cast<std::size_t>(gen.n_candidates) > gen.tuned_seeds.size())
            throw ConfigError("config.generation: aspect outpainting needs one tuned seed "
                              "per candidate");
    }
    timer.phase("setup");

    const int n = static_cast<int>(inputs.size());
    std::vector<PipelineManifest> results(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        results[static_cast<std::size_t>(i)] =
            run_pipeline(inputs[static_cast<std::size_t>(i)], task, gen, params, reward,
                         sr_params ? &*sr_params : nullptr);
    });
    timer.phase("pipeline");

    detail::ensure_out_dir(args);
    std::vector<Json> rows;
    int emitted = 0;
    for (int i = 0; i < n; ++i) {
        const PipelineManifest& m = results[static_cast<std::size_t>(i)];
        std::string out_name, mask_name, hash;
        if (m.has_output) {
            out_name = detail::indexed_name("out", i, "ppm");
            mask_name = detail::indexed_name("mask", i, "pgm");
            const ImageU8 img = grid_to_image(m.output);
            write_ppm(detail::out_path(args, out_name), img);
            write_pgm(detail::out_path(args, mask_name), grid_to_image(m.output_mask));
            hash = detail::image_digest(img);
            ++emitted;
        }
        rows.push_back(pipeline_manifest_json(m, out_name, mask_name, hash));
    }
    detail::write_jsonl_file(detail::out_path(args, "manifest.jsonl"), rows);
    timer.phase("write");
    timer.write_sidecar(args);

    out << "outpaint: " << emitted << "/" << n << " outputs emitted to " << args.out_dir << "\n";
    return emitted > 0 ? 0 : 3;
}

// ---------------------------------------------------------------------------
// seed-sweep

inline int cmd_seed_sweep(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                          std::ostream& /*err*/) {
    detail::Timer timer("seed-sweep");
    const TaskKind task = parse_outpaint_task(root.require_string("task"), "config.task");
    const std::string ck_path = root.require_string("checkpoint");
    const bool use_ema = root.get_bool("use_ema", true);
    const std::string reward_path = root.require_string("reward_checkpoint");
    const GenerationConfig gen = generation_config_from(root.child_or_empty("generation"));

    std::vector<std::uint64_t> seeds;
    if (root.has("seeds") && root.has("seed_range"))
        throw ConfigError("config: give either \"seeds\" or \"seed_range\", not both");
    if (root.has("seeds")) {
        seeds = root.require_u64_array("seeds");
    } else if (root.has("seed_range")) {
        ConfigCursor sr = root.child("seed_range");
        const std::uint64_t first = sr.require_u64("first");
        const int count = sr.require_int("count");
        sr.done();
        if (count < 1) throw ConfigError("config.seed_range.count: must be >= 1");
        for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
    } else {
        throw ConfigError("config: missing \"seeds\" or \"seed_range\"");
    }
    const double top_fraction = root.get_double("top_fraction", 0.10);

    ConfigCursor ic = root.child("inputs");
    const SynthInputsSpec synth_spec = parse_synth_inputs(ic, args);
    root.done();

    const ModelParams params =
        inference_params(load_checkpoint_checked(ck_path, "checkpoint"), use_ema, nullptr);
    const RewardParams reward = load_reward_checked(reward_path);
    const std::vector<ProductImage> inputs = synth_inputs(synth_spec);
    timer.phase("setup");

    const SweepReport report = seed_sweep(inputs, seeds, task, params, gen, reward, top_fraction);
    timer.phase("sweep");

    detail::ensure_out_dir(args);
    Json j;
    j["task"] = to_string(task);
    j["inputs"] = inputs.size();
    Json entries = Json::array();
    for (const SweepEntry& e : report.entries)
        entries.push_back(
            Json{{"seed", e.seed}, {"mean_reward", e.mean_reward}, {"rank", e.rank}});
    j["entries"] = std::move(entries);
    j["top_subset"] = report.top_subset;
    detail::write_json_file(detail::out_path(args, "sweep.json"), j);
    timer.write_sidecar(args);

    out << "seed-sweep: ranked " << report.entries.size() << " seeds, best "
        << report.entries.front().seed << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval-rewards

inline int cmd_eval_rewards(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                            std::ostream& /*err*/) {
    detail::Timer timer("eval-rewards");
    const ReviewTask task = parse_review_task(root.get_string("task", "background"));
    const int count = root.get_int("count", 120);
    if (count < 4) throw ConfigError("config.count: need at least 4 inputs");
    ConfigCursor cc = root.child_or_empty("canvas");
    const int canvas_w = cc.get_int("width", 16);
    const int canvas_h = cc.get_int("height", 24);
    cc.done();
    const ProductGenConfig pc = product_config_from(root.child_or_empty("product"), ProductDims::Optional);
    if (pc.width > canvas_w || pc.height > canvas_h)
        throw ConfigError("config.product: larger than the canvas");
    const OracleRaterSpec oracle = oracle_spec_from(root.child_or_empty("oracle"));
    const double holdout_fraction = root.get_double("holdout_fraction", 0.25);
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        throw ConfigError("config.holdout_fraction: must be in [0, 1)");

    RewardTrainConfig tc;
    tc.task = review_task_name(task);
    {
        ConfigCursor t = root.child_or_empty("train");
        tc.lr = t.get_double("lr", tc.lr);
        tc.epochs = t.get_int("epochs", tc.epochs);
        t.done();
    }
    const std::uint64_t seed = effective_seed(root, args);
    tc.seed = seed;
    const std::string ck_name = root.get_string("checkpoint_name", "reward.cvck");
    root.done();
    timer.phase("setup");

    struct Labeled {
        JudgedComposite composite;
        std::vector<double> features;
        double target = 0.0;
    };
    const int total = 2 * count;
    std::vector<Labeled> examples(static_cast<std::size_t>(total));
    parallel_for(total, [&](int i) {
        const int input = i / 2;
        const bool corrupt = (i % 2) == 1;
        RngStream rng(seed, {0x726577617264ULL, static_cast<std::uint64_t>(input),
                             corrupt ? 1ULL : 0ULL});
        Labeled& L = examples[static_cast<std::size_t>(i)];
        L.composite = make_judged_composite(pc, canvas_h, canvas_w, corrupt, rng.child(0));
        L.features =
            reward_features(L.composite.reference, L.composite.generated, L.composite.mask);
        double flagged = 0.0;
        for (std::uint64_t r = 0; r < 2; ++r) {
            const RaterRecord rec = oracle_rater(
                L.composite.reference, L.composite.generated, L.composite.mask, oracle,
                L.composite.image_id, r == 0 ? "rater-a" : "rater-b", rng.child(10 + r));
            bool any = false;
            for (const bool d : rec.defect) any = any || d;
            flagged += any ? 1.0 : 0.0;
        }
        L.target = flagged / 2.0;
    });
    timer.phase("synthesize");

    const int holdout = static_cast<int>(static_cast<double>(count) * holdout_fraction);
    const int train_inputs = count - holdout;
    std::vector<RewardExample> train_set;
    for (int i = 0; i < 2 * train_inputs; ++i)
        train_set.push_back({examples[static_cast<std::size_t>(i)].features,
                             examples[static_cast<std::size_t>(i)].target});
    const RewardTrainResult trained = train_reward(train_set, tc);
    timer.phase("train");

    int holdout_correct = 0, holdout_total = 0;
    for (int i = 2 * train_inputs; i < total; ++i) {
        const Labeled& L = examples[static_cast<std::size_t>(i)];
        const double p = reward_score(trained.params, L.features);
        holdout_correct += ((p > 0.5) == L.composite.corrupted) ? 1 : 0;
        ++holdout_total;
    }
    int rank_correct = 0;
    for (int i = 0; i < count; ++i) {
        const double clean = reward_score(trained.params,
                                          examples[static_cast<std::size_t>(2 * i)].features);
        const double corrupt = reward_score(
            trained.params, examples[static_cast<std::size_t>(2 * i + 1)].features);
        rank_correct += (corrupt > clean) ? 1 : 0;
    }
    timer.phase("evaluate");

    detail::ensure_out_dir(args);
    save_reward_checkpoint(detail::out_path(args, ck_name), trained.params);
    Json metrics;
    metrics["task"] = review_task_name(task);
    metrics["examples"] = train_set.size();
    metrics["holdout_examples"] = holdout_total;
    metrics["first_epoch_loss"] = trained.epoch_loss.front();
    metrics["final_epoch_loss"] = trained.epoch_loss.back();
    metrics["clamp_warnings"] = trained.clamp_warnings;
    metrics["calibration_warning"] = trained.params.calibration_warning;
    metrics["holdout_accuracy"] =
        holdout_total ? static_cast<double>(holdout_correct) / holdout_total : 0.0;
    metrics["pair_rank_accuracy"] = static_cast<double>(rank_correct) / count;
    detail::write_json_file(detail::out_path(args, "reward_metrics.json"), metrics);
    timer.write_sidecar(args);

    out << "eval-rewards: trained on " << train_set.size() << " examples, pair rank accuracy "
        << (static_cast<double>(rank_correct) / count) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// simulate-review

inline int cmd_simulate_review(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                               std::ostream& /*err*/) {
    detail::Timer timer("simulate-review");
    const ReviewTask task = parse_review_task(root.get_string("task", "background"));
    if (task != ReviewTask::Background)
        throw ConfigError("config.task: the oracle rater answers the background template only");
    const int count = root.get_int("count", 100);
    if (count < 1) throw ConfigError("config.count: must be >= 1");
    ConfigCursor cc = root.child_or_empty("canvas");
    const int canvas_w = cc.get_int("width", 16);
    const int canvas_h = cc.get_int("height", 24);
    cc.done();
    const ProductGenConfig pc = product_config_from(root.child_or_empty("product"), ProductDims::Optional);
    if (pc.width > canvas_w || pc.height > canvas_h)
        throw ConfigError("config.product: larger than the canvas");
    const OracleRaterSpec oracle = oracle_spec_from(root.child_or_empty("oracle"));
    const double defect_fraction = root.get_double("defect_fraction", 0.3);
    const std::uint64_t seed = effective_seed(root, args);

    std::vector<RateReport> ingested;
    if (root.has("ingest")) {
        const Json& rows = root.require_array("ingest");
        for (std::size_t i = 0; i < rows.size(); ++i) {
            ConfigCursor rc = root.element("ingest", rows[i], i);
            const ReviewTask rt = parse_review_task(rc.require_string("task"));
            const std::vector<double> per_q = rc.require_double_array("per_question");
            const double overall = rc.require_double("overall");
            const std::uint64_t n = rc.require_u64("count");
            rc.done();
            try {
                ingested.push_back(
                    ingest_rate_row(rt, per_q, overall, static_cast<std::size_t>(n)));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("config.ingest[" + std::to_string(i) + "]: " + e.what());
            }
        }
    }
    root.done();
    timer.phase("setup");

    std::vector<std::array<RaterRecord, 2>> records(static_cast<std::size_t>(count));
    parallel_for(count, [&](int i) {
        RngStream rng(seed, {0x726576696577ULL, static_cast<std::uint64_t>(i)});
        const bool corrupt = rng.uniform() < defect_fraction;
        const JudgedComposite j =
            make_judged_composite(pc, canvas_h, canvas_w, corrupt, rng.child(1));
        for (std::uint64_t r = 0; r < 2; ++r)
            records[static_cast<std::size_t>(i)][r] =
                oracle_rater(j.reference, j.generated, j.mask, oracle, j.image_id,
                             r == 0 ? "rater-a" : "rater-b", rng.child(10 + r));
    });
    timer.phase("simulate");

    const std::vector<std::string>& questions = template_questions(task);
    std::vector<Json> record_rows;
    std::vector<ReviewOutcome> outcomes;
    for (const auto& pair : records) {
        for (const RaterRecord& r : pair) {
            Json answers = Json::object();
            for (std::size_t q = 0; q < questions.size(); ++q)
                answers[questions[q]] = r.defect[q] ? "DEFECT" : "NO_DEFECT";
            record_rows.push_back(Json{{"image_id", r.image_id},
                                       {"rater_id", r.rater_id},
                                       {"task", review_task_name(r.task)},
                                       {"answers", std::move(answers)}});
        }
        outcomes.push_back(aggregate_review(pair[0], pair[1]));
    }
    const RateReport report = no_defect_rates(outcomes);
    timer.phase("aggregate");

    detail::ensure_out_dir(args);
    detail::write_jsonl_file(detail::out_path(args, "records.jsonl"), record_rows);
    auto report_json = [&questions](const RateReport& r) {
        Json per = Json::object();
        const std::vector<std::string>& names = template_questions(r.task);
        for (std::size_t q = 0; q < names.size(); ++q)
            per[names[q]] = r.per_question_no_defect[q];
        return Json{{"task", review_task_name(r.task)},
                    {"count", r.count},
                    {"per_question_no_defect", std::move(per)},
                    {"overall_no_defect", r.overall_no_defect}};
    };
    Json j = report_json(report);
    if (!ingested.empty()) {
        Json rows = Json::array();
        for (const RateReport& r : ingested) rows.push_back(report_json(r));
        j["ingested"] = std::move(rows);
    }
    detail::write_json_file(detail::out_path(args, "rates.json"), j);
    timer.write_sidecar(args);

    out << "simulate-review: " << count << " images, overall no-defect rate "
        << report.overall_no_defect << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// benchmark

inline int cmd_benchmark(ConfigCursor& root, const CliArgs& args, std::ostream& out,
                         std::ostream& /*err*/) {
    detail::Timer timer("benchmark");
    const std::string ck_path = root.require_string("checkpoint");
    const bool use_ema = root.get_bool("use_ema", true);
    const int steps = root.get_int("steps", 8);
    const double shift = root.get_double("shift", 1.0);
    const std::string prompt = root.get_string("prompt", "a blue diamond");
    const std::string negative = root.get_string("negative_prompt", "plain backdrop");
    std::vector<std::string> variants = {"none", "text_drop", "full_drop", "sequential"};
    if (root.has("variants")) variants = root.require_string_array("variants");
    const std::uint64_t seed = effective_seed(root, args);
    root.done();

    const ModelParams params =
        inference_params(load_checkpoint_checked(ck_path, "checkpoint"), use_ema, nullptr);
    const ModelConfig& cfg = params.cfg;
    timer.phase("setup");

    const ModelField field(params);
    const Schedule schedule = make_schedule(steps, ShiftFactor(shift));
    ConditionSet cond;
    cond.text = tokenize(prompt, cfg.vocab);
    cond.negative_text = tokenize(negative, cfg.vocab);
    const LatentGrid z =
        grid_randn(cfg.channels, cfg.height, cfg.width, RngStream(seed, {0x62656e6368ULL}));

    Json entries = Json::array();
    Json timing_entries = Json::array();
    for (const std::string& name : variants) {
        GuidanceConfig g;
        g.variant = parse_guidance_variant(name, "config.variants");
        if (g.variant != GuidanceVariant::None) g.s = g.s_text = g.s_image = 2.0;
        const GuidedField guided(field, g);
        field.reset_eval_count();
        const auto t0 = std::chrono::steady_clock::now();
        const LatentGrid x = euler_sample(guided, z, schedule, cond);
        const auto t1 = std::chrono::steady_clock::now();
        entries.push_back(Json{{"variant", name},
                               {"model_evals", field.eval_count()},
                               {"evals_per_step",
                                static_cast<double>(field.eval_count()) / steps},
                               {"hash", detail::image_digest(grid_to_image(x))}});
        timing_entries.push_back(
            Json{{"variant", name},
                 {"ms", std::chrono::duration<double, std::milli>(t1 - t0).count()}});
    }
    timer.phase("benchmark");

    detail::ensure_out_dir(args);
    Json j;
    j["steps"] = steps;
    j["width"] = cfg.width;
    j["height"] = cfg.height;
    j["entries"] = std::move(entries);
    detail::write_json_file(detail::out_path(args, "benchmark.json"), j);
    Json tj;
    tj["entries"] = std::move(timing_entries);
    detail::write_json_file(detail::out_path(args, "benchmark_timings.json"), tj);
    timer.write_sidecar(args);

    out << "benchmark: " << variants.size() << " variants at " << steps << " steps\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline int run_canvas(const std::vector<std::string>& args, std::ostream& out,
                      std::ostream& err) {
    try {
        const CliArgs a = parse_cli_args(args);
        const Json config = load_json_file(a.config_path);
        ConfigCursor root(config, "config");
        if (a.command == "train-flow") return cmd_train_flow(root, a, out, err);
        if (a.command == "sample") return cmd_sample(root, a, out, err);
        if (a.command == "outpaint") return cmd_outpaint(root, a, out, err);
        if (a.command == "seed-sweep") return cmd_seed_sweep(root, a, out, err);
        if (a.command == "eval-rewards") return cmd_eval_rewards(root, a, out, err);
        if (a.command == "simulate-review") return cmd_simulate_review(root, a, out, err);
        if (a.command == "benchmark") return cmd_benchmark(root, a, out, err);
        throw ConfigError("unknown command \"" + a.command + "\"\n" + cli_usage());
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const DegenerateInput& e) {
        err << "degenerate input: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const NumericDivergence& e) {
        err << "numeric divergence: " << e.what() << "\n";
        return 4;
    } catch (const TrainingDiverged& e) {
        err << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace canvas
