#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "canvas/model.hpp"
#include "canvas/optim.hpp"
#include "canvas/rng.hpp"
#include "canvas/schedule.hpp"

namespace canvas {

struct TrainStageConfig {
    int stage_id = 0;
    int height = 8;
    int width = 8;
    std::vector<double> mix_weights;
    int steps = 0;
    double shift = 1.0;
};

struct TrainHyper {
    int batch_size = 16;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::optional<double> clip_norm = 1e3;
    double ema_decay = 0.99;
    double p_text = 0.1;
    double p_image = 0.1;
    double spike_ratio = 3.0;
    int spike_window = 100;
    int max_consecutive_spikes = 5;
};

struct TrainLogRow {
    int stage = 0;
    int step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    bool spike = false;
};

struct TrainResult {
    ModelParams params;
    EmaState ema;
    OptimizerState optimizer;
    std::vector<TrainLogRow> log;
    bool aborted = false;
    std::string abort_reason;
};

/// Supplies one training example at the stage's resolution; the stream is the
/// sample's private child stream, so parallel prefetch cannot change draws.
using SampleFn = std::function<FlowExample(const TrainStageConfig&, RngStream&)>;

namespace detail {

inline void require_stages_valid(const std::vector<TrainStageConfig>& stages) {
    if (stages.empty()) throw std::invalid_argument("train: no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].height < 1 || stages[i].width < 1 || stages[i].steps < 0)
            throw std::invalid_argument("train: bad stage config");
        if (i > 0 && (stages[i].height < stages[i - 1].height ||
                      stages[i].width < stages[i - 1].width))
            throw std::invalid_argument("train: resolutions must be non-decreasing");
    }
}

}  // namespace detail

/// Multi-stage training loop: per stage, resolution-dependent blocks are
/// re-instantiated (shared blocks carried over) and optimizer/EMA state is
/// rebuilt; each step logs loss, pre-clip gradient norm, and spike flag.
/// More than max_consecutive_spikes spikes in a row aborts with the log and
/// state at the abort point intact.
inline TrainResult train(const ModelConfig& base_cfg, const std::vector<TrainStageConfig>& stages,
                         const SampleFn& data, const TrainHyper& hyper, std::uint64_t seed,
                         std::optional<ModelParams> resume_params = std::nullopt,
                         std::optional<OptimizerState> resume_opt = std::nullopt,
                         std::optional<EmaState> resume_ema = std::nullopt,
                         int resume_stage = 0, int resume_step = 0) {
    detail::require_stages_valid(stages);
    const RngStream root(seed, {0x747261696eULL});

    TrainResult res;
    bool have_state = false;
    if (resume_params) {
        res.params = std::move(*resume_params);
        res.optimizer = std::move(resume_opt.value());
        res.ema = std::move(resume_ema.value());
        have_state = true;
    }

    std::deque<double> history;
    int consecutive = 0;

    for (std::size_t si = 0; si < stages.size(); ++si) {
        const TrainStageConfig& stage = stages[si];
        if (static_cast<int>(si) < resume_stage) continue;
        const RngStream stage_stream = root.child(static_cast<std::uint64_t>(si));

        if (!have_state) {
            ModelConfig cfg = base_cfg;
            cfg.height = stage.height;
            cfg.width = stage.width;
            if (si == 0) {
                res.params = make_params(cfg, stage_stream.child(0xbeef));
            } else {
                res.params = reinstantiate_resolution(res.params, stage.height, stage.width,
                                                      stage_stream.child(0xbeef));
            }
            res.optimizer = make_optimizer(res.params, hyper.lr, hyper.weight_decay,
                                           hyper.clip_norm);
            res.optimizer.beta1 = hyper.beta1;
            res.optimizer.beta2 = hyper.beta2;
            res.optimizer.eps = hyper.eps;
            res.ema = make_ema(res.params, hyper.ema_decay);
        }
        have_state = false;

        const int first_step = (static_cast<int>(si) == resume_stage) ? resume_step : 0;
        const ShiftFactor f(stage.shift);
        for (int step = first_step; step < stage.steps; ++step) {
            const RngStream step_stream = stage_stream.child(static_cast<std::uint64_t>(step) + 1);
            const RngStream data_stream = step_stream.child(1);
            std::vector<FlowExample> batch;
            batch.reserve(static_cast<std::size_t>(hyper.batch_size));
            for (int i = 0; i < hyper.batch_size; ++i) {
                RngStream s = data_stream.child(static_cast<std::uint64_t>(i));
                FlowExample ex = data(stage, s);
                ex.cond = condition_dropout(ex.cond, hyper.p_text, hyper.p_image, s);
                batch.push_back(std::move(ex));
            }

            double loss = 0.0;
            Grads grads = fm_grad(res.params, batch, f, step_stream.child(2), &loss);
            const double grad_norm = std::sqrt(grads.sq_norm());

            bool spike = false;
            if (!history.empty())
                spike = detect_loss_spike({history.begin(), history.end()}, loss,
                                          hyper.spike_ratio);
            history.push_back(loss);
            while (static_cast<int>(history.size()) > hyper.spike_window) history.pop_front();
            consecutive = spike ? consecutive + 1 : 0;

            res.log.push_back({stage.stage_id, step, loss, grad_norm, spike});
            if (consecutive > hyper.max_consecutive_spikes) {
                res.aborted = true;
                res.abort_reason = "persistent loss spikes at stage " +
                                   std::to_string(stage.stage_id) + " step " +
                                   std::to_string(step);
                return res;
            }

            if (res.optimizer.clip_norm) clip_gradients(grads, *res.optimizer.clip_norm);
            adamw_step(res.optimizer, res.params, grads);
            ema_update(res.ema, res.params);
        }
    }
    return res;
}

}  // namespace canvas
