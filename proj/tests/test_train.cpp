#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "canvas/condition.hpp"
#include "canvas/model.hpp"
#include "canvas/rng.hpp"
#include "canvas/train.hpp"

using namespace canvas;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.channels = 1;
    cfg.height = 4;
    cfg.width = 4;
    cfg.d_emb = 8;
    cfg.d_time = 4;
    cfg.d_hidden = 24;
    cfg.vocab = 33;
    cfg.patch = 4;
    return cfg;
}

/// Two text-labelled pixel clusters at +/-1 with light noise.
FlowExample two_modes(const TrainStageConfig& stage, RngStream& rng) {
    FlowExample ex;
    const bool right = rng.uniform() < 0.5;
    const float mu = right ? 1.0f : -1.0f;
    ex.x0 = LatentGrid(1, stage.height, stage.width);
    for (auto& v : ex.x0.data) v = mu + 0.1f * rng.normal_f();
    ex.cond.text = TokenSeq{right ? 2 : 3};
    return ex;
}

/// Single biased cluster; its mean is what a carried condition head can reuse.
FlowExample biased_mode(const TrainStageConfig& stage, RngStream& rng) {
    FlowExample ex;
    ex.x0 = LatentGrid(1, stage.height, stage.width);
    for (auto& v : ex.x0.data) v = 0.8f + 0.1f * rng.normal_f();
    ex.cond.text = TokenSeq{5};
    return ex;
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    for (int id = 0; id < kNumBlocks; ++id)
        if (a.blocks[std::size_t(id)].v != b.blocks[std::size_t(id)].v) return false;
    return true;
}

}  // namespace

TEST_CASE("training is bitwise deterministic in the seed") {
    const ModelConfig cfg = tiny_config();
    std::vector<TrainStageConfig> stages = {{0, 4, 4, {}, 8, 1.0}};
    TrainHyper hyper;
    hyper.batch_size = 4;
    const TrainResult a = train(cfg, stages, two_modes, hyper, 99);
    const TrainResult b = train(cfg, stages, two_modes, hyper, 99);
    const TrainResult c = train(cfg, stages, two_modes, hyper, 100);
    REQUIRE(params_equal(a.params, b.params));
    REQUIRE(a.ema.shadow == b.ema.shadow);
    REQUIRE(a.optimizer.m == b.optimizer.m);
    REQUIRE(!params_equal(a.params, c.params));
    REQUIRE(a.log.size() == 8);
    for (const auto& row : a.log) REQUIRE(std::isfinite(row.loss));
}

TEST_CASE("resuming from a mid-run snapshot reproduces the full run bitwise") {
    const ModelConfig cfg = tiny_config();
    TrainHyper hyper;
    hyper.batch_size = 4;

    std::vector<TrainStageConfig> full = {{1, 4, 4, {}, 4, 1.0}, {2, 4, 4, {}, 6, 2.0}};
    const TrainResult whole = train(cfg, full, two_modes, hyper, 7);

    std::vector<TrainStageConfig> half = {{1, 4, 4, {}, 4, 1.0}, {2, 4, 4, {}, 3, 2.0}};
    TrainResult first = train(cfg, half, two_modes, hyper, 7);
    const TrainResult second =
        train(cfg, full, two_modes, hyper, 7, std::move(first.params), std::move(first.optimizer),
              std::move(first.ema), 1, 3);

    REQUIRE(params_equal(whole.params, second.params));
    REQUIRE(whole.ema.shadow == second.ema.shadow);
    REQUIRE(whole.optimizer.m == second.optimizer.m);
    REQUIRE(whole.optimizer.v == second.optimizer.v);
    REQUIRE(whole.optimizer.step == second.optimizer.step);
}

TEST_CASE("zero-step training still yields usable state") {
    const ModelConfig cfg = tiny_config();
    std::vector<TrainStageConfig> stages = {{0, 4, 4, {}, 0, 1.0}};
    const TrainResult r = train(cfg, stages, two_modes, TrainHyper{}, 11);
    REQUIRE(r.log.empty());
    REQUIRE(r.optimizer.step == 0);
    REQUIRE(r.params.all_finite());
    REQUIRE(!r.aborted);
}

TEST_CASE("loss halves on the two-cluster task") {
    const ModelConfig cfg = tiny_config();
    std::vector<TrainStageConfig> stages = {{0, 4, 4, {}, 200, 1.0}};
    TrainHyper hyper;
    hyper.batch_size = 8;
    hyper.lr = 0.01;
    const TrainResult r = train(cfg, stages, two_modes, hyper, 55);
    REQUIRE(!r.aborted);

    std::vector<double> head, tail;
    for (int i = 0; i < 10; ++i) {
        head.push_back(r.log[std::size_t(i)].loss);
        tail.push_back(r.log[r.log.size() - 10 + std::size_t(i)].loss);
    }
    REQUIRE(mean_of(tail) < 0.5 * mean_of(head));
}

TEST_CASE("a later stage starts below an untrained model of the same size") {
    const ModelConfig cfg = tiny_config();
    TrainHyper hyper;
    hyper.batch_size = 8;
    hyper.lr = 0.01;

    std::vector<TrainStageConfig> staged = {{1, 4, 4, {}, 200, 1.0}, {2, 8, 8, {}, 1, 1.0}};
    const TrainResult carried = train(cfg, staged, biased_mode, hyper, 31);
    REQUIRE(!carried.aborted);

    std::vector<TrainStageConfig> scratch = {{2, 8, 8, {}, 1, 1.0}};
    const TrainResult fresh = train(cfg, scratch, biased_mode, hyper, 31);

    double carried_start = -1.0, fresh_start = -1.0;
    for (const auto& row : carried.log)
        if (row.stage == 2 && row.step == 0) carried_start = row.loss;
    fresh_start = fresh.log.front().loss;
    REQUIRE(carried_start >= 0.0);
    REQUIRE(carried_start < fresh_start);
}

TEST_CASE("persistent loss spikes abort with state intact") {
    const ModelConfig cfg = tiny_config();
    std::vector<TrainStageConfig> stages = {{0, 4, 4, {}, 40, 1.0}};
    TrainHyper hyper;
    hyper.batch_size = 4;
    hyper.max_consecutive_spikes = 5;

    int calls = 0;
    const SampleFn poisoned = [&calls](const TrainStageConfig& stage, RngStream& rng) {
        FlowExample ex = two_modes(stage, rng);
        if (++calls > 15 * 4)
            for (auto& v : ex.x0.data) v *= 1000.0f;
        return ex;
    };

    const TrainResult r = train(cfg, stages, poisoned, hyper, 77);
    REQUIRE(r.aborted);
    REQUIRE(!r.abort_reason.empty());
    REQUIRE(r.log.size() < 40);
    int spikes = 0;
    for (const auto& row : r.log) spikes += row.spike;
    REQUIRE(spikes == 6);
    REQUIRE(r.log.back().spike);
    REQUIRE(r.optimizer.step == static_cast<std::uint64_t>(r.log.size() - 1));
    REQUIRE(r.params.all_finite());
}

TEST_CASE("logged gradient norms are taken before clipping") {
    const ModelConfig cfg = tiny_config();
    std::vector<TrainStageConfig> stages = {{0, 4, 4, {}, 5, 1.0}};
    TrainHyper hyper;
    hyper.batch_size = 4;
    hyper.clip_norm = 1e-6;
    const TrainResult r = train(cfg, stages, two_modes, hyper, 13);
    for (const auto& row : r.log) REQUIRE(row.grad_norm > 1e-6);
}

TEST_CASE("stage validation rejects malformed plans") {
    const ModelConfig cfg = tiny_config();
    REQUIRE_THROWS_AS(train(cfg, {}, two_modes, TrainHyper{}, 1), std::invalid_argument);
    std::vector<TrainStageConfig> shrinking = {{0, 8, 8, {}, 1, 1.0}, {1, 4, 4, {}, 1, 1.0}};
    REQUIRE_THROWS_AS(train(cfg, shrinking, two_modes, TrainHyper{}, 1), std::invalid_argument);
    std::vector<TrainStageConfig> negative = {{0, 4, 4, {}, -3, 1.0}};
    REQUIRE_THROWS_AS(train(cfg, negative, two_modes, TrainHyper{}, 1), std::invalid_argument);
}
