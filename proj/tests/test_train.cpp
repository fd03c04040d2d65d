#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "taskaug/data.hpp"
#include "taskaug/train.hpp"

using namespace taskaug;

namespace {

SplitResult small_splits(std::size_t n, std::uint64_t data_seed, std::uint64_t split_seed,
                         double prevalence = 0.25) {
    SynthTaskConfig cfg;
    cfg.task = SynthTask::rr_irregularity;
    cfg.samples = 128;
    cfg.fs = 64.0;
    cfg.prevalence = prevalence;
    cfg.seed = data_seed;
    LabeledDataset ds = generate_synthetic(cfg, n);
    return split(ds, SplitRatios{}, split_seed);
}

TrainConfig tiny_config(AugStrategy strategy, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = 2;
    tc.patience = 5;
    tc.batch_size = 16;
    tc.seed = seed;
    tc.strategy = strategy;
    tc.hyper.neumann_terms = 0;
    tc.model.widths = {4, 6};
    return tc;
}

}  // namespace

TEST_CASE("training is reproducible: identical reports from identical configs") {
    SplitResult sp = small_splits(48, 5, 7);
    TrainReport a = train_loop(sp.train, sp.val, sp.test, tiny_config(AugStrategy::taskaug, 3));
    TrainReport b = train_loop(sp.train, sp.val, sp.test, tiny_config(AugStrategy::taskaug, 3));
    CHECK(metrics_csv(a) == metrics_csv(b));
    CHECK(trajectory_json(a).dump() == trajectory_json(b).dump());
    CHECK(a.test_auroc == b.test_auroc);
}

TEST_CASE("a zero-stage policy trains bit-identically to no augmentation") {
    SplitResult sp = small_splits(48, 6, 8);
    TrainConfig none = tiny_config(AugStrategy::none, 4);
    TrainConfig k0 = tiny_config(AugStrategy::taskaug, 4);
    k0.stages = 0;
    TrainReport a = train_loop(sp.train, sp.val, sp.test, none);
    TrainReport b = train_loop(sp.train, sp.val, sp.test, k0);
    CHECK(metrics_csv(a) == metrics_csv(b));
    CHECK(a.test_loss == b.test_loss);
}

TEST_CASE("frozen policies record a constant trajectory") {
    SplitResult sp = small_splits(48, 9, 10);
    TrainConfig tc = tiny_config(AugStrategy::taskaug, 5);
    tc.freeze_policy = true;
    TrainReport r = train_loop(sp.train, sp.val, sp.test, tc);
    REQUIRE(r.trajectory.size() >= 2);
    const auto& first = r.trajectory.front();
    for (const PolicySnapshot& s : r.trajectory)
        for (std::size_t k = 0; k < s.stages.size(); ++k) {
            CHECK(s.stages[k].pi == first.stages[k].pi);
            CHECK(s.stages[k].mu0 == first.stages[k].mu0);
            CHECK(s.stages[k].mu1 == first.stages[k].mu1);
        }
}

TEST_CASE("global-magnitude mode keeps mu0 and mu1 identical while learning") {
    SplitResult sp = small_splits(48, 11, 12);
    TrainConfig tc = tiny_config(AugStrategy::taskaug, 6);
    tc.global_magnitude = true;
    TrainReport r = train_loop(sp.train, sp.val, sp.test, tc);
    REQUIRE(r.trajectory.size() >= 2);
    for (const PolicySnapshot& s : r.trajectory)
        for (const StageSnapshot& st : s.stages) CHECK(st.mu0 == st.mu1);
    // and the policy did move
    bool moved = false;
    for (std::size_t k = 0; k < r.trajectory.front().stages.size(); ++k)
        moved = moved || r.trajectory.front().stages[k].mu0 != r.trajectory.back().stages[k].mu0 ||
                r.trajectory.front().stages[k].pi != r.trajectory.back().stages[k].pi;
    CHECK(moved);
}

TEST_CASE("per-class strengths receive outer updates in standard mode") {
    SplitResult sp = small_splits(64, 13, 14);
    TrainConfig tc = tiny_config(AugStrategy::taskaug, 7);
    tc.epochs = 3;
    TrainReport r = train_loop(sp.train, sp.val, sp.test, tc);
    const auto& first = r.trajectory.front().stages[0];
    const auto& last = r.trajectory.back().stages[0];
    CHECK(first.mu0 != last.mu0);
    CHECK(first.pi != last.pi);
    // the time mask strength never moves
    CHECK(last.mu0[0] == first.mu0[0]);
    CHECK(last.mu1[0] == first.mu1[0]);
}

TEST_CASE("non-finite data aborts with a diagnostic naming the batch") {
    SplitResult sp = small_splits(48, 15, 16);
    sp.train.records[0].signal.values[3] = std::numeric_limits<double>::quiet_NaN();
    try {
        train_loop(sp.train, sp.val, sp.test, tiny_config(AugStrategy::none, 8));
        FAIL("expected NonFiniteLossError");
    } catch (const NonFiniteLossError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("batch") != std::string::npos);
        CHECK(msg.find("epoch") != std::string::npos);
    }
}

TEST_CASE("each fixed baseline strategy completes a short run") {
    SplitResult sp = small_splits(40, 17, 18, 0.3);
    for (AugStrategy s : {AugStrategy::timemask, AugStrategy::specaug, AugStrategy::dgw,
                          AugStrategy::smote}) {
        TrainConfig tc = tiny_config(s, 9);
        tc.epochs = 1;
        TrainReport r = train_loop(sp.train, sp.val, sp.test, tc);
        CHECK(r.epochs.size() == 1);
        CHECK(std::isfinite(r.epochs[0].train_loss));
        CHECK_FALSE(r.has_policy);
        CHECK(r.trajectory.empty());
    }
}

TEST_CASE("model checkpoints round trip through disk") {
    SplitResult sp = small_splits(40, 19, 20);
    TrainConfig tc = tiny_config(AugStrategy::none, 10);
    tc.epochs = 1;
    TrainReport r = train_loop(sp.train, sp.val, sp.test, tc);

    const std::string base = "/tmp/taskaug_ckpt_test";
    save_model(r.best_model, base);
    ModelParams back = load_model(base);
    REQUIRE(back.values.size() == r.best_model.values.size());
    for (std::size_t i = 0; i < back.values.size(); ++i)
        CHECK(back.values[i].data == r.best_model.values[i].data);

    auto ev1 = train_detail::evaluate_model(r.best_model.values, r.best_model.cfg, sp.test);
    auto ev2 = train_detail::evaluate_model(back.values, back.cfg, sp.test);
    CHECK(ev1.loss == ev2.loss);
    CHECK(ev1.scores == ev2.scores);
    std::remove((base + ".json").c_str());
    std::remove((base + ".bin").c_str());
}

TEST_CASE("early stopping cuts the epoch budget short when validation stalls") {
    SplitResult sp = small_splits(48, 21, 22);
    TrainConfig tc = tiny_config(AugStrategy::none, 11);
    tc.epochs = 40;
    tc.patience = 2;
    tc.hyper.lr_inner = 0.5;  // crank the rate so validation loss thrashes
    TrainReport r = train_loop(sp.train, sp.val, sp.test, tc);
    CHECK(r.epochs.size() < 40);
    CHECK(r.best_epoch >= 1);
}
