#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "taskaug/policy.hpp"
#include "testutil.hpp"

using namespace taskaug;

namespace {

Tensor test_signal(std::size_t leads, std::size_t samples, std::uint64_t seed) {
    RngStream rng = RngStream::from_seed(seed);
    Tensor x = Tensor::zeros({leads, samples});
    for (std::size_t c = 0; c < leads; ++c)
        for (std::size_t t = 0; t < samples; ++t)
            x.at(c, t) = std::sin(0.2 * static_cast<double>(t) + rng.uniform()) + 1.5;
    return x;
}

Tensor logits_for_pi(std::vector<double> pi) {
    Tensor l = Tensor::zeros({pi.size()});
    for (std::size_t i = 0; i < pi.size(); ++i) l[i] = std::log(pi[i]);
    return l;
}

}  // namespace

TEST_CASE("sample_stage: selection frequency tracks pi = [0.9, 0.1]") {
    Tensor logits = logits_for_pi({0.9, 0.1});
    RngStream rng = RngStream::from_seed(123);
    const int n = 10000;
    int count0 = 0;
    for (int i = 0; i < n; ++i) {
        Tape tape;
        NodeId l = tape.input(logits);
        RngStream draw = rng.child(static_cast<std::uint64_t>(i));
        StageSample s = sample_stage(tape, l, 1.0, draw);
        if (s.index == 0) ++count0;
        CHECK(tape.value(s.factor).item() == 1.0);
    }
    const double freq = static_cast<double>(count0) / n;
    const double band = 3.0 * std::sqrt(0.9 * 0.1 / n);
    CHECK(std::fabs(freq - 0.9) <= band);
}

TEST_CASE("sample_stage: degenerate single-operator policy") {
    Tensor logits = Tensor::zeros({1});
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Tape tape;
        NodeId l = tape.input(logits);
        RngStream rng = RngStream::from_seed(seed);
        StageSample s = sample_stage(tape, l, 1.0, rng);
        CHECK(s.index == 0);
        CHECK(tape.value(s.factor).item() == 1.0);
        auto g = tape.backward(s.factor, {l});
        CHECK(g[0][0] == 0.0);  // softmax of a singleton is constant
    }
}

TEST_CASE("sample_stage rejects non-positive temperature") {
    Tape tape;
    NodeId l = tape.input(Tensor::zeros({3}));
    RngStream rng = RngStream::from_seed(1);
    CHECK_THROWS_AS(sample_stage(tape, l, 0.0, rng), ContractViolation);
}

TEST_CASE("straight-through factor gradient matches finite differences of u_i/const") {
    const double tau = 1.0;
    Tensor logits = logits_for_pi({0.5, 0.3, 0.2});
    const std::uint64_t seed = 77;

    // autodiff gradient through the factor
    Tape tape;
    NodeId l = tape.input(logits);
    RngStream rng = RngStream::from_seed(seed);
    StageSample s = sample_stage(tape, l, tau, rng);
    auto ad = tape.backward(s.factor, {l});

    // oracle: u_i / const with const frozen at the sampled u_i value
    RngStream rng2 = RngStream::from_seed(seed);
    Tensor gumbels = Tensor::zeros({3});
    for (std::size_t i = 0; i < 3; ++i) gumbels[i] = rng2.gumbel();
    std::size_t idx = s.index;

    testutil::GraphFn oracle = [&, idx](Tape& t, const std::vector<NodeId>& ids) {
        NodeId z = t.scale_const(t.add(ids[0], t.input(gumbels)), 1.0 / tau);
        return t.gather(t.softmax(z), idx);
    };
    const double u_const = testutil::eval_loss(oracle, {logits});
    auto fd = testutil::fd_grads(oracle, {logits});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK_THAT(ad[0][i], Catch::Matchers::WithinAbs(fd[0][i] / u_const, 1e-4));
}

TEST_CASE("compute_strength reproduces the worked example and its gradients") {
    Tape tape;
    NodeId mu0 = tape.input(Tensor::scalar(0.2));
    NodeId mu1 = tape.input(Tensor::scalar(0.1));

    NodeId s1 = compute_strength(tape, 1, mu0, mu1);
    CHECK(tape.value(s1).item() == 0.1);
    auto g1 = tape.backward(s1, {mu0, mu1});
    CHECK(g1[0].item() == 0.0);
    CHECK(g1[1].item() == 1.0);

    NodeId s0 = compute_strength(tape, 0, mu0, mu1);
    CHECK(tape.value(s0).item() == 0.2);
    auto g0 = tape.backward(s0, {mu0, mu1});
    CHECK(g0[0].item() == 1.0);
    CHECK(g0[1].item() == 0.0);

    CHECK_THROWS_AS(compute_strength(tape, 2, mu0, mu1), ContractViolation);
}

TEST_CASE("apply_policy: worked example selects time mask and applies it with factor 1") {
    PolicyParams p = init_policy({AugOp::time_mask, AugOp::gaussian_noise}, 1, 1.0);
    p.stages[0].selection_logits = logits_for_pi({0.9, 0.1});
    p.stages[0].mu0[0] = 0.2;
    p.stages[0].mu1[0] = 0.1;

    Tensor x = test_signal(2, 50, 40);
    // find a seed whose stage draw picks operator 0 (probability 0.9)
    std::uint64_t seed = 0;
    std::size_t picked = 1;
    for (; seed < 50 && picked != 0; ++seed) {
        Tape probe;
        RngStream stage_rng = RngStream::from_seed(seed).child(0);
        picked = sample_stage(probe, probe.input(p.stages[0].selection_logits), 1.0, stage_rng).index;
        if (picked == 0) break;
    }
    REQUIRE(picked == 0);

    Tape tape;
    NodeId xi = tape.input(x);
    PolicyNodes nodes = place_policy(tape, p);
    RngStream rng = RngStream::from_seed(seed);
    NodeId out = apply_policy(tape, p, nodes, xi, 1, rng, 100.0);

    // mirror the stage's randomness: gumbels first, then the operator draw
    RngStream stage_rng = RngStream::from_seed(seed).child(0);
    for (int i = 0; i < 2; ++i) stage_rng.gumbel();
    AugDraw d = make_aug_draw(AugOp::time_mask, stage_rng, 2, 50);
    Tape ref;
    NodeId expect = apply_aug(ref, AugOp::time_mask, ref.input(x), ref.input(Tensor::scalar(0.1)),
                              d, 100.0);
    CHECK(tape.value(out).data == ref.value(expect).data);
}

TEST_CASE("apply_policy: K = 0 is the identity") {
    PolicyParams p = init_policy({AugOp::gaussian_noise}, 1, 1.0);
    p.stages.clear();
    Tensor x = test_signal(2, 40, 41);
    Tape tape;
    NodeId xi = tape.input(x);
    PolicyNodes nodes = place_policy(tape, p);
    RngStream rng = RngStream::from_seed(3);
    NodeId out = apply_policy(tape, p, nodes, xi, 0, rng, 100.0);
    CHECK(out == xi);
    CHECK(tape.value(out).data == x.data);
}

TEST_CASE("apply_policy: input tensor is never mutated; distinct streams are independent") {
    PolicyParams p = init_policy(all_aug_ops(), 2, 1.0);
    Tensor x = test_signal(2, 64, 42);
    const Tensor x_copy = x;
    Tape tape;
    NodeId xi = tape.input(x);
    PolicyNodes nodes = place_policy(tape, p);
    RngStream root = RngStream::from_seed(9);
    RngStream r1 = root.child(1), r2 = root.child(2);
    NodeId o1 = apply_policy(tape, p, nodes, xi, 0, r1, 100.0);
    NodeId o2 = apply_policy(tape, p, nodes, xi, 0, r2, 100.0);
    CHECK(x.data == x_copy.data);
    CHECK(tape.value(xi).data == x_copy.data);
    CHECK(tape.value(o1).data != tape.value(o2).data);
}

TEST_CASE("adding a constant to all selection logits leaves pi unchanged") {
    // dyadic logits and shift make the additions exact, so the max-subtracted
    // softmax sees bit-identical inputs
    Tensor logits({3}, {0.25, -0.5, 1.75});
    Tensor shifted = logits;
    for (double& v : shifted.data) v += 36.0;
    const auto a = softmax_values(logits);
    const auto b = softmax_values(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("per-class routing: an all-negative batch gives zero mu1 gradients") {
    PolicyParams p = init_policy(all_aug_ops(), 2, 1.0);
    Tensor x = test_signal(2, 64, 43);
    Tape tape;
    PolicyNodes nodes = place_policy(tape, p);
    NodeId xi = tape.input(x);
    RngStream root = RngStream::from_seed(10);
    std::vector<NodeId> losses;
    for (int e = 0; e < 6; ++e) {
        RngStream er = root.child(static_cast<std::uint64_t>(e));
        losses.push_back(tape.mean(apply_policy(tape, p, nodes, xi, 0, er, 100.0)));
    }
    NodeId loss = tape.mean(tape.stack(losses));
    auto grads = tape.backward(loss, nodes.flat());
    // flat order: logits, mu0, mu1 per stage
    for (std::size_t k = 0; k < 2; ++k) {
        const Tensor& g_mu1 = grads[k * 3 + 2];
        for (double v : g_mu1.data) CHECK(v == 0.0);
    }
}

TEST_CASE("global magnitude mode routes both classes through the shared strength") {
    PolicyParams p = init_policy({AugOp::magnitude_scale}, 1, 1.0);
    p.global_magnitude = true;
    p.stages[0].mu0[0] = 0.4;
    p.stages[0].mu1[0] = 99.0;  // must be ignored
    Tensor x = test_signal(1, 32, 44);
    Tape tape;
    PolicyNodes nodes = place_policy(tape, p);
    NodeId xi = tape.input(x);
    RngStream rng = RngStream::from_seed(11);
    NodeId out = apply_policy(tape, p, nodes, xi, 1, rng, 100.0);
    auto grads = tape.backward(tape.mean(out), nodes.flat());
    CHECK(grads[1].max_abs() > 0.0);   // mu0 carries the gradient
    CHECK(grads[2].max_abs() == 0.0);  // mu1 unused even for label 1
}

TEST_CASE("init_policy: uniform pi and published strength initializations") {
    PolicyParams p = init_policy(all_aug_ops(), 2, 1.0);
    REQUIRE(p.num_ops() == 6);
    for (const StageParams& sp : p.stages) {
        const auto pi = softmax_values(sp.selection_logits);
        for (double v : pi) CHECK_THAT(v, Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
        for (std::size_t i = 0; i < 6; ++i) {
            const AugOp op = p.operators[i];
            CHECK(sp.mu0[i] == aug_op_init_strength(op));
            CHECK(sp.mu1[i] == aug_op_init_strength(op));
        }
    }
    CHECK(p.stages[0].mu0[2] == 1.0);  // temporal_warp
    CHECK(p.stages[0].mu0[5] == 0.5);  // temporal_displacement
    CHECK_THROWS_AS(init_policy({}, 2, 1.0), ContractViolation);
}

TEST_CASE("policy JSON round trip preserves pi and strengths") {
    PolicyParams p = init_policy(all_aug_ops(), 2, 0.7);
    RngStream rng = RngStream::from_seed(12);
    for (StageParams& sp : p.stages) {
        for (double& v : sp.selection_logits.data) v = rng.normal();
        for (double& v : sp.mu0.data) v = rng.normal();
        for (double& v : sp.mu1.data) v = rng.normal();
    }
    const nlohmann::json j = policy_to_json(p);
    const PolicyParams q = policy_from_json(j);
    REQUIRE(q.num_stages() == p.num_stages());
    CHECK(q.temperature == p.temperature);
    CHECK(q.operators == p.operators);
    for (std::size_t k = 0; k < p.num_stages(); ++k) {
        const auto pa = softmax_values(p.stages[k].selection_logits);
        const auto pb = softmax_values(q.stages[k].selection_logits);
        for (std::size_t i = 0; i < pa.size(); ++i)
            CHECK_THAT(pa[i], Catch::Matchers::WithinAbs(pb[i], 1e-12));
        CHECK(q.stages[k].mu0.data == p.stages[k].mu0.data);
        CHECK(q.stages[k].mu1.data == p.stages[k].mu1.data);
    }
    // pi sums to one per stage
    for (const auto& js : j.at("stages")) {
        double sum = 0.0;
        for (double v : js.at("pi").get<std::vector<double>>()) sum += v;
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}
