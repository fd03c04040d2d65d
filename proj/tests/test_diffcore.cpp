#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "taskaug/rng.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"
#include "testutil.hpp"

using namespace taskaug;
using testutil::GraphFn;

namespace {

// Wraps a node into a scalar loss: sum(out * w) with a fixed random weighting,
// so every output element influences the loss.
NodeId weighted_loss(Tape& tape, NodeId out, RngStream& rng) {
    const Tensor& v = tape.value(out);
    if (v.size() == 1 && v.shape.empty()) return tape.scale_const(out, 0.5 + rng.uniform());
    Tensor w = rng.uniform_tensor(v.shape);
    for (double& x : w.data) x += 0.25;
    return tape.sum(tape.mul(out, tape.input(std::move(w))));
}

struct OpCase {
    std::string name;
    // builds inputs for one seed and a graph over them
    std::function<std::pair<std::vector<Tensor>, GraphFn>(RngStream&)> make;
};

Tensor rand_uniform(RngStream& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t = rng.uniform_tensor(std::move(shape));
    for (double& v : t.data) v = lo + (hi - lo) * v;
    return t;
}

std::vector<OpCase> op_cases() {
    std::vector<OpCase> cases;
    auto add_case = [&](std::string name, auto fn) { cases.push_back({std::move(name), fn}); };

    auto simple2 = [](const char* op) {
        return [op](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
            std::vector<Tensor> ins = {rand_uniform(rng, {2, 3}, -1, 1),
                                       rand_uniform(rng, {2, 3}, -1, 1)};
            std::string opname = op;
            GraphFn fn = [opname](Tape& t, const std::vector<NodeId>& ids) {
                RngStream wr = RngStream::from_seed(7);
                return weighted_loss(t, t.forward_op(opname, {ids[0], ids[1]}), wr);
            };
            return {ins, fn};
        };
    };
    add_case("add", simple2("add"));
    add_case("sub", simple2("sub"));
    add_case("mul", simple2("mul"));

    add_case("scale", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {2, 3}, -1, 1),
                                   Tensor::scalar(0.5 + rng.uniform())};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.scale(ids[0], ids[1]), wr);
        };
        return {ins, fn};
    });

    add_case("scale_const", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {4}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.scale_const(ids[0], -1.7), wr);
        };
        return {ins, fn};
    });

    add_case("matmul", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {2, 3}, -1, 1),
                                   rand_uniform(rng, {3, 2}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.matmul(ids[0], ids[1]), wr);
        };
        return {ins, fn};
    });

    add_case("matmul_vec", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {3, 4}, -1, 1),
                                   rand_uniform(rng, {4}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.matmul(ids[0], ids[1]), wr);
        };
        return {ins, fn};
    });

    for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
        add_case("conv1d_s" + std::to_string(stride),
                 [stride](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
                     std::vector<Tensor> ins = {rand_uniform(rng, {2, 9}, -1, 1),
                                                rand_uniform(rng, {3, 2, 3}, -1, 1)};
                     GraphFn fn = [stride](Tape& t, const std::vector<NodeId>& ids) {
                         RngStream wr = RngStream::from_seed(7);
                         return weighted_loss(t, t.conv1d(ids[0], ids[1], stride, 1), wr);
                     };
                     return {ins, fn};
                 });
    }

    add_case("bias_add", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {2, 5}, -1, 1),
                                   rand_uniform(rng, {2}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.bias_add(ids[0], ids[1]), wr);
        };
        return {ins, fn};
    });

    auto simple1 = [](const char* op, double lo, double hi) {
        return [op, lo, hi](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
            std::vector<Tensor> ins = {rand_uniform(rng, {2, 4}, lo, hi)};
            std::string opname = op;
            GraphFn fn = [opname](Tape& t, const std::vector<NodeId>& ids) {
                RngStream wr = RngStream::from_seed(7);
                return weighted_loss(t, t.forward_op(opname, {ids[0]}), wr);
            };
            return {ins, fn};
        };
    };
    add_case("sigmoid", simple1("sigmoid", -2, 2));
    add_case("sin", simple1("sin", -2, 2));
    add_case("avgpool1d", simple1("avgpool1d", -1, 1));
    add_case("sum", simple1("sum", -1, 1));
    add_case("mean", simple1("mean", -1, 1));

    add_case("relu", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        Tensor x = rand_uniform(rng, {2, 4}, 0.1, 1.0);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (i % 2 == 0) x[i] = -x[i];  // keep away from the kink at 0
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.relu(ids[0]), wr);
        };
        return {{x}, fn};
    });

    add_case("softmax", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {5}, -2, 2)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.softmax(ids[0]), wr);
        };
        return {ins, fn};
    });

    add_case("linear_resample", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        // fractional displacements keep positions away from interpolation kinks
        Tensor d = rng.uniform_tensor({8});
        for (double& v : d.data) v = 0.3 + 0.4 * v;
        std::vector<Tensor> ins = {rand_uniform(rng, {2, 8}, -1, 1), std::move(d)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.linear_resample(ids[0], ids[1]), wr);
        };
        return {ins, fn};
    });

    add_case("gaussian_smooth", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {10}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.gaussian_smooth(ids[0], 1.3), wr);
        };
        return {ins, fn};
    });

    add_case("bce_loss", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        Tensor y = Tensor::zeros({4});
        for (std::size_t i = 0; i < 4; ++i) y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        std::vector<Tensor> ins = {rand_uniform(rng, {4}, 0.1, 0.9), std::move(y)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            return t.bce_loss(ids[0], ids[1]);
        };
        return {ins, fn};
    });

    add_case("gather", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {5}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            return t.scale_const(t.gather(ids[0], 2), 1.5);
        };
        return {ins, fn};
    });

    add_case("stack", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {Tensor::scalar(rng.uniform()), Tensor::scalar(rng.uniform()),
                                   Tensor::scalar(rng.uniform())};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.stack(ids), wr);
        };
        return {ins, fn};
    });

    add_case("pad_time", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {2, 5}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.pad_time(ids[0], 2, 3), wr);
        };
        return {ins, fn};
    });

    add_case("crop_time", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        std::vector<Tensor> ins = {rand_uniform(rng, {2, 8}, -1, 1)};
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.crop_time(ids[0], 2, 4), wr);
        };
        return {ins, fn};
    });

    return cases;
}

}  // namespace

TEST_CASE("tensor shape/data consistency is enforced") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ContractViolation);
    CHECK(Tensor::zeros({2, 3}).size() == 6);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("sigmoid(0) = 0.5") {
    Tape tape;
    NodeId x = tape.input(Tensor::scalar(0.0));
    CHECK(tape.value(tape.sigmoid(x)).item() == 0.5);
}

TEST_CASE("conv1d identity kernel with same padding") {
    Tape tape;
    NodeId x = tape.input(Tensor({1, 3}, {1, 2, 3}));
    NodeId w = tape.input(Tensor({1, 1, 3}, {0, 1, 0}));
    const Tensor& out = tape.value(tape.conv1d(x, w, 1, 1));
    REQUIRE(out.shape == std::vector<std::size_t>{1, 3});
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.0);
    CHECK(out[2] == 3.0);
}

TEST_CASE("bce_loss(target 1, p 0.5) = ln 2") {
    Tape tape;
    NodeId p = tape.input(Tensor({1}, {0.5}));
    NodeId y = tape.input(Tensor({1}, {1.0}));
    CHECK_THAT(tape.value(tape.bce_loss(p, y)).item(),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("backward: d(p^2)/dp = 2p") {
    Tape tape;
    NodeId p = tape.input(Tensor::scalar(3.0));
    NodeId loss = tape.mul(p, p);
    auto g = tape.backward(loss, {p});
    CHECK(g[0].item() == 6.0);
}

TEST_CASE("backward: sum(sigmoid(0-vector)) gives 0.25 each") {
    Tape tape;
    NodeId p = tape.input(Tensor::zeros({4}));
    auto g = tape.backward(tape.sum(tape.sigmoid(p)), {p});
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[0][i] == 0.25);
}

TEST_CASE("backward: bce(1, sigmoid(z)) at z=0 gives -0.5") {
    GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
        NodeId y = t.input(Tensor({1}, {1.0}));
        // ids[0] is scalar z; lift to length-1 vector via stack
        return t.bce_loss(t.sigmoid(t.stack({ids[0]})), y);
    };
    std::vector<Tensor> ins = {Tensor::scalar(0.0)};
    auto ad = testutil::autodiff_grads(fn, ins);
    CHECK_THAT(ad[0].item(), Catch::Matchers::WithinAbs(-0.5, 1e-12));
    auto fd = testutil::fd_grads(fn, ins);
    CHECK_THAT(ad[0].item(), Catch::Matchers::WithinRel(fd[0].item(), 1e-6));
}

TEST_CASE("linear_resample: zero displacement is the identity") {
    Tape tape;
    RngStream rng = RngStream::from_seed(3);
    Tensor x = rng.uniform_tensor({3, 16});
    NodeId xi = tape.input(x);
    NodeId d = tape.input(Tensor::zeros({16}));
    const Tensor& out = tape.value(tape.linear_resample(xi, d));
    CHECK(out.data == x.data);
}

TEST_CASE("linear_resample: unit shift clamps at the boundary") {
    Tape tape;
    NodeId x = tape.input(Tensor({1, 4}, {0, 1, 2, 3}));
    NodeId d = tape.input(Tensor::full({4}, 1.0));
    const Tensor& out = tape.value(tape.linear_resample(x, d));
    CHECK(out.data == std::vector<double>{1, 2, 3, 3});
}

TEST_CASE("linear_resample: displacement gradient matches finite differences") {
    RngStream rng = RngStream::from_seed(11);
    for (int trial = 0; trial < 5; ++trial) {
        // smooth random x
        Tensor x = Tensor::zeros({2, 12});
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t t = 0; t < 12; ++t)
                x.at(c, t) = std::sin(0.5 * static_cast<double>(t) + rng.uniform());
        Tensor d = rng.uniform_tensor({12});
        for (double& v : d.data) v = 0.3 + 0.4 * v;
        GraphFn fn = [](Tape& t, const std::vector<NodeId>& ids) {
            RngStream wr = RngStream::from_seed(7);
            return weighted_loss(t, t.linear_resample(ids[0], ids[1]), wr);
        };
        CHECK(testutil::grad_rel_err(fn, {x, d}) < 1e-4);
    }
}

TEST_CASE("gaussian_smooth: constant in, same constant out") {
    Tape tape;
    NodeId x = tape.input(Tensor::full({32}, 1.7));
    const Tensor& out = tape.value(tape.gaussian_smooth(x, 2.0));
    for (double v : out.data) CHECK_THAT(v, Catch::Matchers::WithinAbs(1.7, 1e-12));
}

TEST_CASE("gaussian_smooth: impulse response sums to 1") {
    Tape tape;
    Tensor x = Tensor::zeros({41});
    x[20] = 1.0;
    NodeId out = tape.gaussian_smooth(tape.input(x), 2.5);
    double sum = 0.0;
    for (double v : tape.value(out).data) sum += v;
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("gaussian_smooth commutes with scalar multiplication") {
    RngStream rng = RngStream::from_seed(5);
    Tensor x = rng.uniform_tensor({24});
    Tensor x2 = x;
    for (double& v : x2.data) v *= 2.0;
    Tape tape;
    const Tensor& s1 = tape.value(tape.gaussian_smooth(tape.input(x), 1.5));
    const Tensor& s2 = tape.value(tape.gaussian_smooth(tape.input(x2), 1.5));
    for (std::size_t i = 0; i < s1.size(); ++i)
        CHECK_THAT(2.0 * s1[i], Catch::Matchers::WithinAbs(s2[i], 1e-12));
}

TEST_CASE("gaussian_smooth rejects non-positive kernel_std") {
    Tape tape;
    NodeId x = tape.input(Tensor::zeros({8}));
    CHECK_THROWS_AS(tape.gaussian_smooth(x, 0.0), ContractViolation);
}

TEST_CASE("every registered op matches central finite differences over 20 seeds") {
    for (const auto& c : op_cases()) {
        DYNAMIC_SECTION("op " << c.name) {
            double worst = 0.0;
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                RngStream rng = RngStream::from_seed(1000 + seed);
                auto [ins, fn] = c.make(rng);
                worst = std::max(worst, testutil::grad_rel_err(fn, ins));
            }
            INFO("worst relative error " << worst);
            CHECK(worst < 1e-4);
        }
    }
}

TEST_CASE("straight_through_unit: value 1, gradient g/u against frozen-denominator oracle") {
    const double u0 = 0.37;
    Tape tape;
    NodeId u = tape.input(Tensor::scalar(u0));
    NodeId f = tape.straight_through_unit(u);
    CHECK(tape.value(f).item() == 1.0);
    auto g = tape.backward(tape.scale_const(f, 2.0), {u});
    // d/du of 2*u/const at const=u0 is 2/u0
    CHECK_THAT(g[0].item(), Catch::Matchers::WithinRel(2.0 / u0, 1e-12));
}

TEST_CASE("tape replay determinism: identical graphs give identical bits") {
    auto run = [] {
        RngStream rng = RngStream::from_seed(42);
        Tape tape;
        NodeId x = tape.input(rng.normal_tensor({3, 8}));
        NodeId w = tape.input(rng.normal_tensor({2, 3, 3}));
        NodeId loss = tape.mean(tape.relu(tape.conv1d(x, w, 2, 1)));
        auto g = tape.backward(loss, {x, w});
        return std::make_tuple(tape.value(loss).item(), g[0].data, g[1].data);
    };
    auto a = run();
    auto b = run();
    CHECK(std::get<0>(a) == std::get<0>(b));
    CHECK(std::get<1>(a) == std::get<1>(b));
    CHECK(std::get<2>(a) == std::get<2>(b));
}

TEST_CASE("fan-out gradients accumulate: y = p + p") {
    Tape tape;
    NodeId p = tape.input(Tensor::scalar(1.5));
    auto g = tape.backward(tape.add(p, p), {p});
    CHECK(g[0].item() == 2.0);
}

TEST_CASE("unreachable parameters get zero gradients, not errors") {
    Tape tape;
    NodeId p = tape.input(Tensor::scalar(1.0));
    NodeId q = tape.input(Tensor::zeros({3}));
    auto g = tape.backward(tape.mul(p, p), {p, q});
    CHECK(g[0].item() == 2.0);
    CHECK(g[1].shape == std::vector<std::size_t>{3});
    for (double v : g[1].data) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape tape;
    NodeId x = tape.input(Tensor::zeros({3}));
    CHECK_THROWS_AS(tape.backward(x, {x}), ContractViolation);
}

TEST_CASE("shape mismatches name the op and shapes") {
    Tape tape;
    NodeId a = tape.input(Tensor::zeros({2, 3}));
    NodeId b = tape.input(Tensor::zeros({3, 2}));
    try {
        tape.add(a, b);
        FAIL("expected ContractViolation");
    } catch (const ContractViolation& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("rng streams are counter-deterministic and split-independent") {
    RngStream a = RngStream::from_seed(99);
    RngStream b = RngStream::from_seed(99);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c0 = a.child(0);
    RngStream c1 = a.child(1);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += c0.next_u64() == c1.next_u64() ? 1 : 0;
    CHECK(same == 0);

    // uniform draws live in [0, 1)
    RngStream u = RngStream::from_seed(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}
