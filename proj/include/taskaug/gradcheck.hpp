// Central finite-difference verification of every differentiable path: each
// registered tape op, every learnable operator strength, the policy's
// straight-through factor, and the bilevel machinery against analytic
// quadratics. Backing for the `gradcheck` command.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "taskaug/augops.hpp"
#include "taskaug/hypergrad.hpp"
#include "taskaug/policy.hpp"
#include "taskaug/rng.hpp"
#include "taskaug/tape.hpp"

namespace taskaug {

struct CheckResult {
    std::string name;
    double rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace gradcheck_detail {

using GraphFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

inline double eval_graph(const GraphFn& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.input(t));
    return tape.value(fn(tape, ids)).item();
}

inline double graph_rel_err(const GraphFn& fn, std::vector<Tensor> inputs, double h = 1e-6) {
    Tape tape;
    std::vector<NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.input(t));
    const auto ad = tape.backward(fn(tape, ids), ids);

    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double lp = eval_graph(fn, inputs);
            inputs[k][i] = orig - h;
            const double lm = eval_graph(fn, inputs);
            inputs[k][i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            num = std::max(num, std::fabs(ad[k][i] - fd));
            den = std::max(den, std::fabs(fd));
        }
    return num / std::max(den, 1e-8);
}

inline NodeId weighted_sum(Tape& tape, NodeId out, std::uint64_t wseed) {
    const Tensor& v = tape.value(out);
    if (v.size() == 1 && v.shape.empty()) return tape.scale_const(out, 1.3);
    RngStream wr = RngStream::from_seed(wseed);
    Tensor w = wr.uniform_tensor(v.shape);
    for (double& x : w.data) x += 0.25;
    return tape.sum(tape.mul(out, tape.input(std::move(w))));
}

inline Tensor uni(RngStream& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t = rng.uniform_tensor(std::move(shape));
    for (double& v : t.data) v = lo + (hi - lo) * v;
    return t;
}

struct OpCheck {
    std::string name;
    std::function<std::pair<std::vector<Tensor>, GraphFn>(RngStream&)> make;
};

inline std::vector<OpCheck> diffcore_checks() {
    std::vector<OpCheck> checks;
    auto push = [&](std::string name, auto fn) { checks.push_back({std::move(name), fn}); };

    auto wrap = [](GraphFn inner) {
        return [inner](Tape& t, const std::vector<NodeId>& ids) {
            return weighted_sum(t, inner(t, ids), 7);
        };
    };

    push("op/add", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 3}, -1, 1), uni(rng, {2, 3}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.add(i[0], i[1]); })};
    });
    push("op/sub", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 3}, -1, 1), uni(rng, {2, 3}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.sub(i[0], i[1]); })};
    });
    push("op/mul", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 3}, -1, 1), uni(rng, {2, 3}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.mul(i[0], i[1]); })};
    });
    push("op/scale", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {3, 2}, -1, 1), Tensor::scalar(0.4 + rng.uniform())},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.scale(i[0], i[1]); })};
    });
    push("op/scale_const", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {4}, -1, 1)}, wrap([](Tape& t, const std::vector<NodeId>& i) {
                    return t.scale_const(i[0], -1.6);
                })};
    });
    push("op/matmul", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 3}, -1, 1), uni(rng, {3, 2}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.matmul(i[0], i[1]); })};
    });
    push("op/conv1d", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 9}, -1, 1), uni(rng, {3, 2, 3}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) {
                    return t.conv1d(i[0], i[1], 2, 1);
                })};
    });
    push("op/bias_add", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 5}, -1, 1), uni(rng, {2}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.bias_add(i[0], i[1]); })};
    });
    push("op/avgpool1d", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 6}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.avgpool1d(i[0]); })};
    });
    push("op/relu", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        Tensor x = uni(rng, {2, 4}, 0.1, 1.0);
        for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
        return {{x}, wrap([](Tape& t, const std::vector<NodeId>& i) { return t.relu(i[0]); })};
    });
    push("op/sigmoid", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 4}, -2, 2)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.sigmoid(i[0]); })};
    });
    push("op/sin", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 4}, -2, 2)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.sin(i[0]); })};
    });
    push("op/softmax", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {5}, -2, 2)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.softmax(i[0]); })};
    });
    push("op/sum", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 4}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.sum(i[0]); })};
    });
    push("op/mean", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 4}, -1, 1)},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.mean(i[0]); })};
    });
    push("op/linear_resample", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        Tensor d = rng.uniform_tensor({8});
        for (double& v : d.data) v = 0.3 + 0.4 * v;
        return {{uni(rng, {2, 8}, -1, 1), d},
                wrap([](Tape& t, const std::vector<NodeId>& i) {
                    return t.linear_resample(i[0], i[1]);
                })};
    });
    push("op/gaussian_smooth", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {10}, -1, 1)}, wrap([](Tape& t, const std::vector<NodeId>& i) {
                    return t.gaussian_smooth(i[0], 1.3);
                })};
    });
    push("op/bce_loss", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        Tensor y = Tensor::zeros({4});
        for (std::size_t i = 0; i < 4; ++i) y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        return {{uni(rng, {4}, 0.1, 0.9), y},
                [](Tape& t, const std::vector<NodeId>& i) { return t.bce_loss(i[0], i[1]); }};
    });
    push("op/gather", [](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {5}, -1, 1)}, [](Tape& t, const std::vector<NodeId>& i) {
                    return t.scale_const(t.gather(i[0], 2), 1.4);
                }};
    });
    push("op/stack", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{Tensor::scalar(rng.uniform()), Tensor::scalar(rng.uniform()),
                 Tensor::scalar(rng.uniform())},
                wrap([](Tape& t, const std::vector<NodeId>& i) { return t.stack(i); })};
    });
    push("op/pad_time", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 5}, -1, 1)}, wrap([](Tape& t, const std::vector<NodeId>& i) {
                    return t.pad_time(i[0], 2, 3);
                })};
    });
    push("op/crop_time", [wrap](RngStream& rng) -> std::pair<std::vector<Tensor>, GraphFn> {
        return {{uni(rng, {2, 8}, -1, 1)}, wrap([](Tape& t, const std::vector<NodeId>& i) {
                    return t.crop_time(i[0], 2, 4);
                })};
    });
    return checks;
}

inline Tensor smooth_probe_signal(std::size_t leads, std::size_t samples, RngStream& rng) {
    Tensor x = Tensor::zeros({leads, samples});
    for (std::size_t c = 0; c < leads; ++c) {
        const double f = 0.04 + 0.05 * rng.uniform();
        const double ph = rng.uniform();
        for (std::size_t t = 0; t < samples; ++t)
            x.at(c, t) = std::sin(2.0 * M_PI * (f * static_cast<double>(t) + ph)) +
                         0.4 * std::cos(2.0 * M_PI * 0.011 * static_cast<double>(t));
    }
    return x;
}

// d loss / d strength for one operator application under a fixed draw
inline double strength_check(AugOp op, RngStream& rng) {
    const std::size_t C = 2, T = 72;
    const Tensor x = smooth_probe_signal(C, T, rng);
    AugDraw draw = make_aug_draw(op, rng, C, T);
    const double s0 = -0.5 + 1.5 * rng.uniform();
    GraphFn fn = [&x, op, draw](Tape& t, const std::vector<NodeId>& ids) {
        NodeId out = apply_aug(t, op, t.input(x), ids[0], draw, 100.0);
        return weighted_sum(t, out, 11);
    };
    return graph_rel_err(fn, {Tensor::scalar(s0)});
}

// straight-through factor gradient against finite differences of u_i/const
inline double factor_check(RngStream& rng) {
    const double tau = 1.0;
    Tensor logits = Tensor::zeros({4});
    for (double& v : logits.data) v = rng.normal();
    Tensor gumbels = Tensor::zeros({4});
    for (std::size_t i = 0; i < 4; ++i) gumbels[i] = rng.gumbel();

    Tape tape;
    NodeId l = tape.input(logits);
    NodeId z = tape.scale_const(tape.add(l, tape.input(gumbels)), 1.0 / tau);
    NodeId u = tape.softmax(z);
    const Tensor& uv = tape.value(u);
    std::size_t idx = 0;
    for (std::size_t i = 1; i < 4; ++i)
        if (uv[i] > uv[idx]) idx = i;
    NodeId factor = tape.straight_through_unit(tape.gather(u, idx));
    const auto ad = tape.backward(factor, {l});

    GraphFn oracle = [gumbels, tau, idx](Tape& t, const std::vector<NodeId>& ids) {
        NodeId zz = t.scale_const(t.add(ids[0], t.input(gumbels)), 1.0 / tau);
        return t.gather(t.softmax(zz), idx);
    };
    const double u_const = eval_graph(oracle, {logits});
    double num = 0.0, den = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < 4; ++i) {
        Tensor lp = logits, lm = logits;
        lp[i] += h;
        lm[i] -= h;
        const double fd = (eval_graph(oracle, {lp}) - eval_graph(oracle, {lm})) / (2.0 * h);
        num = std::max(num, std::fabs(ad[0][i] - fd / u_const));
        den = std::max(den, std::fabs(fd / u_const));
    }
    return num / std::max(den, 1e-8);
}

}  // namespace gradcheck_detail

inline ParamVec scalar_like(double v) { return ParamVec{Tensor::scalar(v)}; }

// Runs the whole suite; tol_override < 0 keeps each check's own tolerance.
inline std::vector<CheckResult> run_gradient_suite(int seeds = 20, double tol_override = -1.0) {
    using namespace gradcheck_detail;
    std::vector<CheckResult> results;
    auto tol = [&](double t) { return tol_override > 0.0 ? tol_override : t; };
    auto record = [&](const std::string& name, double err, double t) {
        results.push_back({name, err, t, err <= t});
    };

    for (const auto& check : diffcore_checks()) {
        double worst = 0.0;
        for (int s = 0; s < seeds; ++s) {
            RngStream rng = RngStream::from_seed(5000 + static_cast<std::uint64_t>(s));
            auto [ins, fn] = check.make(rng);
            worst = std::max(worst, graph_rel_err(fn, ins));
        }
        record(check.name, worst, tol(1e-4));
    }

    for (AugOp op : all_aug_ops()) {
        if (!aug_op_strength_learnable(op)) continue;
        double worst = 0.0;
        for (int s = 0; s < seeds; ++s) {
            RngStream rng = RngStream::from_seed(9000 + static_cast<std::uint64_t>(s));
            worst = std::max(worst, strength_check(op, rng));
        }
        const double t = op == AugOp::temporal_displacement ? 1e-3 : 1e-4;
        record(std::string("strength/") + aug_op_name(op), worst, tol(t));
    }

    {
        double worst = 0.0;
        for (int s = 0; s < seeds; ++s) {
            RngStream rng = RngStream::from_seed(13000 + static_cast<std::uint64_t>(s));
            worst = std::max(worst, factor_check(rng));
        }
        record("policy/straight_through_factor", worst, tol(1e-4));
    }

    // bilevel machinery against analytic quadratics
    {
        TrainLossFn gap = [](Tape& t, const std::vector<NodeId>& th,
                             const std::vector<NodeId>& ph) {
            NodeId d = t.sub(th[0], ph[0]);
            return t.scale_const(t.mul(d, d), 0.5);
        };
        TrainLossFn diag = [](Tape& t, const std::vector<NodeId>& th,
                              const std::vector<NodeId>&) {
            NodeId a = t.input(Tensor({2}, {1.0, 2.0}));
            return t.scale_const(t.sum(t.mul(t.mul(th[0], th[0]), a)), 0.5);
        };
        ValLossFn val = [](Tape& t, const std::vector<NodeId>& th) {
            return t.scale_const(t.mul(th[0], th[0]), 0.5);
        };

        {
            const ParamVec theta = {Tensor({2}, {0.4, -0.3})};
            const ParamVec w = {Tensor({2}, {0.9, -1.1})};
            ParamVec hw = hessian_vector_product(diag, theta, {Tensor::scalar(0.0)}, w, 1e-3);
            const double err = std::max(std::fabs(hw[0][0] - w[0][0]),
                                        std::fabs(hw[0][1] - 2.0 * w[0][1]));
            record("hypergrad/hvp_quadratic", err / 2.0, tol(1e-5));
        }
        {
            const ParamVec theta = {Tensor({2}, {0.4, -0.3})};
            const ParamVec v = {Tensor({2}, {2.0, -3.0})};
            ParamVec out =
                neumann_inverse_hvp(v, diag, theta, {Tensor::scalar(0.0)}, 50, 0.5, 1e-3);
            const double err =
                std::max(std::fabs(out[0][0] - 2.0), std::fabs(out[0][1] + 1.5));
            record("hypergrad/neumann_inverse", err, tol(1e-6));
            ParamVec z = neumann_inverse_hvp(v, diag, theta, {Tensor::scalar(0.0)}, 0, 0.25, 1e-3);
            const double exact = std::fabs(z[0][0] - 0.25 * v[0][0]) +
                                 std::fabs(z[0][1] - 0.25 * v[0][1]);
            record("hypergrad/neumann_zero_terms_exact", exact, tol(0.0));
        }
        {
            HyperConfig c;
            c.neumann_terms = 50;
            c.lr_inner = 0.5;
            const double phi_val = 0.73;
            ParamVec g = hypergradient(gap, val, scalar_like(phi_val), scalar_like(phi_val), c);
            record("hypergrad/bilevel_oracle", std::fabs(g[0].item() - phi_val), tol(1e-4));
        }
    }
    return results;
}

inline bool all_pass(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace taskaug
