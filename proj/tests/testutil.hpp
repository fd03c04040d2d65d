// Shared helpers for the unit suites: central finite-difference oracles used
// to check every tape gradient path.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "taskaug/rng.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"

namespace testutil {

using taskaug::NodeId;
using taskaug::Tape;
using taskaug::Tensor;

// Builds a graph from leaf inputs and returns a scalar loss node.
using GraphFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

inline double eval_loss(const GraphFn& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(tape.input(t));
    return tape.value(fn(tape, ids)).item();
}

inline std::vector<Tensor> autodiff_grads(const GraphFn& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(tape.input(t));
    return tape.backward(fn(tape, ids), ids);
}

inline std::vector<Tensor> fd_grads(const GraphFn& fn, std::vector<Tensor> inputs,
                                    double h = 1e-6) {
    std::vector<Tensor> grads;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor g = Tensor::zeros(inputs[k].shape);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double lp = eval_loss(fn, inputs);
            inputs[k][i] = orig - h;
            const double lm = eval_loss(fn, inputs);
            inputs[k][i] = orig;
            g[i] = (lp - lm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// max |ad - fd| over all inputs, relative to the gradient scale
inline double grad_rel_err(const GraphFn& fn, const std::vector<Tensor>& inputs,
                           double h = 1e-6) {
    const auto ad = autodiff_grads(fn, inputs);
    const auto fd = fd_grads(fn, inputs, h);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ad.size(); ++k) {
        for (std::size_t i = 0; i < ad[k].size(); ++i) {
            num = std::max(num, std::fabs(ad[k][i] - fd[k][i]));
            den = std::max(den, std::fabs(fd[k][i]));
        }
    }
    return num / std::max(den, 1e-8);
}

}  // namespace testutil
