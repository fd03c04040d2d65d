// 1D convolutional classifier: a stride-2 stem, residual blocks of two
// convolutions with a projected skip, temporal average pooling, and a linear
// head producing one logit. Kernel 15 / stride 2 throughout; the desk-scale
// widths keep the whole suite runnable on one CPU core while the paper-scale
// widths remain constructible.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "taskaug/rng.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

struct ModelConfig {
    std::size_t kernel = 15;
    std::size_t stride = 2;
    std::vector<std::size_t> widths = {16, 32};
    std::size_t leads = 3;
    std::size_t samples = 256;

    std::size_t pad() const { return (kernel - 1) / 2; }

    // stem + one stride-2 stage per block
    std::size_t final_length() const {
        std::size_t len = samples;
        for (std::size_t i = 0; i < widths.size() + 1; ++i) len = (len + stride - 1) / stride;
        return len;
    }

    std::size_t min_samples() const {
        std::size_t t = 1;
        while (ModelConfig{kernel, stride, widths, leads, t}.final_length() < 2) ++t;
        return t;
    }

    static ModelConfig desk(std::size_t leads, std::size_t samples) {
        ModelConfig c;
        c.leads = leads;
        c.samples = samples;
        return c;
    }

    static ModelConfig paper_scale(std::size_t leads, std::size_t samples) {
        ModelConfig c;
        c.widths = {32, 64, 128, 256};
        c.leads = leads;
        c.samples = samples;
        return c;
    }
};

struct ModelParams {
    ModelConfig cfg;
    std::vector<std::string> names;
    std::vector<Tensor> values;
};

namespace model_detail {

inline Tensor kaiming_uniform(RngStream& rng, std::vector<std::size_t> shape,
                              std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = bound * (2.0 * rng.uniform() - 1.0);
    return t;
}

}  // namespace model_detail

inline ModelParams build_model(const ModelConfig& cfg, RngStream rng) {
    require(!cfg.widths.empty(), "build_model: widths must be non-empty");
    require(cfg.kernel % 2 == 1, "build_model: kernel must be odd");
    require(cfg.stride >= 1, "build_model: stride must be >= 1");
    require(cfg.samples >= cfg.min_samples(),
            "build_model: input length " + std::to_string(cfg.samples) +
                " too short for the stride pyramid; minimal supported length is " +
                std::to_string(cfg.min_samples()));

    ModelParams p;
    p.cfg = cfg;
    auto push = [&](const std::string& name, Tensor t) {
        p.names.push_back(name);
        p.values.push_back(std::move(t));
    };

    const std::size_t K = cfg.kernel;
    std::size_t prev = cfg.widths[0];
    push("stem.w", model_detail::kaiming_uniform(rng, {prev, cfg.leads, K}, cfg.leads * K));
    push("stem.b", Tensor::zeros({prev}));
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
        const std::size_t w = cfg.widths[i];
        const std::string base = "block" + std::to_string(i);
        push(base + ".conv1.w", model_detail::kaiming_uniform(rng, {w, prev, K}, prev * K));
        push(base + ".conv1.b", Tensor::zeros({w}));
        push(base + ".conv2.w", model_detail::kaiming_uniform(rng, {w, w, K}, w * K));
        push(base + ".conv2.b", Tensor::zeros({w}));
        push(base + ".proj.w", model_detail::kaiming_uniform(rng, {w, prev, 1}, prev));
        push(base + ".proj.b", Tensor::zeros({w}));
        prev = w;
    }
    push("head.w", model_detail::kaiming_uniform(rng, {1, prev}, prev));
    push("head.b", Tensor::zeros({1}));
    return p;
}

// Forward pass to a scalar logit; theta follows build_model's layout.
inline NodeId model_forward(Tape& tape, const std::vector<NodeId>& theta, const ModelConfig& cfg,
                            NodeId x) {
    require(theta.size() == 2 + 6 * cfg.widths.size() + 2,
            "model_forward: parameter count mismatch");
    const std::size_t pad = cfg.pad();
    std::size_t i = 0;
    NodeId h = tape.relu(tape.bias_add(tape.conv1d(x, theta[i], cfg.stride, pad), theta[i + 1]));
    i += 2;
    for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
        NodeId a = tape.relu(
            tape.bias_add(tape.conv1d(h, theta[i], cfg.stride, pad), theta[i + 1]));
        NodeId body = tape.bias_add(tape.conv1d(a, theta[i + 2], 1, pad), theta[i + 3]);
        NodeId skip = tape.bias_add(tape.conv1d(h, theta[i + 4], cfg.stride, 0), theta[i + 5]);
        h = tape.relu(tape.add(body, skip));
        i += 6;
    }
    NodeId pooled = tape.avgpool1d(h);
    NodeId logit = tape.add(tape.matmul(theta[i], pooled), theta[i + 1]);
    return tape.gather(logit, 0);
}

}  // namespace taskaug
