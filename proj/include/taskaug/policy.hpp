// The K-stage augmentation policy. Each stage samples one operator through a
// Gumbel-Softmax draw and applies it scaled by the straight-through factor
// u_i / stop_grad(u_i), whose value is exactly 1 and whose gradient routes to
// the selection logits. Per-class strengths are routed by
// s = y*mu1 + (1-y)*mu0.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskaug/augops.hpp"
#include "taskaug/rng.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

struct StageParams {
    Tensor selection_logits;  // [M]; softmax gives the paper's pi
    Tensor mu0;               // [M] strengths for label 0
    Tensor mu1;               // [M] strengths for label 1
};

struct PolicyParams {
    std::vector<AugOp> operators;
    double temperature = 1.0;
    bool global_magnitude = false;  // strength read from mu0 for both classes
    std::vector<StageParams> stages;

    std::size_t num_ops() const { return operators.size(); }
    std::size_t num_stages() const { return stages.size(); }
};

// Uniform selection (zero logits) and the per-operator initial strengths for
// both classes.
inline PolicyParams init_policy(const std::vector<AugOp>& operators, std::size_t stages,
                                double temperature) {
    require(!operators.empty(), "init_policy: empty operator set");
    require(temperature > 0.0, "init_policy: temperature must be > 0");
    PolicyParams p;
    p.operators = operators;
    p.temperature = temperature;
    const std::size_t M = operators.size();
    for (std::size_t k = 0; k < stages; ++k) {
        StageParams sp;
        sp.selection_logits = Tensor::zeros({M});
        sp.mu0 = Tensor::zeros({M});
        sp.mu1 = Tensor::zeros({M});
        for (std::size_t i = 0; i < M; ++i) {
            sp.mu0[i] = aug_op_init_strength(operators[i]);
            sp.mu1[i] = aug_op_init_strength(operators[i]);
        }
        p.stages.push_back(std::move(sp));
    }
    return p;
}

// Policy parameters placed on a tape as leaves, in the flat phi order used by
// the hypergradient: stage 0 logits, mu0, mu1, stage 1 logits, ...
struct PolicyNodes {
    std::vector<NodeId> logits, mu0, mu1;  // per stage

    std::vector<NodeId> flat() const {
        std::vector<NodeId> out;
        for (std::size_t k = 0; k < logits.size(); ++k) {
            out.push_back(logits[k]);
            out.push_back(mu0[k]);
            out.push_back(mu1[k]);
        }
        return out;
    }
};

inline PolicyNodes place_policy(Tape& tape, const PolicyParams& p) {
    PolicyNodes n;
    for (const StageParams& sp : p.stages) {
        n.logits.push_back(tape.input(sp.selection_logits));
        n.mu0.push_back(tape.input(sp.mu0));
        n.mu1.push_back(tape.input(sp.mu1));
    }
    return n;
}

struct StageSample {
    std::size_t index;  // selected operator
    NodeId factor;      // value exactly 1.0, gradient reaches the logits
};

// Gumbel-Softmax draw: u = softmax((logits + g)/tau), i = argmax u (ties to
// the lowest index), factor = u_i / stop_grad(u_i).
inline StageSample sample_stage(Tape& tape, NodeId logits_node, double temperature,
                                RngStream& rng) {
    require(temperature > 0.0, "sample_stage: temperature must be > 0, got " +
                                   std::to_string(temperature));
    const std::size_t M = tape.value(logits_node).shape[0];
    Tensor gumbels = Tensor::zeros({M});
    for (std::size_t i = 0; i < M; ++i) gumbels[i] = rng.gumbel();
    const NodeId z = tape.scale_const(tape.add(logits_node, tape.input(std::move(gumbels))),
                                      1.0 / temperature);
    const NodeId u = tape.softmax(z);
    const Tensor& uv = tape.value(u);
    std::size_t best = 0;
    for (std::size_t i = 1; i < M; ++i)
        if (uv[i] > uv[best]) best = i;
    return StageSample{best, tape.straight_through_unit(tape.gather(u, best))};
}

// s = y*mu1 + (1-y)*mu0 as a node, so the gradient reaches exactly one of the
// two strengths for each example.
inline NodeId compute_strength(Tape& tape, int label, NodeId mu0_scalar, NodeId mu1_scalar) {
    require(label == 0 || label == 1,
            "compute_strength: label must be 0 or 1, got " + std::to_string(label));
    const double y = static_cast<double>(label);
    return tape.add(tape.scale_const(mu1_scalar, y), tape.scale_const(mu0_scalar, 1.0 - y));
}

// Applies the K-stage policy to a [C x T] signal node. Stage k consumes the
// substream rng.child(k): the Gumbel draws first, then the selected
// operator's own draws.
inline NodeId apply_policy(Tape& tape, const PolicyParams& p, const PolicyNodes& nodes, NodeId x,
                           int label, const RngStream& rng, double fs) {
    require(label == 0 || label == 1, "apply_policy: label must be 0 or 1");
    const Tensor& vx = tape.value(x);
    const std::size_t C = vx.shape[0], T = vx.shape[1];
    NodeId cur = x;
    for (std::size_t k = 0; k < nodes.logits.size(); ++k) {
        RngStream stage_rng = rng.child(k);
        const StageSample pick = sample_stage(tape, nodes.logits[k], p.temperature, stage_rng);
        const AugOp op = p.operators[pick.index];
        const NodeId mu0_i = tape.gather(nodes.mu0[k], pick.index);
        const NodeId strength =
            p.global_magnitude ? mu0_i
                               : compute_strength(tape, label, mu0_i,
                                                  tape.gather(nodes.mu1[k], pick.index));
        const AugDraw draw = make_aug_draw(op, stage_rng, C, T);
        cur = tape.scale(apply_aug(tape, op, cur, strength, draw, fs), pick.factor);
    }
    return cur;
}

// ---- serialization ----------------------------------------------------------

inline std::vector<double> softmax_values(const Tensor& logits) {
    std::vector<double> out(logits.size());
    double mx = logits[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline nlohmann::json stage_to_json(const StageParams& sp) {
    return nlohmann::json{{"pi", softmax_values(sp.selection_logits)},
                          {"mu0", sp.mu0.data},
                          {"mu1", sp.mu1.data}};
}

inline nlohmann::json policy_to_json(const PolicyParams& p) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageParams& sp : p.stages) stages.push_back(stage_to_json(sp));
    nlohmann::json ops = nlohmann::json::array();
    for (AugOp op : p.operators) ops.push_back(aug_op_name(op));
    return nlohmann::json{{"temperature", p.temperature},
                          {"operators", ops},
                          {"global_magnitude", p.global_magnitude},
                          {"stages", stages}};
}

inline PolicyParams policy_from_json(const nlohmann::json& j) {
    PolicyParams p;
    for (const auto& name : j.at("operators")) p.operators.push_back(aug_op_from_name(name));
    p.temperature = j.at("temperature").get<double>();
    p.global_magnitude = j.value("global_magnitude", false);
    for (const auto& js : j.at("stages")) {
        StageParams sp;
        const auto pi = js.at("pi").get<std::vector<double>>();
        sp.selection_logits = Tensor::zeros({pi.size()});
        for (std::size_t i = 0; i < pi.size(); ++i)
            sp.selection_logits[i] = std::log(std::max(pi[i], 1e-300));
        sp.mu0 = Tensor({pi.size()}, js.at("mu0").get<std::vector<double>>());
        sp.mu1 = Tensor({pi.size()}, js.at("mu1").get<std::vector<double>>());
        p.stages.push_back(std::move(sp));
    }
    return p;
}

}  // namespace taskaug
