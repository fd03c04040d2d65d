// The six policy transformations. Each is recorded on the tape and is
// differentiable with respect to the input signal and (except the time mask)
// the strength node. All randomness is drawn up front into an AugDraw that
// never depends on the strength, so strength gradients flow through
// deterministic arithmetic only.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "taskaug/rng.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

enum class AugOp {
    time_mask,
    gaussian_noise,
    temporal_warp,
    baseline_wander,
    magnitude_scale,
    temporal_displacement,
};

inline const std::vector<AugOp>& all_aug_ops() {
    static const std::vector<AugOp> ops = {
        AugOp::time_mask,       AugOp::gaussian_noise,  AugOp::temporal_warp,
        AugOp::baseline_wander, AugOp::magnitude_scale, AugOp::temporal_displacement};
    return ops;
}

inline const char* aug_op_name(AugOp op) {
    switch (op) {
        case AugOp::time_mask: return "time_mask";
        case AugOp::gaussian_noise: return "gaussian_noise";
        case AugOp::temporal_warp: return "temporal_warp";
        case AugOp::baseline_wander: return "baseline_wander";
        case AugOp::magnitude_scale: return "magnitude_scale";
        case AugOp::temporal_displacement: return "temporal_displacement";
    }
    return "?";
}

inline AugOp aug_op_from_name(const std::string& name) {
    for (AugOp op : all_aug_ops())
        if (name == aug_op_name(op)) return op;
    throw ContractViolation("unknown augmentation operator '" + name + "'");
}

// Initial strength values; the time mask fraction is fixed and its strength
// slot is never optimized.
inline double aug_op_init_strength(AugOp op) {
    switch (op) {
        case AugOp::temporal_warp: return 1.0;
        case AugOp::temporal_displacement: return 0.5;
        default: return 0.0;
    }
}

inline bool aug_op_strength_learnable(AugOp op) { return op != AugOp::time_mask; }

constexpr int kWarpSquaringSteps = 8;
constexpr double kTimeMaskFraction = 0.1;

inline double warp_smooth_std(std::size_t samples) {
    return std::max(1.0, static_cast<double>(samples) / 64.0);
}

// Standard draws for one operator application; independent of the strength.
struct AugDraw {
    AugOp op = AugOp::time_mask;
    Tensor noise;   // gaussian_noise: [C x T]; temporal_warp: [T]
    double u1 = 0.0, u2 = 0.0, u3 = 0.0;
};

inline AugDraw make_aug_draw(AugOp op, RngStream& rng, std::size_t leads, std::size_t samples) {
    AugDraw d;
    d.op = op;
    switch (op) {
        case AugOp::time_mask:
            d.u1 = rng.uniform();
            break;
        case AugOp::gaussian_noise:
            d.noise = rng.normal_tensor({leads, samples});
            break;
        case AugOp::temporal_warp:
            d.noise = rng.normal_tensor({samples});
            break;
        case AugOp::baseline_wander:
            d.u1 = rng.uniform();
            d.u2 = rng.uniform();
            d.u3 = rng.uniform();
            break;
        case AugOp::magnitude_scale:
        case AugOp::temporal_displacement:
            d.u1 = rng.uniform();
            break;
    }
    return d;
}

namespace aug_detail {

// x + 0.25 * sigma_lead * sigmoid(s) * xi, sigma taken from the forward value.
inline NodeId gaussian_noise(Tape& tape, NodeId x, NodeId s, const AugDraw& draw) {
    const Tensor& vx = tape.value(x);
    const std::size_t C = vx.shape[0], T = vx.shape[1];
    Tensor tmpl = Tensor::zeros({C, T});
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += vx.at(c, t);
        mean /= static_cast<double>(T);
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = vx.at(c, t) - mean;
            var += d * d;
        }
        const double sigma = std::sqrt(var / static_cast<double>(T));
        for (std::size_t t = 0; t < T; ++t)
            tmpl.at(c, t) = 0.25 * sigma * draw.noise.at(c, t);
    }
    const NodeId tmpl_node = tape.input(std::move(tmpl));
    return tape.add(x, tape.scale(tmpl_node, tape.sigmoid(s)));
}

// Velocity 10*s*xi integrated by scaling and squaring, then Gaussian-smoothed.
inline NodeId warp_displacement_field(Tape& tape, NodeId s, const AugDraw& draw) {
    const std::size_t T = draw.noise.shape.back();
    Tensor z = draw.noise;
    for (double& v : z.data) v *= 10.0;
    const NodeId z_node = tape.input(std::move(z));
    NodeId field = tape.scale_const(tape.scale(z_node, s),
                                    1.0 / static_cast<double>(1 << kWarpSquaringSteps));
    for (int i = 0; i < kWarpSquaringSteps; ++i)
        field = tape.add(field, tape.linear_resample(field, field));
    return tape.gaussian_smooth(field, warp_smooth_std(T));
}

// One shared displacement field resamples every channel.
inline NodeId temporal_warp(Tape& tape, NodeId x, NodeId s, const AugDraw& draw) {
    return tape.linear_resample(x, warp_displacement_field(tape, s, draw));
}

// Adds A*sin(2*pi*f*t/fs + phase) identically to all leads;
// A = 0.25*sigmoid(s)*U1, f = (20*U2 + 10)/60 Hz, phase = 2*pi*U3.
inline NodeId baseline_wander(Tape& tape, NodeId x, NodeId s, const AugDraw& draw, double fs) {
    require(fs > 0.0, "baseline_wander: signal sampling rate missing or non-positive");
    const Tensor& vx = tape.value(x);
    const std::size_t C = vx.shape[0], T = vx.shape[1];
    const double f = (20.0 * draw.u2 + 10.0) / 60.0;
    const double phase = 2.0 * M_PI * draw.u3;
    const double omega = 2.0 * M_PI * f / fs;
    Tensor tmpl = Tensor::zeros({C, T});
    for (std::size_t t = 0; t < T; ++t) {
        const double v = 0.25 * draw.u1 * std::sin(omega * static_cast<double>(t) + phase);
        for (std::size_t c = 0; c < C; ++c) tmpl.at(c, t) = v;
    }
    const NodeId tmpl_node = tape.input(std::move(tmpl));
    return tape.add(x, tape.scale(tmpl_node, tape.sigmoid(s)));
}

// sigmoid(s) * Uniform(0.75, 1.25) applied to all leads.
inline NodeId magnitude_scale(Tape& tape, NodeId x, NodeId s, const AugDraw& draw) {
    const NodeId factor = tape.scale_const(tape.sigmoid(s), 0.75 + 0.5 * draw.u1);
    return tape.scale(x, factor);
}

// Zeros floor(0.1*T) contiguous samples on all leads; no strength gradient.
inline NodeId time_mask(Tape& tape, NodeId x, const AugDraw& draw) {
    const Tensor& vx = tape.value(x);
    const std::size_t C = vx.shape[0], T = vx.shape[1];
    const std::size_t len = static_cast<std::size_t>(kTimeMaskFraction * static_cast<double>(T));
    const std::size_t start =
        len >= T ? 0
                 : static_cast<std::size_t>(draw.u1 * static_cast<double>(T - len));
    Tensor mask = Tensor::full({C, T}, 1.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = start; t < std::min(start + len, T); ++t) mask.at(c, t) = 0.0;
    return tape.mul(x, tape.input(std::move(mask)));
}

// Translation by 100*s^2*(2U-1) samples; the signal is zero-extended so
// vacated positions fill with zeros, and a constant displacement field keeps
// the translation differentiable in s.
inline NodeId temporal_displacement(Tape& tape, NodeId x, NodeId s, const AugDraw& draw) {
    const Tensor& vx = tape.value(x);
    const std::size_t T = vx.shape[1];
    const std::size_t P = T;  // supports shifts up to a full window either way
    const NodeId offset = tape.scale_const(tape.mul(s, s), 100.0 * (2.0 * draw.u1 - 1.0));
    const NodeId ext = tape.pad_time(x, P, P);
    // field = -offset at every position: out[t] = ext[t - offset]
    const NodeId neg_ones = tape.input(Tensor::full({T + 2 * P}, -1.0));
    const NodeId field = tape.scale(neg_ones, offset);
    return tape.crop_time(tape.linear_resample(ext, field), P, T);
}

}  // namespace aug_detail

// Applies one operator to a [C x T] signal node. `s` must be a scalar node;
// the time mask ignores it. `fs` is only consulted by the baseline wander.
inline NodeId apply_aug(Tape& tape, AugOp op, NodeId x, NodeId s, const AugDraw& draw, double fs) {
    const Tensor& vx = tape.value(x);
    require(vx.rank() == 2, "apply_aug: signal must be [C x T], got " + shape_str(vx.shape));
    require(tape.value(s).size() == 1, "apply_aug: strength must be scalar");
    switch (op) {
        case AugOp::time_mask: return aug_detail::time_mask(tape, x, draw);
        case AugOp::gaussian_noise: return aug_detail::gaussian_noise(tape, x, s, draw);
        case AugOp::temporal_warp: return aug_detail::temporal_warp(tape, x, s, draw);
        case AugOp::baseline_wander: return aug_detail::baseline_wander(tape, x, s, draw, fs);
        case AugOp::magnitude_scale: return aug_detail::magnitude_scale(tape, x, s, draw);
        case AugOp::temporal_displacement: return aug_detail::temporal_displacement(tape, x, s, draw);
    }
    throw ContractViolation("apply_aug: bad operator");
}

}  // namespace taskaug
