// Reverse-mode tape: each forward op appends a node holding its output and a
// vector-Jacobian closure. backward() walks the tape once in reverse creation
// order (a valid reverse topological order, since inputs always precede
// outputs) and accumulates gradients additively across fan-out. Nodes that are
// not on a path between the loss and a requested parameter are skipped, and a
// VJP only fills the input slots that are actually needed; this is what makes
// policy-only backward passes cheap.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "taskaug/tensor.hpp"

namespace taskaug {

using NodeId = std::int32_t;

class Tape;

struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    // Accumulates into grads[i] for each non-null input slot.
    std::function<void(const Tape&, const Node&, const Tensor& gout,
                       const std::vector<Tensor*>& grads)>
        vjp;
    const char* op = "input";
};

constexpr double kBceProbClamp = 1e-7;

// Attributes consumed by the string-dispatched forward_op entry point.
struct OpAttrs {
    std::size_t stride = 1;
    std::size_t pad = 0;
    double kernel_std = 1.0;
    std::size_t index = 0;
    std::size_t left = 0, right = 0, start = 0, len = 0;
    double c = 1.0;
};

class Tape {
public:
    NodeId input(Tensor v) {
        nodes_.push_back(Node{std::move(v), {}, nullptr, "input"});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise ----------------------------------------------------

    NodeId add(NodeId a, NodeId b) {
        check_same("add", a, b);
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
        return push(std::move(out), {a, b}, "add",
                    [](const Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& gr) {
                        for (int s = 0; s < 2; ++s)
                            if (gr[s])
                                for (std::size_t i = 0; i < g.size(); ++i) gr[s]->data[i] += g[i];
                    });
    }

    NodeId sub(NodeId a, NodeId b) {
        check_same("sub", a, b);
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
        return push(std::move(out), {a, b}, "sub",
                    [](const Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (gr[0])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[0]->data[i] += g[i];
                        if (gr[1])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[1]->data[i] -= g[i];
                    });
    }

    NodeId mul(NodeId a, NodeId b) {
        check_same("mul", a, b);
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
        return push(std::move(out), {a, b}, "mul",
                    [](const Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        const Tensor& va = t.value(n.inputs[0]);
                        const Tensor& vb2 = t.value(n.inputs[1]);
                        if (gr[0])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[0]->data[i] += g[i] * vb2[i];
                        if (gr[1])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[1]->data[i] += g[i] * va[i];
                    });
    }

    // tensor * scalar node
    NodeId scale(NodeId x, NodeId s) {
        require(value(s).size() == 1,
                "scale: second argument must be scalar, got " + shape_str(value(s).shape));
        Tensor out = value(x);
        const double sv = value(s)[0];
        for (double& v : out.data) v *= sv;
        return push(std::move(out), {x, s}, "scale",
                    [](const Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        const Tensor& vx = t.value(n.inputs[0]);
                        const double s2 = t.value(n.inputs[1])[0];
                        if (gr[0])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[0]->data[i] += g[i] * s2;
                        if (gr[1]) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * vx[i];
                            gr[1]->data[0] += acc;
                        }
                    });
    }

    NodeId scale_const(NodeId x, double c) {
        Tensor out = value(x);
        for (double& v : out.data) v *= c;
        const double cc = c;
        return push(std::move(out), {x}, "scale_const",
                    [cc](const Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (gr[0])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[0]->data[i] += g[i] * cc;
                    });
    }

    NodeId relu(NodeId x) {
        Tensor out = value(x);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(std::move(out), {x}, "relu",
                    [](const Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const Tensor& vx = t.value(n.inputs[0]);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            if (vx[i] > 0.0) gr[0]->data[i] += g[i];
                    });
    }

    NodeId sigmoid(NodeId x) {
        Tensor out = value(x);
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        return push(std::move(out), {x}, "sigmoid",
                    [](const Tape&, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const double y = n.value[i];
                            gr[0]->data[i] += g[i] * y * (1.0 - y);
                        }
                    });
    }

    NodeId sin(NodeId x) {
        Tensor out = value(x);
        for (double& v : out.data) v = std::sin(v);
        return push(std::move(out), {x}, "sin",
                    [](const Tape& t, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const Tensor& vx = t.value(n.inputs[0]);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            gr[0]->data[i] += g[i] * std::cos(vx[i]);
                    });
    }

    // softmax over a length-M vector, computed with max subtraction
    NodeId softmax(NodeId x) {
        require(value(x).rank() == 1, "softmax: expects rank-1 input, got " + shape_str(value(x).shape));
        Tensor out = value(x);
        double mx = out[0];
        for (double v : out.data) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : out.data) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : out.data) v /= sum;
        return push(std::move(out), {x}, "softmax",
                    [](const Tape&, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        double gy = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * n.value[i];
                        for (std::size_t i = 0; i < g.size(); ++i)
                            gr[0]->data[i] += n.value[i] * (g[i] - gy);
                    });
    }

    // ---- reductions ------------------------------------------------------

    NodeId sum(NodeId x) {
        double s = 0.0;
        for (double v : value(x).data) s += v;
        return push(Tensor::scalar(s), {x}, "sum",
                    [](const Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        for (double& v : gr[0]->data) v += g[0];
                    });
    }

    NodeId mean(NodeId x) {
        double s = 0.0;
        for (double v : value(x).data) s += v;
        const double n = static_cast<double>(value(x).size());
        return push(Tensor::scalar(s / n), {x}, "mean",
                    [](const Tape& t, const Node& n2, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const double inv = 1.0 / static_cast<double>(t.value(n2.inputs[0]).size());
                        for (double& v : gr[0]->data) v += g[0] * inv;
                    });
    }

    // [C x T] -> [C], temporal average pool
    NodeId avgpool1d(NodeId x) {
        const Tensor& vx = value(x);
        require(vx.rank() == 2, "avgpool1d: expects [C x T], got " + shape_str(vx.shape));
        const std::size_t C = vx.shape[0], T = vx.shape[1];
        Tensor out = Tensor::zeros({C});
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t t = 0; t < T; ++t) s += vx.at(c, t);
            out[c] = s / static_cast<double>(T);
        }
        return push(std::move(out), {x}, "avgpool1d",
                    [](const Tape& tp, const Node& n, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const Tensor& vx2 = tp.value(n.inputs[0]);
                        const std::size_t C2 = vx2.shape[0], T2 = vx2.shape[1];
                        const double inv = 1.0 / static_cast<double>(T2);
                        for (std::size_t c = 0; c < C2; ++c)
                            for (std::size_t t = 0; t < T2; ++t) gr[0]->data[c * T2 + t] += g[c] * inv;
                    });
    }

    // ---- linear algebra --------------------------------------------------

    // [n x k] * [k x m] -> [n x m], or [n x k] * [k] -> [n]
    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& va = value(a);
        const Tensor& vb = value(b);
        require(va.rank() == 2, "matmul: lhs must be rank 2, got " + shape_str(va.shape));
        const std::size_t n = va.shape[0], k = va.shape[1];
        const bool vec = vb.rank() == 1;
        const std::size_t m = vec ? 1 : vb.shape[1];
        require((vec && vb.shape[0] == k) || (vb.rank() == 2 && vb.shape[0] == k),
                "matmul: shape mismatch " + shape_str(va.shape) + " * " + shape_str(vb.shape));
        Tensor out = vec ? Tensor::zeros({n}) : Tensor::zeros({n, m});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < k; ++l) {
                const double av = va.data[i * k + l];
                for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += av * vb.data[l * m + j];
            }
        return push(std::move(out), {a, b}, "matmul",
                    [](const Tape& t, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        const Tensor& va2 = t.value(nd.inputs[0]);
                        const Tensor& vb2 = t.value(nd.inputs[1]);
                        const std::size_t n2 = va2.shape[0], k2 = va2.shape[1];
                        const std::size_t m2 = vb2.rank() == 1 ? 1 : vb2.shape[1];
                        if (gr[0])
                            for (std::size_t i = 0; i < n2; ++i)
                                for (std::size_t l = 0; l < k2; ++l) {
                                    double acc = 0.0;
                                    for (std::size_t j = 0; j < m2; ++j)
                                        acc += g.data[i * m2 + j] * vb2.data[l * m2 + j];
                                    gr[0]->data[i * k2 + l] += acc;
                                }
                        if (gr[1])
                            for (std::size_t l = 0; l < k2; ++l)
                                for (std::size_t i = 0; i < n2; ++i) {
                                    const double av = va2.data[i * k2 + l];
                                    for (std::size_t j = 0; j < m2; ++j)
                                        gr[1]->data[l * m2 + j] += av * g.data[i * m2 + j];
                                }
                    });
    }

    // x: [Cin x T], w: [Cout x Cin x K]; zero padding, T_out = (T + 2p - K)/s + 1
    NodeId conv1d(NodeId x, NodeId w, std::size_t stride, std::size_t pad) {
        const Tensor& vx = value(x);
        const Tensor& vw = value(w);
        require(vx.rank() == 2 && vw.rank() == 3,
                "conv1d: expects x [Cin x T], w [Cout x Cin x K], got " + shape_str(vx.shape) +
                    ", " + shape_str(vw.shape));
        require(vx.shape[0] == vw.shape[1],
                "conv1d: channel mismatch x " + shape_str(vx.shape) + " vs w " + shape_str(vw.shape));
        require(stride >= 1, "conv1d: stride must be >= 1");
        const std::size_t Cin = vx.shape[0], T = vx.shape[1];
        const std::size_t Cout = vw.shape[0], K = vw.shape[2];
        require(T + 2 * pad >= K, "conv1d: input length " + std::to_string(T) +
                                      " too short for kernel " + std::to_string(K));
        const std::size_t To = (T + 2 * pad - K) / stride + 1;

        Tensor out = Tensor::zeros({Cout, To});
        std::vector<double> xp(Cin * (T + 2 * pad), 0.0);
        for (std::size_t c = 0; c < Cin; ++c)
            std::copy(vx.data.begin() + static_cast<std::ptrdiff_t>(c * T),
                      vx.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * T),
                      xp.begin() + static_cast<std::ptrdiff_t>(c * (T + 2 * pad) + pad));
        const std::size_t Tp = T + 2 * pad;
        for (std::size_t co = 0; co < Cout; ++co) {
            double* dst = &out.data[co * To];
            for (std::size_t ci = 0; ci < Cin; ++ci) {
                const double* wrow = &vw.data[(co * Cin + ci) * K];
                const double* src = &xp[ci * Tp];
                for (std::size_t k = 0; k < K; ++k) {
                    const double wv = wrow[k];
                    if (wv == 0.0) continue;
                    const double* s2 = src + k;
                    if (stride == 1)
                        for (std::size_t t = 0; t < To; ++t) dst[t] += wv * s2[t];
                    else
                        for (std::size_t t = 0; t < To; ++t) dst[t] += wv * s2[t * stride];
                }
            }
        }
        const std::size_t sstride = stride, spad = pad;
        return push(std::move(out), {x, w}, "conv1d",
                    [sstride, spad](const Tape& t, const Node& nd, const Tensor& g,
                                    const std::vector<Tensor*>& gr) {
                        conv1d_vjp(t, nd, g, gr, sstride, spad);
                    });
    }

    // x: [C x T] + b: [C], broadcast over time
    NodeId bias_add(NodeId x, NodeId b) {
        const Tensor& vx = value(x);
        const Tensor& vb = value(b);
        require(vx.rank() == 2 && vb.rank() == 1 && vb.shape[0] == vx.shape[0],
                "bias_add: shapes " + shape_str(vx.shape) + " + " + shape_str(vb.shape));
        Tensor out = vx;
        const std::size_t C = vx.shape[0], T = vx.shape[1];
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) out.data[c * T + t] += vb[c];
        return push(std::move(out), {x, b}, "bias_add",
                    [](const Tape& t, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        const std::size_t C2 = t.value(nd.inputs[1]).shape[0];
                        const std::size_t T2 = g.shape[1];
                        if (gr[0])
                            for (std::size_t i = 0; i < g.size(); ++i) gr[0]->data[i] += g[i];
                        if (gr[1])
                            for (std::size_t c = 0; c < C2; ++c) {
                                double acc = 0.0;
                                for (std::size_t tt = 0; tt < T2; ++tt) acc += g.data[c * T2 + tt];
                                gr[1]->data[c] += acc;
                            }
                    });
    }

    // ---- signal ops --------------------------------------------------------

    // out[c][t] = linear interpolation of x[c] at t + disp[t]; positions clamp
    // to [0, T-1] and the clamp kills the displacement gradient there.
    // x may be [C x T] or [T] (treated as one channel).
    NodeId linear_resample(NodeId x, NodeId disp) {
        const Tensor& vx = value(x);
        const Tensor& vd = value(disp);
        require(vx.rank() == 1 || vx.rank() == 2,
                "linear_resample: x must be [C x T] or [T], got " + shape_str(vx.shape));
        require(vd.rank() == 1 && vd.shape[0] == vx.shape.back(),
                "linear_resample: displacement " + shape_str(vd.shape) + " vs x " +
                    shape_str(vx.shape));
        const std::size_t C = vx.rank() == 2 ? vx.shape[0] : 1;
        const std::size_t T = vx.shape.back();
        Tensor out = Tensor::zeros(vx.shape);
        for (std::size_t t = 0; t < T; ++t) {
            const double pos = static_cast<double>(t) + vd[t];
            const double pc = std::clamp(pos, 0.0, static_cast<double>(T - 1));
            std::size_t i0 = static_cast<std::size_t>(pc);
            if (i0 >= T - 1) i0 = T - 1;
            const std::size_t i1 = std::min(i0 + 1, T - 1);
            const double f = pc - static_cast<double>(i0);
            for (std::size_t c = 0; c < C; ++c)
                out.data[c * T + t] = (1.0 - f) * vx.data[c * T + i0] + f * vx.data[c * T + i1];
        }
        return push(std::move(out), {x, disp}, "linear_resample",
                    [](const Tape& tp, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        const Tensor& vx2 = tp.value(nd.inputs[0]);
                        const Tensor& vd2 = tp.value(nd.inputs[1]);
                        const std::size_t C2 = vx2.rank() == 2 ? vx2.shape[0] : 1;
                        const std::size_t T2 = vx2.shape.back();
                        for (std::size_t t = 0; t < T2; ++t) {
                            const double pos = static_cast<double>(t) + vd2[t];
                            const bool interior = pos > 0.0 && pos < static_cast<double>(T2 - 1);
                            const double pc = std::clamp(pos, 0.0, static_cast<double>(T2 - 1));
                            std::size_t i0 = static_cast<std::size_t>(pc);
                            if (i0 >= T2 - 1) i0 = T2 - 1;
                            const std::size_t i1 = std::min(i0 + 1, T2 - 1);
                            const double f = pc - static_cast<double>(i0);
                            double gd = 0.0;
                            for (std::size_t c = 0; c < C2; ++c) {
                                const double gv = g.data[c * T2 + t];
                                if (gr[0]) {
                                    gr[0]->data[c * T2 + i0] += (1.0 - f) * gv;
                                    gr[0]->data[c * T2 + i1] += f * gv;
                                }
                                gd += gv * (vx2.data[c * T2 + i1] - vx2.data[c * T2 + i0]);
                            }
                            if (gr[1] && interior) gr[1]->data[t] += gd;
                        }
                    });
    }

    // Gaussian filtering along the last axis of [T] or [C x T]; kernel is
    // truncated at +/- 4 sigma and renormalized, reflect padding at the edges.
    NodeId gaussian_smooth(NodeId x, double kernel_std) {
        require(kernel_std > 0.0, "gaussian_smooth: kernel_std must be > 0, got " +
                                      std::to_string(kernel_std));
        const Tensor& vx = value(x);
        require(vx.rank() == 1 || vx.rank() == 2,
                "gaussian_smooth: expects [T] or [C x T], got " + shape_str(vx.shape));
        const std::size_t T = vx.shape.back();
        const std::size_t C = vx.rank() == 2 ? vx.shape[0] : 1;
        const auto kernel = make_gaussian_kernel(kernel_std);
        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(kernel.size() / 2);

        Tensor out = Tensor::zeros(vx.shape);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < kernel.size(); ++j) {
                    const std::size_t src = reflect_index(
                        static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - r, T);
                    acc += kernel[j] * vx.data[c * T + src];
                }
                out.data[c * T + t] = acc;
            }
        return push(std::move(out), {x}, "gaussian_smooth",
                    [kernel, r](const Tape& tp, const Node& nd, const Tensor& g,
                                const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const Tensor& vx2 = tp.value(nd.inputs[0]);
                        const std::size_t T2 = vx2.shape.back();
                        const std::size_t C2 = vx2.rank() == 2 ? vx2.shape[0] : 1;
                        for (std::size_t c = 0; c < C2; ++c)
                            for (std::size_t t = 0; t < T2; ++t) {
                                const double gv = g.data[c * T2 + t];
                                for (std::size_t j = 0; j < kernel.size(); ++j) {
                                    const std::size_t src = reflect_index(
                                        static_cast<std::ptrdiff_t>(t) +
                                            static_cast<std::ptrdiff_t>(j) - r,
                                        T2);
                                    gr[0]->data[c * T2 + src] += kernel[j] * gv;
                                }
                            }
                    });
    }

    // mean binary cross entropy over probabilities, clamped to
    // [kBceProbClamp, 1 - kBceProbClamp]; clamped entries get zero gradient.
    NodeId bce_loss(NodeId probs, NodeId targets) {
        check_same("bce_loss", probs, targets);
        const Tensor& vp = value(probs);
        const Tensor& vy = value(targets);
        const std::size_t N = vp.size();
        double loss = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double p = std::clamp(vp[i], kBceProbClamp, 1.0 - kBceProbClamp);
            loss -= vy[i] * std::log(p) + (1.0 - vy[i]) * std::log(1.0 - p);
        }
        loss /= static_cast<double>(N);
        return push(Tensor::scalar(loss), {probs, targets}, "bce_loss",
                    [](const Tape& tp, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        const Tensor& vp2 = tp.value(nd.inputs[0]);
                        const Tensor& vy2 = tp.value(nd.inputs[1]);
                        const std::size_t N2 = vp2.size();
                        const double inv = g[0] / static_cast<double>(N2);
                        for (std::size_t i = 0; i < N2; ++i) {
                            const bool clamped =
                                vp2[i] < kBceProbClamp || vp2[i] > 1.0 - kBceProbClamp;
                            const double p = std::clamp(vp2[i], kBceProbClamp, 1.0 - kBceProbClamp);
                            if (gr[0] && !clamped)
                                gr[0]->data[i] += inv * (p - vy2[i]) / (p * (1.0 - p));
                            if (gr[1]) gr[1]->data[i] += inv * (std::log(1.0 - p) - std::log(p));
                        }
                    });
    }

    // ---- structural ops ---------------------------------------------------

    NodeId gather(NodeId x, std::size_t idx) {
        const Tensor& vx = value(x);
        require(vx.rank() == 1 && idx < vx.shape[0],
                "gather: index " + std::to_string(idx) + " out of " + shape_str(vx.shape));
        const std::size_t ii = idx;
        return push(Tensor::scalar(vx[idx]), {x}, "gather",
                    [ii](const Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (gr[0]) gr[0]->data[ii] += g[0];
                    });
    }

    NodeId stack(const std::vector<NodeId>& scalars) {
        require(!scalars.empty(), "stack: empty input list");
        Tensor out = Tensor::zeros({scalars.size()});
        for (std::size_t i = 0; i < scalars.size(); ++i) {
            require(value(scalars[i]).size() == 1, "stack: inputs must be scalars");
            out[i] = value(scalars[i])[0];
        }
        return push(std::move(out), scalars, "stack",
                    [](const Tape&, const Node&, const Tensor& g, const std::vector<Tensor*>& gr) {
                        for (std::size_t i = 0; i < g.size(); ++i)
                            if (gr[i]) gr[i]->data[0] += g[i];
                    });
    }

    // u / stop_grad(u): value exactly 1, gradient g / u.
    NodeId straight_through_unit(NodeId x) {
        require(value(x).size() == 1, "straight_through_unit: expects scalar");
        return push(Tensor::scalar(1.0), {x}, "straight_through_unit",
                    [](const Tape& tp, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (gr[0]) gr[0]->data[0] += g[0] / tp.value(nd.inputs[0])[0];
                    });
    }

    NodeId pad_time(NodeId x, std::size_t left, std::size_t right) {
        const Tensor& vx = value(x);
        require(vx.rank() == 2, "pad_time: expects [C x T], got " + shape_str(vx.shape));
        const std::size_t C = vx.shape[0], T = vx.shape[1];
        Tensor out = Tensor::zeros({C, T + left + right});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) out.at(c, t + left) = vx.at(c, t);
        const std::size_t l = left;
        return push(std::move(out), {x}, "pad_time",
                    [l](const Tape& tp, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const Tensor& vx2 = tp.value(nd.inputs[0]);
                        const std::size_t C2 = vx2.shape[0], T2 = vx2.shape[1];
                        for (std::size_t c = 0; c < C2; ++c)
                            for (std::size_t t = 0; t < T2; ++t)
                                gr[0]->data[c * T2 + t] += g.at(c, t + l);
                    });
    }

    NodeId crop_time(NodeId x, std::size_t start, std::size_t len) {
        const Tensor& vx = value(x);
        require(vx.rank() == 2 && start + len <= vx.shape[1],
                "crop_time: window [" + std::to_string(start) + ", " + std::to_string(start + len) +
                    ") out of " + shape_str(vx.shape));
        const std::size_t C = vx.shape[0];
        Tensor out = Tensor::zeros({C, len});
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < len; ++t) out.at(c, t) = vx.at(c, start + t);
        const std::size_t s0 = start;
        return push(std::move(out), {x}, "crop_time",
                    [s0](const Tape& tp, const Node& nd, const Tensor& g, const std::vector<Tensor*>& gr) {
                        if (!gr[0]) return;
                        const std::size_t Tin = tp.value(nd.inputs[0]).shape[1];
                        const std::size_t C2 = g.shape[0], L = g.shape[1];
                        for (std::size_t c = 0; c < C2; ++c)
                            for (std::size_t t = 0; t < L; ++t)
                                gr[0]->data[c * Tin + s0 + t] += g.at(c, t);
                    });
    }

    // ---- backward ----------------------------------------------------------

    // Gradient of a scalar loss with respect to each node in wrt. Nodes not
    // reachable from the loss get a zero gradient of their value's shape.
    std::vector<Tensor> backward(NodeId loss, const std::vector<NodeId>& wrt) const {
        require(value(loss).size() == 1,
                "backward: loss must be scalar, got " + shape_str(value(loss).shape));
        const std::size_t n = nodes_.size();
        std::vector<char> to_wrt(n, 0), from_loss(n, 0);
        for (NodeId w : wrt) to_wrt[static_cast<std::size_t>(w)] = 1;
        for (std::size_t id = 0; id < n; ++id) {
            if (to_wrt[id]) continue;
            for (NodeId in : nodes_[id].inputs)
                if (to_wrt[static_cast<std::size_t>(in)]) {
                    to_wrt[id] = 1;
                    break;
                }
        }
        from_loss[static_cast<std::size_t>(loss)] = 1;
        for (std::size_t id = static_cast<std::size_t>(loss) + 1; id-- > 0;) {
            if (!from_loss[id]) continue;
            for (NodeId in : nodes_[id].inputs) from_loss[static_cast<std::size_t>(in)] = 1;
        }

        std::vector<Tensor> grads(n);
        std::vector<char> has_grad(n, 0);
        auto grad_ptr = [&](NodeId id) -> Tensor* {
            const auto i = static_cast<std::size_t>(id);
            if (!from_loss[i] || !to_wrt[i]) return nullptr;
            if (!has_grad[i]) {
                grads[i] = Tensor::zeros(nodes_[i].value.shape);
                has_grad[i] = 1;
            }
            return &grads[i];
        };

        if (Tensor* gl = grad_ptr(loss)) gl->data[0] = 1.0;
        std::vector<Tensor*> in_grads;
        for (std::size_t id = static_cast<std::size_t>(loss) + 1; id-- > 0;) {
            const Node& node = nodes_[id];
            if (!has_grad[id] || !node.vjp) continue;
            in_grads.clear();
            in_grads.reserve(node.inputs.size());
            for (NodeId in : node.inputs) in_grads.push_back(grad_ptr(in));
            node.vjp(*this, node, grads[id], in_grads);
        }

        std::vector<Tensor> out;
        out.reserve(wrt.size());
        for (NodeId w : wrt) {
            const auto i = static_cast<std::size_t>(w);
            out.push_back(has_grad[i] ? std::move(grads[i]) : Tensor::zeros(nodes_[i].value.shape));
        }
        return out;
    }

    // ---- generic dispatch ---------------------------------------------------

    NodeId forward_op(const std::string& name, const std::vector<NodeId>& ins,
                      const OpAttrs& at = OpAttrs()) {
        auto arity = [&](std::size_t k) {
            require(ins.size() == k, "forward_op " + name + ": expected " + std::to_string(k) +
                                         " inputs, got " + std::to_string(ins.size()));
        };
        if (name == "add") { arity(2); return add(ins[0], ins[1]); }
        if (name == "sub") { arity(2); return sub(ins[0], ins[1]); }
        if (name == "mul") { arity(2); return mul(ins[0], ins[1]); }
        if (name == "scale") { arity(2); return scale(ins[0], ins[1]); }
        if (name == "scale_const") { arity(1); return scale_const(ins[0], at.c); }
        if (name == "matmul") { arity(2); return matmul(ins[0], ins[1]); }
        if (name == "conv1d") { arity(2); return conv1d(ins[0], ins[1], at.stride, at.pad); }
        if (name == "bias_add") { arity(2); return bias_add(ins[0], ins[1]); }
        if (name == "avgpool1d") { arity(1); return avgpool1d(ins[0]); }
        if (name == "relu") { arity(1); return relu(ins[0]); }
        if (name == "sigmoid") { arity(1); return sigmoid(ins[0]); }
        if (name == "sin") { arity(1); return sin(ins[0]); }
        if (name == "softmax") { arity(1); return softmax(ins[0]); }
        if (name == "sum") { arity(1); return sum(ins[0]); }
        if (name == "mean") { arity(1); return mean(ins[0]); }
        if (name == "linear_resample") { arity(2); return linear_resample(ins[0], ins[1]); }
        if (name == "gaussian_smooth") { arity(1); return gaussian_smooth(ins[0], at.kernel_std); }
        if (name == "bce_loss") { arity(2); return bce_loss(ins[0], ins[1]); }
        if (name == "gather") { arity(1); return gather(ins[0], at.index); }
        if (name == "stack") { return stack(ins); }
        if (name == "straight_through_unit") { arity(1); return straight_through_unit(ins[0]); }
        if (name == "pad_time") { arity(1); return pad_time(ins[0], at.left, at.right); }
        if (name == "crop_time") { arity(1); return crop_time(ins[0], at.start, at.len); }
        throw ContractViolation("forward_op: unknown op '" + name + "'");
    }

    static const std::vector<std::string>& registered_ops() {
        static const std::vector<std::string> ops = {
            "add",       "sub",       "mul",           "scale",          "scale_const",
            "matmul",    "conv1d",    "bias_add",      "avgpool1d",      "relu",
            "sigmoid",   "sin",       "softmax",       "sum",            "mean",
            "linear_resample", "gaussian_smooth", "bce_loss", "gather",  "stack",
            "straight_through_unit", "pad_time", "crop_time"};
        return ops;
    }

    static std::size_t reflect_index(std::ptrdiff_t i, std::size_t T) {
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(T);
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return static_cast<std::size_t>(i);
    }

    static std::vector<double> make_gaussian_kernel(double std_dev) {
        const auto radius = static_cast<std::size_t>(std::ceil(4.0 * std_dev));
        std::vector<double> k(2 * radius + 1);
        double sum = 0.0;
        for (std::size_t j = 0; j < k.size(); ++j) {
            const double d = static_cast<double>(j) - static_cast<double>(radius);
            k[j] = std::exp(-0.5 * d * d / (std_dev * std_dev));
            sum += k[j];
        }
        for (double& v : k) v /= sum;
        return k;
    }

private:
    NodeId push(Tensor out, std::vector<NodeId> inputs, const char* op,
                std::function<void(const Tape&, const Node&, const Tensor&,
                                   const std::vector<Tensor*>&)>
                    vjp) {
        nodes_.push_back(Node{std::move(out), std::move(inputs), std::move(vjp), op});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    void check_same(const char* op, NodeId a, NodeId b) const {
        require(value(a).same_shape(value(b)), std::string(op) + ": shape mismatch " +
                                                   shape_str(value(a).shape) + " vs " +
                                                   shape_str(value(b).shape));
    }

    static void conv1d_vjp(const Tape& t, const Node& nd, const Tensor& g,
                           const std::vector<Tensor*>& gr, std::size_t stride, std::size_t pad) {
        const Tensor& vx = t.value(nd.inputs[0]);
        const Tensor& vw = t.value(nd.inputs[1]);
        const std::size_t Cin = vx.shape[0], T = vx.shape[1];
        const std::size_t Cout = vw.shape[0], K = vw.shape[2];
        const std::size_t To = g.shape[1];
        const std::size_t Tp = T + 2 * pad;

        std::vector<double> xp;
        if (gr[1]) {
            xp.assign(Cin * Tp, 0.0);
            for (std::size_t c = 0; c < Cin; ++c)
                std::copy(vx.data.begin() + static_cast<std::ptrdiff_t>(c * T),
                          vx.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * T),
                          xp.begin() + static_cast<std::ptrdiff_t>(c * Tp + pad));
        }
        std::vector<double> gxp;
        if (gr[0]) gxp.assign(Cin * Tp, 0.0);

        for (std::size_t co = 0; co < Cout; ++co) {
            const double* grow = &g.data[co * To];
            for (std::size_t ci = 0; ci < Cin; ++ci) {
                for (std::size_t k = 0; k < K; ++k) {
                    if (gr[1]) {
                        const double* src = &xp[ci * Tp + k];
                        double acc = 0.0;
                        if (stride == 1)
                            for (std::size_t o = 0; o < To; ++o) acc += grow[o] * src[o];
                        else
                            for (std::size_t o = 0; o < To; ++o) acc += grow[o] * src[o * stride];
                        gr[1]->data[(co * Cin + ci) * K + k] += acc;
                    }
                    if (gr[0]) {
                        const double wv = vw.data[(co * Cin + ci) * K + k];
                        if (wv == 0.0) continue;
                        double* dst = &gxp[ci * Tp + k];
                        if (stride == 1)
                            for (std::size_t o = 0; o < To; ++o) dst[o] += wv * grow[o];
                        else
                            for (std::size_t o = 0; o < To; ++o) dst[o * stride] += wv * grow[o];
                    }
                }
            }
        }
        if (gr[0])
            for (std::size_t c = 0; c < Cin; ++c)
                for (std::size_t tt = 0; tt < T; ++tt)
                    gr[0]->data[c * T + tt] += gxp[c * Tp + pad + tt];
    }

    std::vector<Node> nodes_;
};

}  // namespace taskaug
