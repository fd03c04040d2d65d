// Flat parameter-vector helpers plus the two optimizers the training loop
// uses: Adam for the model (inner) and RMSprop for the policy (outer).
#pragma once

#include <cmath>
#include <vector>

#include "taskaug/tensor.hpp"

namespace taskaug {

using ParamVec = std::vector<Tensor>;

inline ParamVec pv_zeros_like(const ParamVec& v) {
    ParamVec out;
    out.reserve(v.size());
    for (const Tensor& t : v) out.push_back(Tensor::zeros(t.shape));
    return out;
}

inline double pv_dot(const ParamVec& a, const ParamVec& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += dot(a[k], b[k]);
    return s;
}

inline double pv_norm2(const ParamVec& v) { return std::sqrt(pv_dot(v, v)); }

inline double pv_inf_norm(const ParamVec& v) {
    double m = 0.0;
    for (const Tensor& t : v) m = std::max(m, t.max_abs());
    return m;
}

// y + a*x
inline ParamVec pv_axpy(double a, const ParamVec& x, const ParamVec& y) {
    ParamVec out = y;
    for (std::size_t k = 0; k < x.size(); ++k)
        for (std::size_t i = 0; i < x[k].size(); ++i) out[k][i] += a * x[k][i];
    return out;
}

inline ParamVec pv_scale(double a, const ParamVec& x) {
    ParamVec out = x;
    for (Tensor& t : out)
        for (double& v : t.data) v *= a;
    return out;
}

inline void pv_mask_inplace(ParamVec& g, const ParamVec& mask) {
    for (std::size_t k = 0; k < g.size(); ++k)
        for (std::size_t i = 0; i < g[k].size(); ++i) g[k][i] *= mask[k][i];
}

inline bool pv_all_finite(const ParamVec& v) {
    for (const Tensor& t : v)
        if (!t.all_finite()) return false;
    return true;
}

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    ParamVec m, v;

    void update(ParamVec& theta, const ParamVec& grad) {
        if (m.empty()) {
            m = pv_zeros_like(theta);
            v = pv_zeros_like(theta);
        }
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t k = 0; k < theta.size(); ++k)
            for (std::size_t i = 0; i < theta[k].size(); ++i) {
                const double g = grad[k][i];
                m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * g;
                v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * g * g;
                const double mh = m[k][i] / bc1;
                const double vh = v[k][i] / bc2;
                theta[k][i] -= lr * mh / (std::sqrt(vh) + eps);
            }
    }
};

struct RmsProp {
    double lr = 1e-2;
    double alpha = 0.99;
    double eps = 1e-8;
    ParamVec sq;

    void update(ParamVec& phi, const ParamVec& grad) {
        if (sq.empty()) sq = pv_zeros_like(phi);
        for (std::size_t k = 0; k < phi.size(); ++k)
            for (std::size_t i = 0; i < phi[k].size(); ++i) {
                const double g = grad[k][i];
                sq[k][i] = alpha * sq[k][i] + (1.0 - alpha) * g * g;
                phi[k][i] -= lr * g / (std::sqrt(sq[k][i]) + eps);
            }
    }
};

}  // namespace taskaug
