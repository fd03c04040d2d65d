// Implicit-differentiation hypergradient: the gradient of the validation loss
// with respect to the policy parameters is
//   dL_V/dphi = -(dL_V/dtheta)^T [d^2L_T/dtheta dtheta^T]^-1 d^2L_T/dtheta dphi^T,
// with the inverse Hessian replaced by a truncated Neumann series. All
// second-order terms come from central finite differences of first-order
// gradients, so the tape stays first-order only. Both finite-difference
// evaluations of the training loss must see identical augmentation draws;
// loss builders capture their draws to guarantee that.
#pragma once

#include <functional>
#include <vector>

#include "taskaug/optim.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

struct HyperConfig {
    int inner_steps_per_outer = 1;   // the paper's P
    int neumann_terms = 1;           // J extra series terms; 0 keeps only alpha*v
    double lr_inner = 1e-3;          // Adam on theta; also the Neumann alpha
    double lr_outer = 1e-2;          // RMSprop on phi
    double fd_epsilon_scale = 1e-3;  // fd_epsilon = scale * (1 + |theta|_inf)

    double alpha() const { return lr_inner; }
    double fd_epsilon(const ParamVec& theta) const {
        return fd_epsilon_scale * (1.0 + pv_inf_norm(theta));
    }
};

// Builds the training loss for fixed data/draws from theta and phi leaves.
using TrainLossFn =
    std::function<NodeId(Tape&, const std::vector<NodeId>& theta, const std::vector<NodeId>& phi)>;
// Validation loss sees only theta (never augmented).
using ValLossFn = std::function<NodeId(Tape&, const std::vector<NodeId>& theta)>;

struct GradEval {
    double loss = 0.0;
    ParamVec wrt_theta;
    ParamVec wrt_phi;
};

inline GradEval eval_train_grads(const TrainLossFn& fn, const ParamVec& theta,
                                 const ParamVec& phi, bool want_theta, bool want_phi) {
    Tape tape;
    std::vector<NodeId> tn, pn;
    for (const Tensor& t : theta) tn.push_back(tape.input(t));
    for (const Tensor& t : phi) pn.push_back(tape.input(t));
    const NodeId loss = fn(tape, tn, pn);
    std::vector<NodeId> wrt;
    if (want_theta) wrt.insert(wrt.end(), tn.begin(), tn.end());
    if (want_phi) wrt.insert(wrt.end(), pn.begin(), pn.end());
    auto grads = tape.backward(loss, wrt);
    GradEval out;
    out.loss = tape.value(loss).item();
    auto it = grads.begin();
    if (want_theta) {
        out.wrt_theta.assign(std::make_move_iterator(it),
                             std::make_move_iterator(it + static_cast<long>(theta.size())));
        it += static_cast<long>(theta.size());
    }
    if (want_phi)
        out.wrt_phi.assign(std::make_move_iterator(it),
                           std::make_move_iterator(it + static_cast<long>(phi.size())));
    return out;
}

inline GradEval eval_val_grads(const ValLossFn& fn, const ParamVec& theta) {
    Tape tape;
    std::vector<NodeId> tn;
    for (const Tensor& t : theta) tn.push_back(tape.input(t));
    const NodeId loss = fn(tape, tn);
    GradEval out;
    out.loss = tape.value(loss).item();
    out.wrt_theta = tape.backward(loss, tn);
    return out;
}

// H*w at theta by central differences of the theta-gradient along w.
inline ParamVec hessian_vector_product(const TrainLossFn& fn, const ParamVec& theta,
                                       const ParamVec& phi, const ParamVec& w,
                                       double fd_epsilon) {
    const double wn = pv_norm2(w);
    if (wn == 0.0) return pv_zeros_like(theta);
    const double eps = fd_epsilon / wn;
    const ParamVec tp = pv_axpy(eps, w, theta);
    const ParamVec tm = pv_axpy(-eps, w, theta);
    const ParamVec gp = eval_train_grads(fn, tp, phi, true, false).wrt_theta;
    const ParamVec gm = eval_train_grads(fn, tm, phi, true, false).wrt_theta;
    ParamVec out = pv_axpy(-1.0, gm, gp);
    return pv_scale(1.0 / (2.0 * eps), out);
}

// alpha * sum_{j=0..J} (I - alpha*H)^j v, the truncated Neumann expansion of
// H^-1 v. J = 0 returns alpha*v exactly (no Hessian evaluations).
inline ParamVec neumann_inverse_hvp(const ParamVec& v, const TrainLossFn& fn,
                                    const ParamVec& theta, const ParamVec& phi, int terms,
                                    double alpha, double fd_epsilon) {
    require(terms >= 0, "neumann_inverse_hvp: terms must be >= 0");
    ParamVec p = v;
    ParamVec acc = v;
    for (int j = 0; j < terms; ++j) {
        const ParamVec hp = hessian_vector_product(fn, theta, phi, p, fd_epsilon);
        p = pv_axpy(-alpha, hp, p);
        acc = pv_axpy(1.0, p, acc);
    }
    return pv_scale(alpha, acc);
}

// p^T d^2L_T/dtheta dphi by central differences of the phi-gradient along p.
// The loss builder carries fixed augmentation draws, so both sides match.
inline ParamVec mixed_partial_vjp(const ParamVec& p, const TrainLossFn& fn,
                                  const ParamVec& theta, const ParamVec& phi,
                                  double fd_epsilon) {
    const double pn = pv_norm2(p);
    if (pn == 0.0) return pv_zeros_like(phi);
    const double eps = fd_epsilon / pn;
    const ParamVec tp = pv_axpy(eps, p, theta);
    const ParamVec tm = pv_axpy(-eps, p, theta);
    const ParamVec gp = eval_train_grads(fn, tp, phi, false, true).wrt_phi;
    const ParamVec gm = eval_train_grads(fn, tm, phi, false, true).wrt_phi;
    ParamVec out = pv_axpy(-1.0, gm, gp);
    return pv_scale(1.0 / (2.0 * eps), out);
}

struct HyperStepDiag {
    double val_loss = 0.0;
    double val_grad_norm = 0.0;
    double hypergrad_norm = 0.0;
};

// One outer step: hypergradient of the validation loss with respect to phi.
// The caller applies the optimizer (and any freeze mask).
inline ParamVec hypergradient(const TrainLossFn& train_fn, const ValLossFn& val_fn,
                              const ParamVec& theta, const ParamVec& phi,
                              const HyperConfig& cfg, HyperStepDiag* diag = nullptr) {
    GradEval val = eval_val_grads(val_fn, theta);
    const double eps = cfg.fd_epsilon(theta);
    const ParamVec q = neumann_inverse_hvp(val.wrt_theta, train_fn, theta, phi,
                                           cfg.neumann_terms, cfg.alpha(), eps);
    ParamVec g = mixed_partial_vjp(q, train_fn, theta, phi, eps);
    g = pv_scale(-1.0, g);
    if (diag) {
        diag->val_loss = val.loss;
        diag->val_grad_norm = pv_norm2(val.wrt_theta);
        diag->hypergrad_norm = pv_norm2(g);
    }
    return g;
}

}  // namespace taskaug
