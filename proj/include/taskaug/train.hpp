// The training protocol: sample a batch, augment it, take an Adam step on the
// model; after every P inner steps take one RMSprop hypergradient step on the
// policy using a fresh un-augmented validation batch. Fixed baseline
// strategies transform batch values outside the tape and never receive outer
// steps. Everything is driven by one seed, so a run is reproducible from its
// configuration alone.
#pragma once

#include <charconv>
#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskaug/baselines.hpp"
#include "taskaug/data.hpp"
#include "taskaug/hypergrad.hpp"
#include "taskaug/metrics.hpp"
#include "taskaug/model.hpp"
#include "taskaug/optim.hpp"
#include "taskaug/policy.hpp"
#include "taskaug/signal.hpp"

namespace taskaug {

class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class AugStrategy { none, taskaug, timemask, specaug, dgw, smote };

inline const char* aug_strategy_name(AugStrategy s) {
    switch (s) {
        case AugStrategy::none: return "none";
        case AugStrategy::taskaug: return "taskaug";
        case AugStrategy::timemask: return "timemask";
        case AugStrategy::specaug: return "specaug";
        case AugStrategy::dgw: return "dgw";
        case AugStrategy::smote: return "smote";
    }
    return "?";
}

inline AugStrategy aug_strategy_from_name(const std::string& name) {
    for (AugStrategy s : {AugStrategy::none, AugStrategy::taskaug, AugStrategy::timemask,
                          AugStrategy::specaug, AugStrategy::dgw, AugStrategy::smote})
        if (name == aug_strategy_name(s)) return s;
    throw ContractViolation("unknown augmentation strategy '" + name + "'");
}

struct TrainConfig {
    int epochs = 30;
    int patience = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    AugStrategy strategy = AugStrategy::none;
    double mask_frac = 0.1;  // timemask / specaug window fraction
    std::size_t stages = 2;  // TaskAug K
    double temperature = 1.0;
    bool freeze_policy = false;
    bool global_magnitude = false;
    std::size_t smote_k = 5;
    HyperConfig hyper;
    ModelConfig model;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0, val_loss = 0.0, val_auroc = 0.0, val_auprc = 0.0;
};

struct StageSnapshot {
    std::vector<double> pi, mu0, mu1;
};

struct PolicySnapshot {
    long step = 0;
    std::vector<StageSnapshot> stages;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::vector<PolicySnapshot> trajectory;
    bool has_policy = false;
    PolicyParams final_policy;
    int best_epoch = -1;
    double best_val_loss = 0.0, best_val_auroc = 0.0, best_val_auprc = 0.0;
    double test_loss = 0.0, test_auroc = 0.0, test_auprc = 0.0;
    long outer_steps = 0;
    double wall_seconds = 0.0;
    ModelParams best_model;
};

namespace train_detail {

inline PolicySnapshot snapshot_policy(const PolicyParams& p, long step) {
    PolicySnapshot s;
    s.step = step;
    for (const StageParams& sp : p.stages)
        s.stages.push_back(StageSnapshot{softmax_values(sp.selection_logits), sp.mu0.data,
                                         sp.mu1.data});
    return s;
}

// Flat phi layout: stage 0 logits, mu0, mu1, stage 1 logits, ...
inline ParamVec policy_to_pv(const PolicyParams& p) {
    ParamVec out;
    for (const StageParams& sp : p.stages) {
        out.push_back(sp.selection_logits);
        out.push_back(sp.mu0);
        out.push_back(sp.mu1);
    }
    return out;
}

inline void pv_to_policy(const ParamVec& pv, PolicyParams& p) {
    for (std::size_t k = 0; k < p.stages.size(); ++k) {
        p.stages[k].selection_logits = pv[3 * k];
        p.stages[k].mu0 = pv[3 * k + 1];
        p.stages[k].mu1 = pv[3 * k + 2];
    }
}

// Logits always learn; strengths learn unless the operator opts out
// (time mask) or global-magnitude mode retires the mu1 copies.
inline ParamVec policy_freeze_mask(const PolicyParams& p) {
    ParamVec mask;
    for (std::size_t k = 0; k < p.stages.size(); ++k) {
        mask.push_back(Tensor::full({p.num_ops()}, 1.0));
        Tensor mu_mask = Tensor::zeros({p.num_ops()});
        for (std::size_t i = 0; i < p.num_ops(); ++i)
            mu_mask[i] = aug_op_strength_learnable(p.operators[i]) ? 1.0 : 0.0;
        mask.push_back(mu_mask);
        mask.push_back(p.global_magnitude ? Tensor::zeros({p.num_ops()}) : mu_mask);
    }
    return mask;
}

inline PolicyNodes phi_nodes_per_stage(const std::vector<NodeId>& flat) {
    PolicyNodes n;
    for (std::size_t k = 0; 3 * k + 2 < flat.size() + 1 && 3 * k < flat.size(); ++k) {
        n.logits.push_back(flat[3 * k]);
        n.mu0.push_back(flat[3 * k + 1]);
        n.mu1.push_back(flat[3 * k + 2]);
    }
    return n;
}

struct Batch {
    std::vector<const Record*> records;
    // pre-transformed inputs for the fixed baseline strategies; empty for
    // none/taskaug (which read the records directly)
    std::vector<Tensor> transformed;

    const Tensor input(std::size_t i) const {
        return transformed.empty() ? records[i]->signal.tensor() : transformed[i];
    }
};

// Builds the batch loss: per-example forward to a logit, sigmoid, mean BCE.
// For TaskAug each example is augmented on-tape with draws from
// draw_root.child(example index), so re-invocations see identical draws.
inline NodeId batch_loss(Tape& tape, const std::vector<NodeId>& theta,
                         const std::vector<NodeId>& phi, const Batch& batch,
                         const TrainConfig& cfg, const PolicyParams& policy,
                         const RngStream& draw_root, bool augment) {
    std::vector<NodeId> logits;
    Tensor targets = Tensor::zeros({batch.records.size()});
    for (std::size_t i = 0; i < batch.records.size(); ++i) {
        NodeId x = tape.input(batch.input(i));
        if (augment && cfg.strategy == AugStrategy::taskaug && !phi.empty()) {
            const PolicyNodes nodes = phi_nodes_per_stage(phi);
            x = apply_policy(tape, policy, nodes, x, batch.records[i]->label,
                             draw_root.child(i), batch.records[i]->signal.fs);
        }
        logits.push_back(model_forward(tape, theta, cfg.model, x));
        targets[i] = static_cast<double>(batch.records[i]->label);
    }
    return tape.bce_loss(tape.sigmoid(tape.stack(logits)), tape.input(std::move(targets)));
}

struct EvalOut {
    double loss = 0.0;
    std::vector<double> scores;
    std::vector<int> labels;
};

inline EvalOut evaluate_model(const ParamVec& theta, const ModelConfig& mcfg,
                              const LabeledDataset& ds, std::size_t chunk = 64) {
    EvalOut out;
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < ds.records.size(); at += chunk) {
        const std::size_t n = std::min(chunk, ds.records.size() - at);
        Tape tape;
        std::vector<NodeId> tn;
        for (const Tensor& t : theta) tn.push_back(tape.input(t));
        std::vector<NodeId> logits;
        Tensor targets = Tensor::zeros({n});
        for (std::size_t i = 0; i < n; ++i) {
            const Record& r = ds.records[at + i];
            logits.push_back(model_forward(tape, tn, mcfg, tape.input(r.signal.tensor())));
            targets[i] = static_cast<double>(r.label);
            out.labels.push_back(r.label);
        }
        NodeId probs = tape.sigmoid(tape.stack(logits));
        NodeId loss = tape.bce_loss(probs, tape.input(std::move(targets)));
        loss_sum += tape.value(loss).item() * static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) out.scores.push_back(tape.value(probs)[i]);
    }
    out.loss = loss_sum / static_cast<double>(ds.records.size());
    return out;
}

inline Batch make_batch(const LabeledDataset& ds, const std::vector<std::size_t>& order,
                        std::size_t from, std::size_t to, const TrainConfig& cfg,
                        const RngStream& aug_root) {
    Batch b;
    for (std::size_t k = from; k < to; ++k) b.records.push_back(&ds.records[order[k]]);
    if (cfg.strategy == AugStrategy::timemask || cfg.strategy == AugStrategy::specaug) {
        for (std::size_t i = 0; i < b.records.size(); ++i) {
            RngStream rs = aug_root.child(i);
            const Tensor x = b.records[i]->signal.tensor();
            b.transformed.push_back(cfg.strategy == AugStrategy::timemask
                                        ? time_mask_baseline(x, cfg.mask_frac, rs)
                                        : spec_augment(x, cfg.mask_frac, rs));
        }
    } else if (cfg.strategy == AugStrategy::dgw) {
        std::vector<DgwExample> pool;
        for (const Record* r : b.records) pool.push_back({r->signal.tensor(), r->label});
        // one reference per class present in the batch
        int ref_for_label[2] = {-1, -1};
        for (int y : {0, 1}) {
            bool has = false;
            for (const Record* r : b.records) has = has || r->label == y;
            if (has) ref_for_label[y] = static_cast<int>(dgw_select_reference(y, pool));
        }
        for (std::size_t i = 0; i < b.records.size(); ++i) {
            const int y = b.records[i]->label;
            b.transformed.push_back(
                dgw_warp_to(pool[i].signal, pool[static_cast<std::size_t>(ref_for_label[y])].signal));
        }
    }
    return b;
}

}  // namespace train_detail

inline TrainReport train_loop(const LabeledDataset& train_in, const LabeledDataset& val,
                              const LabeledDataset& test, TrainConfig cfg) {
    using namespace train_detail;
    require(!train_in.records.empty() && !val.records.empty(), "train_loop: empty split");
    require(cfg.batch_size >= 1, "train_loop: batch_size must be >= 1");

    RngStream root = RngStream::from_seed(cfg.seed);
    LabeledDataset train = train_in;
    if (cfg.strategy == AugStrategy::smote) train = smote(train_in, cfg.smote_k, root.child(6));

    cfg.model.leads = train.records[0].signal.leads;
    cfg.model.samples = train.records[0].signal.samples;

    ModelParams model = build_model(cfg.model, root.child(1));
    ParamVec theta = model.values;
    Adam inner_opt;
    inner_opt.lr = cfg.hyper.lr_inner;

    const bool use_policy = cfg.strategy == AugStrategy::taskaug;
    PolicyParams policy = init_policy(all_aug_ops(), use_policy ? cfg.stages : 0,
                                      cfg.temperature);
    policy.global_magnitude = cfg.global_magnitude;
    ParamVec phi = policy_to_pv(policy);
    const ParamVec phi_mask = policy_freeze_mask(policy);
    RmsProp outer_opt;
    outer_opt.lr = cfg.hyper.lr_outer;

    TrainReport report;
    report.has_policy = use_policy;
    if (use_policy) report.trajectory.push_back(snapshot_policy(policy, 0));

    EarlyStopper stopper(cfg.patience);
    long step = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RngStream shuffle_rng = root.child(2).child(static_cast<std::uint64_t>(epoch));
        const auto order = shuffle_rng.permutation(train.records.size());

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t from = 0; from < order.size(); from += cfg.batch_size) {
            const std::size_t to = std::min(from + cfg.batch_size, order.size());
            ++step;
            const RngStream aug_root = root.child(3).child(static_cast<std::uint64_t>(step));
            Batch batch = make_batch(train, order, from, to, cfg, aug_root);

            TrainLossFn loss_fn = [&batch, &cfg, &policy, aug_root](
                                      Tape& tape, const std::vector<NodeId>& th,
                                      const std::vector<NodeId>& ph) {
                return batch_loss(tape, th, ph, batch, cfg, policy, aug_root, true);
            };

            GradEval ev = eval_train_grads(loss_fn, theta, use_policy ? phi : ParamVec{},
                                           true, false);
            if (!std::isfinite(ev.loss) || !pv_all_finite(ev.wrt_theta))
                throw NonFiniteLossError(
                    "non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches) + " (global step " + std::to_string(step) + ")");
            loss_sum += ev.loss;
            ++batches;
            inner_opt.update(theta, ev.wrt_theta);

            if (use_policy && !cfg.freeze_policy &&
                step % cfg.hyper.inner_steps_per_outer == 0) {
                ++report.outer_steps;
                RngStream vb_rng =
                    root.child(4).child(static_cast<std::uint64_t>(report.outer_steps));
                const auto vperm = vb_rng.permutation(val.records.size());
                Batch vbatch;
                for (std::size_t k = 0; k < std::min(cfg.batch_size, vperm.size()); ++k)
                    vbatch.records.push_back(&val.records[vperm[k]]);

                ValLossFn val_fn = [&vbatch, &cfg, &policy, aug_root](
                                       Tape& tape, const std::vector<NodeId>& th) {
                    return batch_loss(tape, th, {}, vbatch, cfg, policy, aug_root, false);
                };

                ParamVec g = hypergradient(loss_fn, val_fn, theta, phi, cfg.hyper);
                pv_mask_inplace(g, phi_mask);
                outer_opt.update(phi, g);
                if (cfg.global_magnitude)
                    for (std::size_t k = 0; k < policy.stages.size(); ++k)
                        phi[3 * k + 2] = phi[3 * k + 1];
                pv_to_policy(phi, policy);
                report.trajectory.push_back(snapshot_policy(policy, report.outer_steps));
            } else if (use_policy && cfg.freeze_policy &&
                       step % cfg.hyper.inner_steps_per_outer == 0) {
                ++report.outer_steps;
                report.trajectory.push_back(snapshot_policy(policy, report.outer_steps));
            }
        }

        EvalOut vev = evaluate_model(theta, cfg.model, val);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        rec.val_loss = vev.loss;
        rec.val_auroc = auroc(vev.labels, vev.scores);
        rec.val_auprc = auprc(vev.labels, vev.scores);
        report.epochs.push_back(rec);

        const bool improved = rec.val_loss < stopper.best_loss();
        const bool stop = stopper.observe(epoch, rec.val_loss);
        if (improved) {
            report.best_epoch = epoch;
            report.best_val_loss = rec.val_loss;
            report.best_val_auroc = rec.val_auroc;
            report.best_val_auprc = rec.val_auprc;
            report.best_model = model;
            report.best_model.values = theta;
        }
        if (stop) break;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!test.records.empty()) {
        EvalOut tev = evaluate_model(report.best_model.values, cfg.model, test);
        report.test_loss = tev.loss;
        report.test_auroc = auroc(tev.labels, tev.scores);
        report.test_auprc = auprc(tev.labels, tev.scores);
    }
    report.final_policy = policy;
    return report;
}

// ---- report serialization -------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string metrics_csv(const TrainReport& r) {
    std::string out = "epoch,train_loss,val_loss,val_auroc,val_auprc\n";
    for (const EpochRecord& e : r.epochs) {
        out += std::to_string(e.epoch);
        out += ',';
        out += format_double(e.train_loss);
        out += ',';
        out += format_double(e.val_loss);
        out += ',';
        out += format_double(e.val_auroc);
        out += ',';
        out += format_double(e.val_auprc);
        out += '\n';
    }
    return out;
}

inline nlohmann::json trajectory_json(const TrainReport& r) {
    nlohmann::json ops = nlohmann::json::array();
    for (AugOp op : r.final_policy.operators) ops.push_back(aug_op_name(op));
    nlohmann::json snaps = nlohmann::json::array();
    for (const PolicySnapshot& s : r.trajectory) {
        nlohmann::json stages = nlohmann::json::array();
        for (const StageSnapshot& st : s.stages)
            stages.push_back({{"pi", st.pi}, {"mu0", st.mu0}, {"mu1", st.mu1}});
        snaps.push_back({{"step", s.step}, {"stages", stages}});
    }
    return nlohmann::json{{"operators", ops},
                          {"temperature", r.final_policy.temperature},
                          {"global_magnitude", r.final_policy.global_magnitude},
                          {"snapshots", snaps}};
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "cannot write " + path);
    f << content;
}

// ---- model checkpoints ------------------------------------------------------------

// <base>.json holds names/shapes/config, <base>.bin the 64-bit values.
inline void save_model(const ModelParams& m, const std::string& base_path) {
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < m.values.size(); ++i)
        tensors.push_back({{"name", m.names[i]}, {"shape", m.values[i].shape}});
    nlohmann::json header{{"format", "taskaug-model-v1"},
                          {"kernel", m.cfg.kernel},
                          {"stride", m.cfg.stride},
                          {"widths", m.cfg.widths},
                          {"leads", m.cfg.leads},
                          {"samples", m.cfg.samples},
                          {"tensors", tensors}};
    write_text_file(base_path + ".json", header.dump(2) + "\n");
    std::ofstream bf(base_path + ".bin", std::ios::binary);
    require(bf.good(), "save_model: cannot write " + base_path + ".bin");
    for (const Tensor& t : m.values)
        bf.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

inline ModelParams load_model(const std::string& base_path) {
    std::ifstream jf(base_path + ".json");
    require(jf.good(), "load_model: cannot open " + base_path + ".json");
    nlohmann::json header = nlohmann::json::parse(jf);
    ModelParams m;
    m.cfg.kernel = header.at("kernel").get<std::size_t>();
    m.cfg.stride = header.at("stride").get<std::size_t>();
    m.cfg.widths = header.at("widths").get<std::vector<std::size_t>>();
    m.cfg.leads = header.at("leads").get<std::size_t>();
    m.cfg.samples = header.at("samples").get<std::size_t>();

    std::ifstream bf(base_path + ".bin", std::ios::binary | std::ios::ate);
    require(bf.good(), "load_model: cannot open " + base_path + ".bin");
    const auto actual = static_cast<std::size_t>(bf.tellg());
    bf.seekg(0);
    std::size_t expected = 0;
    for (const auto& tj : header.at("tensors"))
        expected += shape_product(tj.at("shape").get<std::vector<std::size_t>>()) * sizeof(double);
    require(actual == expected, "load_model: corrupt payload: " + std::to_string(actual) +
                                    " bytes, expected " + std::to_string(expected));
    for (const auto& tj : header.at("tensors")) {
        m.names.push_back(tj.at("name").get<std::string>());
        Tensor t = Tensor::zeros(tj.at("shape").get<std::vector<std::size_t>>());
        bf.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        m.values.push_back(std::move(t));
    }
    return m;
}

}  // namespace taskaug
