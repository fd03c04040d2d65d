// Command-line entry point: dataset generation, training with any of the
// augmentation strategies, checkpoint evaluation, the finite-difference
// gradient suite, and learned-policy inspection. Every command that produces
// files writes its resolved configuration next to them, and a run is
// reproducible from that file alone.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage, 3 gradient-check failure.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "taskaug/data.hpp"
#include "taskaug/gradcheck.hpp"
#include "taskaug/metrics.hpp"
#include "taskaug/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace taskaug;

namespace {

struct RunConfig {
    std::string command;

    // dataset source: a saved dataset base path, a CSV, or a synthetic task
    std::string data_path;
    std::size_t csv_leads = 0;
    double csv_fs = 0.0;
    std::string synth_task;
    std::size_t synth_n = 512;
    double synth_prevalence = 0.2;
    std::uint64_t synth_seed = 1;
    std::size_t synth_leads = 3;
    std::size_t synth_samples = 256;
    double synth_fs = 100.0;
    double synth_noise = 0.02;

    // augmentation strategy
    std::string aug = "none";
    double mask_frac = 0.1;
    std::size_t smote_k = 5;

    // TaskAug policy and its optimization
    std::size_t stages = 2;
    double temperature = 1.0;
    bool freeze_policy = false;
    bool global_magnitude = false;
    int inner_steps = 1;  // P
    int neumann = 1;      // J
    double lr_inner = 1e-3;
    double lr_outer = 1e-2;
    double fd_eps = 1e-3;

    // model
    std::vector<std::size_t> widths = {16, 32};
    std::size_t kernel = 15;
    std::size_t stride = 2;

    // training protocol
    int epochs = 30;
    int patience = 10;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    int seeds = 1;
    std::string normalize = "none";
    double train_frac = 0.64;
    double val_frac = 0.16;
    double test_frac = 0.20;
    int jobs = 1;
    bool save_model = false;

    std::string out_dir;
};

json run_config_json(const RunConfig& c) {
    return json{{"command", c.command},
                {"data_path", c.data_path},
                {"csv_leads", c.csv_leads},
                {"csv_fs", c.csv_fs},
                {"synth_task", c.synth_task},
                {"synth_n", c.synth_n},
                {"synth_prevalence", c.synth_prevalence},
                {"synth_seed", c.synth_seed},
                {"synth_leads", c.synth_leads},
                {"synth_samples", c.synth_samples},
                {"synth_fs", c.synth_fs},
                {"synth_noise", c.synth_noise},
                {"aug", c.aug},
                {"mask_frac", c.mask_frac},
                {"smote_k", c.smote_k},
                {"stages", c.stages},
                {"temperature", c.temperature},
                {"freeze_policy", c.freeze_policy},
                {"global_magnitude", c.global_magnitude},
                {"inner_steps", c.inner_steps},
                {"neumann", c.neumann},
                {"lr_inner", c.lr_inner},
                {"lr_outer", c.lr_outer},
                {"fd_eps", c.fd_eps},
                {"widths", c.widths},
                {"kernel", c.kernel},
                {"stride", c.stride},
                {"epochs", c.epochs},
                {"patience", c.patience},
                {"batch", c.batch},
                {"seed", c.seed},
                {"seeds", c.seeds},
                {"normalize", c.normalize},
                {"train_frac", c.train_frac},
                {"val_frac", c.val_frac},
                {"test_frac", c.test_frac},
                {"jobs", c.jobs},
                {"save_model", c.save_model},
                {"out_dir", c.out_dir}};
}

void run_config_from_json(const json& j, RunConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("data_path", c.data_path);
    get("csv_leads", c.csv_leads);
    get("csv_fs", c.csv_fs);
    get("synth_task", c.synth_task);
    get("synth_n", c.synth_n);
    get("synth_prevalence", c.synth_prevalence);
    get("synth_seed", c.synth_seed);
    get("synth_leads", c.synth_leads);
    get("synth_samples", c.synth_samples);
    get("synth_fs", c.synth_fs);
    get("synth_noise", c.synth_noise);
    get("aug", c.aug);
    get("mask_frac", c.mask_frac);
    get("smote_k", c.smote_k);
    get("stages", c.stages);
    get("temperature", c.temperature);
    get("freeze_policy", c.freeze_policy);
    get("global_magnitude", c.global_magnitude);
    get("inner_steps", c.inner_steps);
    get("neumann", c.neumann);
    get("lr_inner", c.lr_inner);
    get("lr_outer", c.lr_outer);
    get("fd_eps", c.fd_eps);
    get("widths", c.widths);
    get("kernel", c.kernel);
    get("stride", c.stride);
    get("epochs", c.epochs);
    get("patience", c.patience);
    get("batch", c.batch);
    get("seed", c.seed);
    get("seeds", c.seeds);
    get("normalize", c.normalize);
    get("train_frac", c.train_frac);
    get("val_frac", c.val_frac);
    get("test_frac", c.test_frac);
    get("jobs", c.jobs);
    get("save_model", c.save_model);
    get("out_dir", c.out_dir);
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream f(path);
    require(f.good(), "cannot write " + path.string());
    f << j.dump(2) << "\n";
}

LabeledDataset resolve_dataset(const RunConfig& c) {
    if (!c.synth_task.empty()) {
        SynthTaskConfig cfg;
        cfg.task = synth_task_from_name(c.synth_task);
        cfg.leads = c.synth_leads;
        cfg.samples = c.synth_samples;
        cfg.fs = c.synth_fs;
        cfg.prevalence = c.synth_prevalence;
        cfg.noise_floor = c.synth_noise;
        cfg.seed = c.synth_seed;
        return generate_synthetic(cfg, c.synth_n);
    }
    require(!c.data_path.empty(), "no dataset: pass --data or --synth-task");
    if (c.data_path.size() > 4 && c.data_path.substr(c.data_path.size() - 4) == ".csv") {
        require(c.csv_leads >= 1 && c.csv_fs > 0.0,
                "CSV import needs --csv-leads and --csv-fs");
        return load_dataset_csv(c.data_path, c.csv_leads, c.csv_fs);
    }
    return load_dataset(c.data_path);
}

TrainConfig make_train_config(const RunConfig& c, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = c.epochs;
    tc.patience = c.patience;
    tc.batch_size = c.batch;
    tc.seed = seed;
    tc.strategy = aug_strategy_from_name(c.aug);
    tc.mask_frac = c.mask_frac;
    tc.stages = c.stages;
    tc.temperature = c.temperature;
    tc.freeze_policy = c.freeze_policy;
    tc.global_magnitude = c.global_magnitude;
    tc.smote_k = c.smote_k;
    tc.hyper.inner_steps_per_outer = c.inner_steps;
    tc.hyper.neumann_terms = c.neumann;
    tc.hyper.lr_inner = c.lr_inner;
    tc.hyper.lr_outer = c.lr_outer;
    tc.hyper.fd_epsilon_scale = c.fd_eps;
    tc.model.kernel = c.kernel;
    tc.model.stride = c.stride;
    tc.model.widths = c.widths;
    return tc;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double val_auroc = 0.0, val_auprc = 0.0;
    double test_auroc = 0.0, test_auprc = 0.0;
    double wall_seconds = 0.0;
};

// One full run for one seed: split, normalize, train, write artifacts.
SeedOutcome run_one_seed(const RunConfig& c, const LabeledDataset& ds, std::uint64_t seed) {
    SeedOutcome out;
    out.seed = seed;
    try {
        SplitResult sp =
            split(ds, SplitRatios{c.train_frac, c.val_frac, c.test_frac}, seed);
        const NormMode mode = norm_mode_from_name(c.normalize);
        if (mode == NormMode::zscore_per_lead) {
            NormStats st = compute_norm_stats(sp.train);
            apply_normalize(sp.train, mode, &st);
            apply_normalize(sp.val, mode, &st);
            apply_normalize(sp.test, mode, &st);
        } else {
            apply_normalize(sp.train, mode);
            apply_normalize(sp.val, mode);
            apply_normalize(sp.test, mode);
        }

        TrainReport report = train_loop(sp.train, sp.val, sp.test, make_train_config(c, seed));

        const fs::path seed_dir = fs::path(c.out_dir) / ("seed" + std::to_string(seed));
        fs::create_directories(seed_dir);
        write_text_file((seed_dir / "metrics.csv").string(), metrics_csv(report));
        if (report.has_policy)
            write_text_file((seed_dir / "trajectory.json").string(),
                            trajectory_json(report).dump(2) + "\n");
        if (c.save_model) save_model(report.best_model, (seed_dir / "model").string());
        write_json_file(seed_dir / "summary.json",
                        json{{"seed", seed},
                             {"best_epoch", report.best_epoch},
                             {"best_val_loss", report.best_val_loss},
                             {"val_auroc", report.best_val_auroc},
                             {"val_auprc", report.best_val_auprc},
                             {"test_loss", report.test_loss},
                             {"test_auroc", report.test_auroc},
                             {"test_auprc", report.test_auprc},
                             {"outer_steps", report.outer_steps},
                             {"epochs_ran", report.epochs.size()},
                             {"wall_seconds", report.wall_seconds}});

        out.ok = true;
        out.val_auroc = report.best_val_auroc;
        out.val_auprc = report.best_val_auprc;
        out.test_auroc = report.test_auroc;
        out.test_auprc = report.test_auprc;
        out.wall_seconds = report.wall_seconds;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

json mean_stderr(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double stderr_v =
        v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) /
                           std::sqrt(static_cast<double>(v.size()))
                     : 0.0;
    return json{{"per_seed", v}, {"mean", mean}, {"stderr", stderr_v}};
}

int cmd_gen_data(const RunConfig& c) {
    SynthTaskConfig cfg;
    cfg.task = synth_task_from_name(c.synth_task);
    cfg.leads = c.synth_leads;
    cfg.samples = c.synth_samples;
    cfg.fs = c.synth_fs;
    cfg.prevalence = c.synth_prevalence;
    cfg.noise_floor = c.synth_noise;
    cfg.seed = c.synth_seed;
    LabeledDataset ds = generate_synthetic(cfg, c.synth_n);
    if (fs::path(c.out_dir).has_parent_path())
        fs::create_directories(fs::path(c.out_dir).parent_path());
    save_dataset(ds, c.out_dir);
    write_json_file(c.out_dir + ".config.json", run_config_json(c));
    std::cout << json{{"task", ds.task},
                      {"n", ds.records.size()},
                      {"leads", cfg.leads},
                      {"samples", cfg.samples},
                      {"fs", cfg.fs},
                      {"prevalence", ds.prevalence()},
                      {"positives", ds.positives()},
                      {"path", c.out_dir}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_train(const RunConfig& c) {
    const LabeledDataset ds = resolve_dataset(c);
    fs::create_directories(c.out_dir);
    write_json_file(fs::path(c.out_dir) / "config.json", run_config_json(c));

    std::vector<std::uint64_t> seed_list;
    for (int s = 0; s < c.seeds; ++s) seed_list.push_back(c.seed + static_cast<std::uint64_t>(s));

    std::vector<SeedOutcome> outcomes(seed_list.size());
    if (c.jobs <= 1) {
        for (std::size_t i = 0; i < seed_list.size(); ++i)
            outcomes[i] = run_one_seed(c, ds, seed_list[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const int workers = std::min<int>(c.jobs, static_cast<int>(seed_list.size()));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < seed_list.size();
                     i = next.fetch_add(1))
                    outcomes[i] = run_one_seed(c, ds, seed_list[i]);
            });
        for (auto& t : pool) t.join();
    }

    bool complete = true;
    std::vector<double> val_auroc, val_auprc, test_auroc, test_auprc, wall;
    for (const SeedOutcome& o : outcomes) {
        if (!o.ok) {
            complete = false;
            std::cerr << "seed " << o.seed << " failed: " << o.error << "\n";
            continue;
        }
        val_auroc.push_back(o.val_auroc);
        val_auprc.push_back(o.val_auprc);
        test_auroc.push_back(o.test_auroc);
        test_auprc.push_back(o.test_auprc);
        wall.push_back(o.wall_seconds);
    }

    json agg{{"complete", complete},
             {"n", val_auroc.size()},
             {"strategy", c.aug},
             {"seeds", seed_list}};
    if (!val_auroc.empty()) {
        agg["val_auroc"] = mean_stderr(val_auroc);
        agg["val_auprc"] = mean_stderr(val_auprc);
        agg["test_auroc"] = mean_stderr(test_auroc);
        agg["test_auprc"] = mean_stderr(test_auprc);
        agg["wall_seconds"] = mean_stderr(wall);
    }
    write_json_file(fs::path(c.out_dir) / "aggregate.json", agg);
    std::cout << agg.dump() << "\n";
    return complete ? 0 : 1;
}

int cmd_eval(const RunConfig& c, const std::string& model_base) {
    const LabeledDataset ds = resolve_dataset(c);
    ModelParams m = load_model(model_base);
    train_detail::EvalOut ev = train_detail::evaluate_model(m.values, m.cfg, ds);
    json out{{"n", ds.records.size()},
             {"loss", ev.loss},
             {"auroc", auroc(ev.labels, ev.scores)},
             {"auprc", auprc(ev.labels, ev.scores)}};
    if (!c.out_dir.empty()) {
        fs::create_directories(c.out_dir);
        write_json_file(fs::path(c.out_dir) / "eval.json", out);
        write_json_file(fs::path(c.out_dir) / "config.json", run_config_json(c));
    }
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_gradcheck(int seeds, double tolerance, const std::string& out_path) {
    const auto results = run_gradient_suite(seeds, tolerance);
    std::string csv = "check,rel_err,tolerance,pass\n";
    for (const CheckResult& r : results) {
        csv += r.name;
        csv += ',';
        csv += format_double(r.rel_err);
        csv += ',';
        csv += format_double(r.tolerance);
        csv += ',';
        csv += r.pass ? "1" : "0";
        csv += '\n';
    }
    if (fs::path(out_path).has_parent_path())
        fs::create_directories(fs::path(out_path).parent_path());
    write_text_file(out_path, csv);
    std::size_t failed = 0;
    for (const CheckResult& r : results) {
        if (!r.pass) ++failed;
        std::cout << (r.pass ? "pass" : "FAIL") << "  " << r.name
                  << "  rel_err=" << format_double(r.rel_err)
                  << "  tol=" << format_double(r.tolerance) << "\n";
    }
    std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
    return failed == 0 ? 0 : 3;
}

int cmd_inspect_policy(const std::vector<std::string>& files, const std::string& out_dir) {
    require(!files.empty(), "inspect-policy: pass at least one trajectory JSON");
    std::vector<json> finals;
    std::vector<std::string> operators;
    for (const std::string& f : files) {
        std::ifstream in(f);
        require(in.good(), "inspect-policy: cannot open " + f);
        json traj = json::parse(in);
        require(traj.contains("snapshots") && !traj.at("snapshots").empty(),
                "inspect-policy: " + f + " has no snapshots");
        finals.push_back(traj.at("snapshots").back());
        if (operators.empty())
            for (const auto& op : traj.at("operators")) operators.push_back(op);
    }
    const std::size_t stages = finals[0].at("stages").size();
    const std::size_t M = operators.size();

    auto collect = [&](const char* field, std::size_t stage, std::size_t op) {
        std::vector<double> v;
        for (const json& f : finals)
            v.push_back(f.at("stages").at(stage).at(field).at(op).get<double>());
        return v;
    };
    auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double se = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) /
                                             std::sqrt(static_cast<double>(v.size()))
                                       : 0.0;
        return std::make_pair(mean, se);
    };

    std::string probs = "stage,operator,pi_mean,pi_stderr\n";
    std::string strengths = "stage,operator,mu0_mean,mu0_stderr,mu1_mean,mu1_stderr\n";
    for (std::size_t k = 0; k < stages; ++k)
        for (std::size_t i = 0; i < M; ++i) {
            const auto [pm, ps] = stats(collect("pi", k, i));
            probs += std::to_string(k + 1) + "," + operators[i] + "," + format_double(pm) +
                     "," + format_double(ps) + "\n";
            const auto [m0, s0] = stats(collect("mu0", k, i));
            const auto [m1, s1] = stats(collect("mu1", k, i));
            strengths += std::to_string(k + 1) + "," + operators[i] + "," + format_double(m0) +
                         "," + format_double(s0) + "," + format_double(m1) + "," +
                         format_double(s1) + "\n";
        }

    std::cout << probs << "\n" << strengths;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file((fs::path(out_dir) / "policy_probs.csv").string(), probs);
        write_text_file((fs::path(out_dir) / "policy_strengths.csv").string(), strengths);
        json cfg{{"command", "inspect-policy"}, {"inputs", files}, {"out_dir", out_dir}};
        write_json_file(fs::path(out_dir) / "config.json", cfg);
    }
    return 0;
}

std::string find_config_arg(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig rc;
    const std::string config_path = find_config_arg(argc, argv);
    if (!config_path.empty()) {
        try {
            std::ifstream f(config_path);
            require(f.good(), "cannot open config file " + config_path);
            run_config_from_json(json::parse(f), rc);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }

    CLI::App app{"Learnable per-task augmentation policies for multichannel 1D signals"};
    app.require_subcommand(1);
    std::string config_dummy;

    auto add_config_opt = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_dummy,
                        "JSON config file; explicit flags override its values");
    };

    auto add_data_opts = [&](CLI::App* cmd) {
        cmd->add_option("--data", rc.data_path, "dataset base path (.json/.bin pair) or .csv");
        cmd->add_option("--csv-leads", rc.csv_leads, "lead count for CSV import");
        cmd->add_option("--csv-fs", rc.csv_fs, "sampling rate for CSV import");
        cmd->add_option("--synth-task", rc.synth_task,
                        "generate data: rr_irregularity | amplitude_ratio | st_offset");
        cmd->add_option("--n", rc.synth_n, "synthetic record count");
        cmd->add_option("--prevalence", rc.synth_prevalence, "synthetic positive fraction");
        cmd->add_option("--data-seed", rc.synth_seed, "synthetic generator seed");
        cmd->add_option("--leads", rc.synth_leads, "synthetic lead count");
        cmd->add_option("--samples", rc.synth_samples, "synthetic samples per lead");
        cmd->add_option("--fs", rc.synth_fs, "synthetic sampling rate (Hz)");
        cmd->add_option("--noise-floor", rc.synth_noise, "synthetic noise floor");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--task", rc.synth_task, "rr_irregularity | amplitude_ratio | st_offset")
        ->required();
    gen->add_option("--n", rc.synth_n, "record count");
    gen->add_option("--prevalence", rc.synth_prevalence, "positive fraction");
    gen->add_option("--seed", rc.synth_seed, "generator seed");
    gen->add_option("--leads", rc.synth_leads, "lead count");
    gen->add_option("--samples", rc.synth_samples, "samples per lead");
    gen->add_option("--fs", rc.synth_fs, "sampling rate (Hz)");
    gen->add_option("--noise-floor", rc.synth_noise, "noise floor");
    gen->add_option("--out", rc.out_dir, "output base path")->required();
    add_config_opt(gen);

    CLI::App* train = app.add_subcommand("train", "train a classifier with augmentation");
    add_config_opt(train);
    add_data_opts(train);
    train->add_option("--aug", rc.aug, "none | taskaug | timemask | specaug | dgw | smote");
    train->add_option("--mask-frac", rc.mask_frac, "mask fraction w for timemask/specaug");
    train->add_option("--smote-k", rc.smote_k, "SMOTE neighbor count");
    train->add_option("--stages", rc.stages, "TaskAug stage count K");
    train->add_option("--temperature", rc.temperature, "Gumbel-Softmax temperature");
    train->add_flag("--freeze-policy", rc.freeze_policy,
                    "keep policy parameters at their initial values");
    train->add_flag("--global-magnitude", rc.global_magnitude,
                    "share one strength between the classes");
    train->add_option("--inner-steps", rc.inner_steps, "inner steps per outer step (P)");
    train->add_option("--neumann", rc.neumann, "Neumann series terms (J)");
    train->add_option("--lr-inner", rc.lr_inner, "Adam learning rate for the model");
    train->add_option("--lr-outer", rc.lr_outer, "RMSprop learning rate for the policy");
    train->add_option("--fd-eps", rc.fd_eps, "finite-difference epsilon scale");
    train->add_option("--widths", rc.widths, "residual block widths")->delimiter(',');
    train->add_option("--kernel", rc.kernel, "convolution kernel size");
    train->add_option("--stride", rc.stride, "convolution stride");
    train->add_option("--epochs", rc.epochs, "epoch budget");
    train->add_option("--patience", rc.patience, "early-stopping patience");
    train->add_option("--batch-size", rc.batch, "batch size");
    train->add_option("--seed", rc.seed, "base run seed");
    train->add_option("--seeds", rc.seeds, "number of seeds (seed..seed+n-1)");
    train->add_option("--normalize", rc.normalize, "none | zscore | div1000");
    train->add_option("--train-frac", rc.train_frac, "train fraction");
    train->add_option("--val-frac", rc.val_frac, "validation fraction");
    train->add_option("--test-frac", rc.test_frac, "test fraction");
    train->add_option("--jobs", rc.jobs, "parallel seed workers");
    train->add_flag("--save-model", rc.save_model, "write best-model checkpoints");
    train->add_option("--out", rc.out_dir, "output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_config_opt(eval);
    add_data_opts(eval);
    std::string model_base;
    eval->add_option("--model", model_base, "checkpoint base path")->required();
    eval->add_option("--out", rc.out_dir, "optional output directory");

    CLI::App* gc = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    int gc_seeds = 20;
    double gc_tol = -1.0;
    std::string gc_out = "gradcheck.csv";
    gc->add_option("--seeds", gc_seeds, "random seeds per check");
    gc->add_option("--tolerance", gc_tol, "override every check's tolerance");
    gc->add_option("--out", gc_out, "per-check CSV path");

    CLI::App* inspect = app.add_subcommand("inspect-policy", "summarize learned policies");
    std::vector<std::string> traj_files;
    inspect->add_option("trajectories", traj_files, "trajectory JSON files")->required();
    inspect->add_option("--out", rc.out_dir, "optional output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    // flag-value validation: failures here are usage errors
    try {
        if (gen->parsed()) synth_task_from_name(rc.synth_task);
        if (train->parsed()) {
            aug_strategy_from_name(rc.aug);
            norm_mode_from_name(rc.normalize);
            if (!rc.synth_task.empty()) synth_task_from_name(rc.synth_task);
            require(rc.seeds >= 1, "--seeds must be >= 1");
            require(rc.inner_steps >= 1, "--inner-steps must be >= 1");
            require(rc.neumann >= 0, "--neumann must be >= 0");
            require(rc.temperature > 0.0, "--temperature must be > 0");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            rc.command = "gen-data";
            return cmd_gen_data(rc);
        }
        if (train->parsed()) {
            rc.command = "train";
            return cmd_train(rc);
        }
        if (eval->parsed()) {
            rc.command = "eval";
            return cmd_eval(rc, model_base);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_seeds, gc_tol, gc_out);
        if (inspect->parsed()) return cmd_inspect_policy(traj_files, rc.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
