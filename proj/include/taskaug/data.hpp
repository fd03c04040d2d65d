// Synthetic ECG-like benchmark tasks, patient-level splitting, normalization,
// and dataset file I/O (JSON header + little-endian float32 payload).
//
// The three tasks encode their labels through distinct signal features:
//   rr_irregularity - positives have 5x the beat-interval jitter
//   amplitude_ratio - positives have 1.5x R-wave amplitude on the first half
//                     of the leads
//   st_offset       - positives carry a constant offset between QRS and T
// With these, which operators are label-preserving is known by construction
// (temporal warping, for instance, breaks rr_irregularity negatives).
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskaug/rng.hpp"
#include "taskaug/signal.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

enum class SynthTask { rr_irregularity, amplitude_ratio, st_offset };

inline const char* synth_task_name(SynthTask t) {
    switch (t) {
        case SynthTask::rr_irregularity: return "rr_irregularity";
        case SynthTask::amplitude_ratio: return "amplitude_ratio";
        case SynthTask::st_offset: return "st_offset";
    }
    return "?";
}

inline SynthTask synth_task_from_name(const std::string& name) {
    for (SynthTask t : {SynthTask::rr_irregularity, SynthTask::amplitude_ratio,
                        SynthTask::st_offset})
        if (name == synth_task_name(t)) return t;
    throw ContractViolation("unknown synthetic task '" + name + "'");
}

struct SynthTaskConfig {
    SynthTask task = SynthTask::rr_irregularity;
    std::size_t leads = 3;
    std::size_t samples = 256;
    double fs = 100.0;
    double prevalence = 0.2;
    double noise_floor = 0.05;
    std::uint64_t seed = 0;
};

namespace data_detail {

inline void add_bump(std::vector<double>& wave, double fs, double center_sec, double amp,
                     double width_sec) {
    const double T = static_cast<double>(wave.size());
    const std::ptrdiff_t lo =
        std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>((center_sec - 4 * width_sec) * fs));
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(T), static_cast<std::ptrdiff_t>((center_sec + 4 * width_sec) * fs) + 1);
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
        const double dt = static_cast<double>(t) / fs - center_sec;
        wave[static_cast<std::size_t>(t)] += amp * std::exp(-0.5 * dt * dt / (width_sec * width_sec));
    }
}

inline void add_plateau(std::vector<double>& wave, double fs, double from_sec, double to_sec,
                        double amp) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(from_sec * fs));
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wave.size()),
                                                       static_cast<std::ptrdiff_t>(to_sec * fs));
    for (std::ptrdiff_t t = lo; t < hi; ++t) wave[static_cast<std::size_t>(t)] += amp;
}

}  // namespace data_detail

// One record per synthetic patient, deterministic in (cfg, n); label counts
// follow the prevalence exactly (rounded to the nearest record).
inline LabeledDataset generate_synthetic(const SynthTaskConfig& cfg, std::size_t n) {
    require(n >= 10, "generate_synthetic: need n >= 10, got " + std::to_string(n));
    require(cfg.prevalence > 0.0 && cfg.prevalence < 1.0,
            "generate_synthetic: prevalence must lie in (0, 1)");
    require(cfg.leads >= 1 && cfg.samples >= 64 && cfg.fs > 0.0,
            "generate_synthetic: bad signal geometry");

    RngStream root = RngStream::from_seed(cfg.seed);
    const std::size_t n_pos =
        static_cast<std::size_t>(std::llround(cfg.prevalence * static_cast<double>(n)));
    require(n_pos >= 1 && n_pos < n, "generate_synthetic: prevalence rounds to a single class");

    std::vector<int> labels(n, 0);
    {
        RngStream lr = root.child(0);
        const auto perm = lr.permutation(n);
        for (std::size_t i = 0; i < n_pos; ++i) labels[perm[i]] = 1;
    }

    LabeledDataset ds;
    ds.task = synth_task_name(cfg.task);
    ds.records.reserve(n);
    const double duration = static_cast<double>(cfg.samples) / cfg.fs;

    for (std::size_t p = 0; p < n; ++p) {
        RngStream rng = root.child(p + 1);
        const int y = labels[p];
        // wide per-patient rate spread: irregularity, not average rate, is
        // what separates the classes
        const double rr_base = 0.5 * (0.8 + 0.4 * rng.uniform());
        const double jitter =
            (cfg.task == SynthTask::rr_irregularity && y == 1) ? 0.15 : 0.03;
        const double r_gain =
            (cfg.task == SynthTask::amplitude_ratio && y == 1) ? 1.5 : 1.0;
        const bool st_shift = cfg.task == SynthTask::st_offset && y == 1;

        std::vector<double> beats;
        double t = rng.uniform() * rr_base;
        while (t < duration + 0.3) {
            beats.push_back(t);
            t += rr_base * std::max(0.2, 1.0 + jitter * rng.normal());
        }

        Signal sig;
        sig.leads = cfg.leads;
        sig.samples = cfg.samples;
        sig.fs = cfg.fs;
        sig.values.assign(cfg.leads * cfg.samples, 0.0);

        std::vector<double> lead_gain(cfg.leads);
        for (std::size_t c = 0; c < cfg.leads; ++c)
            lead_gain[c] = (0.5 + 0.5 * std::pow(0.85, static_cast<double>(c))) *
                           (0.95 + 0.1 * rng.uniform());

        std::vector<double> wave(cfg.samples);
        for (std::size_t c = 0; c < cfg.leads; ++c) {
            std::fill(wave.begin(), wave.end(), 0.0);
            const double g = lead_gain[c];
            // amplitude_ratio marks the first half of the leads
            const double rg = c < (cfg.leads + 1) / 2 ? r_gain : 1.0;
            for (double b : beats) {
                data_detail::add_bump(wave, cfg.fs, b - 0.16, 0.12 * g, 0.020);  // P
                data_detail::add_bump(wave, cfg.fs, b - 0.025, -0.10 * g, 0.008);  // Q
                data_detail::add_bump(wave, cfg.fs, b, 1.00 * g * rg, 0.012);      // R
                data_detail::add_bump(wave, cfg.fs, b + 0.030, -0.12 * g, 0.010);  // S
                data_detail::add_bump(wave, cfg.fs, b + 0.220, 0.30 * g, 0.050);   // T
                if (st_shift) data_detail::add_plateau(wave, cfg.fs, b + 0.05, b + 0.17, 0.15 * g);
            }
            for (std::size_t i = 0; i < cfg.samples; ++i) {
                const double v = wave[i] + cfg.noise_floor * rng.normal();
                // round through float so file round trips are bit exact
                sig.values[c * cfg.samples + i] = static_cast<double>(static_cast<float>(v));
            }
        }

        std::ostringstream pid;
        pid << "p" << std::setw(5) << std::setfill('0') << p;
        ds.records.push_back(Record{std::move(sig), y, pid.str(), false});
    }
    return ds;
}

// ---- patient-level splitting -------------------------------------------------

struct SplitRatios {
    double train = 0.64;
    double val = 0.16;
    double test = 0.20;
};

struct SplitResult {
    LabeledDataset train, val, test;
};

// Splits by unique patient id (a patient's records never straddle splits),
// shuffled by the seed; stratification balances prevalence across splits to
// within one patient per class.
inline SplitResult split(const LabeledDataset& ds, SplitRatios ratios, std::uint64_t seed,
                         bool stratified = true) {
    const double sum = ratios.train + ratios.val + ratios.test;
    require(std::fabs(sum - 1.0) < 1e-9, "split: ratios must sum to 1");

    std::vector<std::string> patient_order;
    std::vector<std::vector<std::size_t>> patient_records;
    std::vector<int> patient_label;
    {
        std::vector<std::pair<std::string, std::size_t>> seen;
        for (std::size_t i = 0; i < ds.records.size(); ++i) {
            const std::string& pid = ds.records[i].patient_id;
            require(!pid.empty(), "split: empty patient id");
            std::size_t idx = patient_order.size();
            for (const auto& [name, at] : seen)
                if (name == pid) {
                    idx = at;
                    break;
                }
            if (idx == patient_order.size()) {
                seen.emplace_back(pid, idx);
                patient_order.push_back(pid);
                patient_records.emplace_back();
                patient_label.push_back(ds.records[i].label);
            }
            patient_records[idx].push_back(i);
        }
    }
    const std::size_t P = patient_order.size();
    require(P >= 3, "split: need at least 3 patients, got " + std::to_string(P));

    RngStream rng = RngStream::from_seed(seed);
    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        groups.assign(2, {});
        for (std::size_t p = 0; p < P; ++p) groups[static_cast<std::size_t>(patient_label[p])].push_back(p);
        if (groups[1].empty() || groups[0].empty()) {
            groups.resize(1);
            groups[0].clear();
            for (std::size_t p = 0; p < P; ++p) groups[0].push_back(p);
        }
    } else {
        groups.assign(1, {});
        for (std::size_t p = 0; p < P; ++p) groups[0].push_back(p);
    }

    SplitResult out;
    out.train.task = out.val.task = out.test.task = ds.task;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        auto& g = groups[gi];
        RngStream gr = rng.child(gi);
        const auto perm = gr.permutation(g.size());
        const std::size_t nc = g.size();
        const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(nc)));
        const auto n_trainval = static_cast<std::size_t>(
            std::llround((ratios.train + ratios.val) * static_cast<double>(nc)));
        for (std::size_t k = 0; k < nc; ++k) {
            const std::size_t p = g[perm[k]];
            LabeledDataset& dst = k < n_train ? out.train : (k < n_trainval ? out.val : out.test);
            for (std::size_t ri : patient_records[p]) dst.records.push_back(ds.records[ri]);
        }
    }
    require(!out.train.records.empty() && !out.val.records.empty() && !out.test.records.empty(),
            "split: a split came out empty; use more patients or different ratios");
    return out;
}

// ---- normalization -------------------------------------------------------------

enum class NormMode { none, divide_by_1000, zscore_per_lead };

inline NormMode norm_mode_from_name(const std::string& name) {
    if (name == "none") return NormMode::none;
    if (name == "div1000" || name == "divide_by_1000") return NormMode::divide_by_1000;
    if (name == "zscore" || name == "zscore_per_lead") return NormMode::zscore_per_lead;
    throw ContractViolation("unknown normalization mode '" + name + "'");
}

struct NormStats {
    std::vector<double> mean, std;
};

inline NormStats compute_norm_stats(const LabeledDataset& train) {
    require(!train.records.empty(), "normalize: empty training split");
    const std::size_t C = train.records[0].signal.leads;
    NormStats st;
    st.mean.assign(C, 0.0);
    st.std.assign(C, 0.0);
    std::vector<double> count(C, 0.0);
    for (const Record& r : train.records)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < r.signal.samples; ++t) {
                st.mean[c] += r.signal.at(c, t);
                count[c] += 1.0;
            }
    for (std::size_t c = 0; c < C; ++c) st.mean[c] /= count[c];
    for (const Record& r : train.records)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < r.signal.samples; ++t) {
                const double d = r.signal.at(c, t) - st.mean[c];
                st.std[c] += d * d;
            }
    for (std::size_t c = 0; c < C; ++c) {
        st.std[c] = std::sqrt(st.std[c] / count[c]);
        if (st.std[c] < 1e-8) {
            std::cerr << "normalize: lead " << c << " has near-zero std; flooring at 1e-8\n";
            st.std[c] = 1e-8;
        }
    }
    return st;
}

// zscore mode requires stats computed on the training split.
inline void apply_normalize(LabeledDataset& ds, NormMode mode, const NormStats* stats = nullptr) {
    switch (mode) {
        case NormMode::none: return;
        case NormMode::divide_by_1000:
            for (Record& r : ds.records)
                for (double& v : r.signal.values) v /= 1000.0;
            return;
        case NormMode::zscore_per_lead: {
            require(stats != nullptr, "normalize: zscore mode needs training statistics");
            for (Record& r : ds.records)
                for (std::size_t c = 0; c < r.signal.leads; ++c)
                    for (std::size_t t = 0; t < r.signal.samples; ++t)
                        r.signal.at(c, t) = (r.signal.at(c, t) - stats->mean[c]) / stats->std[c];
            return;
        }
    }
}

// ---- file I/O -------------------------------------------------------------------

// <base>.json carries the header; <base>.bin carries little-endian float32
// samples, record-major then lead-major.
inline void save_dataset(const LabeledDataset& ds, const std::string& base_path) {
    require(!ds.records.empty(), "save_dataset: empty dataset");
    const float probe = 1.0f;
    std::uint32_t bits = 0;
    std::memcpy(&bits, &probe, 4);
    require(bits == 0x3F800000u, "save_dataset: requires an IEEE-754 little-endian platform");

    const Signal& first = ds.records[0].signal;
    nlohmann::json records = nlohmann::json::array();
    for (const Record& r : ds.records) {
        require(r.signal.leads == first.leads && r.signal.samples == first.samples,
                "save_dataset: records must share one geometry");
        records.push_back({{"patient_id", r.patient_id},
                           {"label", r.label},
                           {"synthetic", r.synthetic}});
    }
    nlohmann::json header{{"format", "taskaug-dataset-v1"},
                          {"n", ds.records.size()},
                          {"leads", first.leads},
                          {"samples", first.samples},
                          {"fs", first.fs},
                          {"task", ds.task},
                          {"prevalence", ds.prevalence()},
                          {"records", records}};
    {
        std::ofstream jf(base_path + ".json");
        require(jf.good(), "save_dataset: cannot write " + base_path + ".json");
        jf << header.dump(2) << "\n";
    }
    std::ofstream bf(base_path + ".bin", std::ios::binary);
    require(bf.good(), "save_dataset: cannot write " + base_path + ".bin");
    std::vector<float> buf;
    buf.reserve(first.leads * first.samples);
    for (const Record& r : ds.records) {
        buf.clear();
        for (double v : r.signal.values) buf.push_back(static_cast<float>(v));
        bf.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
}

inline LabeledDataset load_dataset(const std::string& base_path) {
    std::ifstream jf(base_path + ".json");
    require(jf.good(), "load_dataset: cannot open " + base_path + ".json");
    nlohmann::json header = nlohmann::json::parse(jf);
    const auto n = header.at("n").get<std::size_t>();
    const auto leads = header.at("leads").get<std::size_t>();
    const auto samples = header.at("samples").get<std::size_t>();
    const auto fs = header.at("fs").get<double>();

    std::ifstream bf(base_path + ".bin", std::ios::binary | std::ios::ate);
    require(bf.good(), "load_dataset: cannot open " + base_path + ".bin");
    const auto actual = static_cast<std::size_t>(bf.tellg());
    const std::size_t expected = n * leads * samples * sizeof(float);
    require(actual == expected, "load_dataset: corrupt payload: " + base_path + ".bin has " +
                                    std::to_string(actual) + " bytes, expected " +
                                    std::to_string(expected));
    bf.seekg(0);

    LabeledDataset ds;
    ds.task = header.value("task", std::string());
    ds.records.reserve(n);
    std::vector<float> buf(leads * samples);
    for (const auto& rj : header.at("records")) {
        bf.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        Record r;
        r.signal.leads = leads;
        r.signal.samples = samples;
        r.signal.fs = fs;
        r.signal.values.assign(buf.begin(), buf.end());
        r.label = rj.at("label").get<int>();
        r.patient_id = rj.at("patient_id").get<std::string>();
        r.synthetic = rj.value("synthetic", false);
        ds.records.push_back(std::move(r));
    }
    require(ds.records.size() == n, "load_dataset: header lists " + std::to_string(n) +
                                        " records, found " + std::to_string(ds.records.size()));
    return ds;
}

// One row per record: patient_id, label, then leads*samples values.
inline LabeledDataset load_dataset_csv(const std::string& path, std::size_t leads, double fs) {
    std::ifstream f(path);
    require(f.good(), "load_dataset_csv: cannot open " + path);
    LabeledDataset ds;
    ds.task = "csv-import";
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        require(cells.size() > 2, "load_dataset_csv: row needs patient_id, label, values");
        const std::size_t nvals = cells.size() - 2;
        require(nvals % leads == 0, "load_dataset_csv: value count " + std::to_string(nvals) +
                                        " not divisible by " + std::to_string(leads) + " leads");
        Record r;
        r.patient_id = cells[0];
        r.label = std::stoi(cells[1]);
        require(r.label == 0 || r.label == 1, "load_dataset_csv: labels must be 0/1");
        r.signal.leads = leads;
        r.signal.samples = nvals / leads;
        r.signal.fs = fs;
        r.signal.values.reserve(nvals);
        for (std::size_t i = 2; i < cells.size(); ++i)
            r.signal.values.push_back(std::stod(cells[i]));
        ds.records.push_back(std::move(r));
    }
    require(!ds.records.empty(), "load_dataset_csv: no records in " + path);
    return ds;
}

}  // namespace taskaug
