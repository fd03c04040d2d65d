// Signal and dataset containers. Values are held as doubles in memory; the
// on-disk payload is 32-bit, so generators round through float to keep
// save/load round trips bit-exact.
#pragma once

#include <string>
#include <vector>

#include "taskaug/tensor.hpp"

namespace taskaug {

struct Signal {
    std::size_t leads = 0;
    std::size_t samples = 0;
    double fs = 0.0;                 // Hz
    std::vector<double> values;      // [leads x samples] row-major

    Tensor tensor() const { return Tensor({leads, samples}, values); }

    static Signal from_tensor(const Tensor& t, double fs) {
        require(t.rank() == 2, "Signal: tensor must be [C x T]");
        return Signal{t.shape[0], t.shape[1], fs, t.data};
    }

    double at(std::size_t lead, std::size_t t) const { return values[lead * samples + t]; }
    double& at(std::size_t lead, std::size_t t) { return values[lead * samples + t]; }

    void validate() const {
        require(leads >= 1, "Signal: leads must be >= 1");
        require(samples >= 64, "Signal: samples must be >= 64");
        require(fs > 0.0, "Signal: sampling rate must be positive");
        require(values.size() == leads * samples, "Signal: value count mismatch");
        for (double v : values) require(std::isfinite(v), "Signal: non-finite sample");
    }
};

struct Record {
    Signal signal;
    int label = 0;  // binary
    std::string patient_id;
    bool synthetic = false;  // true for oversampled records
};

struct LabeledDataset {
    std::string task;
    std::vector<Record> records;

    std::size_t size() const { return records.size(); }

    double prevalence() const {
        if (records.empty()) return 0.0;
        std::size_t pos = 0;
        for (const Record& r : records) pos += static_cast<std::size_t>(r.label);
        return static_cast<double>(pos) / static_cast<double>(records.size());
    }

    std::size_t positives() const {
        std::size_t pos = 0;
        for (const Record& r : records) pos += static_cast<std::size_t>(r.label);
        return pos;
    }
};

}  // namespace taskaug
