// Rank-based evaluation metrics and validation-loss early stopping.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "taskaug/tensor.hpp"

namespace taskaug {

// Mann-Whitney AUROC: ties receive half credit, so all-equal scores give 0.5.
inline double auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
    require(labels.size() == scores.size() && !labels.empty(),
            "auroc: labels and scores must be non-empty and aligned");
    std::size_t n_pos = 0;
    for (int y : labels) {
        require(y == 0 || y == 1, "auroc: labels must be 0/1");
        n_pos += static_cast<std::size_t>(y);
    }
    const std::size_t n = labels.size();
    const std::size_t n_neg = n - n_pos;
    require(n_pos > 0 && n_neg > 0, "auroc: undefined for single-class inputs");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// Average precision over descending score thresholds with tied scores grouped.
inline double auprc(const std::vector<int>& labels, const std::vector<double>& scores) {
    require(labels.size() == scores.size() && !labels.empty(),
            "auprc: labels and scores must be non-empty and aligned");
    std::size_t n_pos = 0;
    for (int y : labels) {
        require(y == 0 || y == 1, "auprc: labels must be 0/1");
        n_pos += static_cast<std::size_t>(y);
    }
    require(n_pos > 0 && n_pos < labels.size(), "auprc: undefined for single-class inputs");

    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0, recall_prev = 0.0;
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k)
            labels[order[k]] == 1 ? ++tp : ++fp;
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - recall_prev) * precision;
        recall_prev = recall;
        i = j;
    }
    return ap;
}

// Stops when the validation loss has not improved for `patience` consecutive
// epochs; the best epoch's model is the one to report.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {
        require(patience >= 1, "early_stopping: patience must be >= 1");
    }

    // call once per epoch; returns true when training should stop
    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
            stale_ = 0;
            return false;
        }
        ++stale_;
        return stale_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = -1;
    int stale_ = 0;
};

}  // namespace taskaug
