// The four fixed augmentation strategies and their supporting algorithms:
// contiguous time masking, STFT/inverse-STFT masking, DTW-guided warping
// toward a class-discriminative reference, and SMOTE oversampling. None of
// these are differentiable and none enter the hypergradient path.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "taskaug/rng.hpp"
#include "taskaug/signal.hpp"
#include "taskaug/tape.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

// ---- time masking --------------------------------------------------------

// Zeros a contiguous fraction w of the signal; the start sample is uniform
// over every admissible position.
inline Tensor time_mask_baseline(const Tensor& x, double w, RngStream& rng) {
    require(x.rank() == 2, "time_mask_baseline: expects [C x T]");
    require(w >= 0.0 && w <= 1.0,
            "time_mask_baseline: w must lie in [0, 1], got " + std::to_string(w));
    const std::size_t C = x.shape[0], T = x.shape[1];
    const std::size_t len = static_cast<std::size_t>(w * static_cast<double>(T));
    Tensor out = x;
    if (len == 0) return out;
    const std::size_t start =
        static_cast<std::size_t>(rng.uniform() * static_cast<double>(T - len + 1));
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = start; t < std::min(start + len, T); ++t) out.at(c, t) = 0.0;
    return out;
}

// ---- STFT / inverse STFT ---------------------------------------------------

namespace fft_detail {

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    require((n & (n - 1)) == 0 && n > 0, "fft: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& v : a) v /= static_cast<double>(n);
}

inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n)));
    return w;
}

}  // namespace fft_detail

struct Spectrogram {
    std::size_t window = 256;
    std::size_t hop = 64;
    std::size_t orig_len = 0;
    std::size_t frames = 0;
    std::size_t leads = 0;
    // per lead, frame-major: bins[lead][frame * freq_bins() + b]
    std::vector<std::vector<std::complex<double>>> bins;

    std::size_t freq_bins() const { return window / 2 + 1; }
};

// Hann-windowed frames over a reflect-padded signal (half a window each side,
// zero-extended so the last frame covers the tail).
inline Spectrogram stft(const Tensor& x, std::size_t window = 256, std::size_t hop = 64) {
    require(x.rank() == 2, "stft: expects [C x T]");
    require(hop >= 1 && hop <= window, "stft: hop must lie in [1, window]");
    require((window & (window - 1)) == 0, "stft: window must be a power of two");
    const std::size_t C = x.shape[0], T = x.shape[1];

    Spectrogram sp;
    sp.window = window;
    sp.hop = hop;
    sp.orig_len = T;
    sp.leads = C;
    const std::size_t padded = T + window;  // window/2 each side
    sp.frames = (padded - window + hop - 1) / hop + 1;
    const std::size_t covered = (sp.frames - 1) * hop + window;

    const auto win = fft_detail::hann_window(window);
    const std::size_t nb = sp.freq_bins();
    sp.bins.assign(C, std::vector<std::complex<double>>(sp.frames * nb));

    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> ext(covered, 0.0);
        for (std::size_t i = 0; i < padded; ++i) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) -
                                       static_cast<std::ptrdiff_t>(window / 2);
            ext[i] = x.at(c, Tape::reflect_index(src, T));
        }
        std::vector<std::complex<double>> buf(window);
        for (std::size_t f = 0; f < sp.frames; ++f) {
            for (std::size_t i = 0; i < window; ++i)
                buf[i] = ext[f * hop + i] * win[i];
            fft_detail::fft_inplace(buf, false);
            for (std::size_t b = 0; b < nb; ++b) sp.bins[c][f * nb + b] = buf[b];
        }
    }
    return sp;
}

// Overlap-add inverse with window-squared normalization; exact wherever any
// window weight covers a sample, which includes every original sample.
inline Tensor istft(const Spectrogram& sp) {
    const std::size_t W = sp.window, H = sp.hop, T = sp.orig_len;
    const std::size_t covered = (sp.frames - 1) * H + W;
    const auto win = fft_detail::hann_window(W);
    const std::size_t nb = sp.freq_bins();

    Tensor out = Tensor::zeros({sp.leads, T});
    std::vector<double> acc(covered), den(covered);
    std::vector<std::complex<double>> buf(W);
    for (std::size_t c = 0; c < sp.leads; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::fill(den.begin(), den.end(), 0.0);
        for (std::size_t f = 0; f < sp.frames; ++f) {
            for (std::size_t b = 0; b < nb; ++b) buf[b] = sp.bins[c][f * nb + b];
            for (std::size_t b = nb; b < W; ++b) buf[b] = std::conj(buf[W - b]);
            fft_detail::fft_inplace(buf, true);
            for (std::size_t i = 0; i < W; ++i) {
                acc[f * H + i] += win[i] * buf[i].real();
                den[f * H + i] += win[i] * win[i];
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t i = t + W / 2;
            out.at(c, t) = den[i] > 1e-12 ? acc[i] / den[i] : 0.0;
        }
    }
    return out;
}

// Zeroes frames [frame_start, frame_start+frame_len) and bins
// [bin_start, bin_start+bin_len) of one lead's plane.
inline void mask_spectrogram_lead(Spectrogram& sp, std::size_t lead, std::size_t frame_start,
                                  std::size_t frame_len, std::size_t bin_start,
                                  std::size_t bin_len) {
    const std::size_t nb = sp.freq_bins();
    for (std::size_t f = frame_start; f < std::min(frame_start + frame_len, sp.frames); ++f)
        for (std::size_t b = 0; b < nb; ++b) sp.bins[lead][f * nb + b] = {0.0, 0.0};
    for (std::size_t f = 0; f < sp.frames; ++f)
        for (std::size_t b = bin_start; b < std::min(bin_start + bin_len, nb); ++b)
            sp.bins[lead][f * nb + b] = {0.0, 0.0};
}

// Masks a contiguous fraction w of temporal frames and of frequency bins
// (independent starts, per lead) in the STFT domain, then inverts.
inline Tensor spec_augment(const Tensor& x, double w, RngStream& rng, std::size_t window = 256,
                           std::size_t hop = 64) {
    require(w >= 0.0 && w <= 1.0, "spec_augment: w must lie in [0, 1]");
    Spectrogram sp = stft(x, window, hop);
    const std::size_t nb = sp.freq_bins();
    const std::size_t mask_frames = static_cast<std::size_t>(w * static_cast<double>(sp.frames));
    const std::size_t mask_bins = static_cast<std::size_t>(w * static_cast<double>(nb));
    for (std::size_t c = 0; c < sp.leads; ++c) {
        const std::size_t fstart = static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(sp.frames - mask_frames + 1));
        const std::size_t bstart = static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(nb - mask_bins + 1));
        mask_spectrogram_lead(sp, c, fstart, mask_frames, bstart, mask_bins);
    }
    return istft(sp);
}

// ---- dynamic time warping ----------------------------------------------------

struct DtwResult {
    double cost = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> path;  // (i, j) from (0,0)
};

// Full-window DP with Euclidean local distance over the C-dimensional sample
// vectors; backtracking prefers the diagonal on ties.
inline DtwResult dtw(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.shape[0] == b.shape[0],
            "dtw: expects [C x Ta], [C x Tb] with matching lead counts");
    const std::size_t C = a.shape[0], n = a.shape[1], m = b.shape[1];
    require(n > 0 && m > 0, "dtw: empty input");

    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double d = a.at(c, i) - b.at(c, j);
            s += d * d;
        }
        return std::sqrt(s);
    };

    std::vector<double> D(n * m);
    D[0] = dist(0, 0);
    for (std::size_t i = 1; i < n; ++i) D[i * m] = dist(i, 0) + D[(i - 1) * m];
    for (std::size_t j = 1; j < m; ++j) D[j] = dist(0, j) + D[j - 1];
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 1; j < m; ++j)
            D[i * m + j] =
                dist(i, j) + std::min({D[(i - 1) * m + j - 1], D[(i - 1) * m + j], D[i * m + j - 1]});

    DtwResult res;
    res.cost = D[n * m - 1];
    std::size_t i = n - 1, j = m - 1;
    res.path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            const double diag = D[(i - 1) * m + j - 1];
            const double up = D[(i - 1) * m + j];
            const double left = D[i * m + j - 1];
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up <= left) {
                --i;
            } else {
                --j;
            }
        }
        res.path.emplace_back(i, j);
    }
    std::reverse(res.path.begin(), res.path.end());
    return res;
}

// ---- discriminative guided warping ---------------------------------------------

struct DgwExample {
    Tensor signal;  // [C x T]
    int label = 0;
};

// Reference score: mean DTW distance to the other class minus mean DTW
// distance to the rest of the same class (higher is more discriminative).
inline std::size_t dgw_select_reference(int label, const std::vector<DgwExample>& batch) {
    std::vector<std::size_t> same, other;
    for (std::size_t i = 0; i < batch.size(); ++i)
        (batch[i].label == label ? same : other).push_back(i);
    require(!same.empty(), "dgw: batch has no member of the example's class");

    if (other.empty()) {
        // fall back to the same-class medoid
        std::cerr << "dgw: batch lacks both classes; falling back to the same-class medoid\n";
        std::size_t best = same[0];
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t r : same) {
            double total = 0.0;
            for (std::size_t s : same)
                if (s != r) total += dtw(batch[r].signal, batch[s].signal).cost;
            const double mean = same.size() > 1
                                    ? total / static_cast<double>(same.size() - 1)
                                    : 0.0;
            if (mean < best_cost) {
                best_cost = mean;
                best = r;
            }
        }
        return best;
    }

    std::size_t best = same[0];
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t r : same) {
        double d_other = 0.0;
        for (std::size_t o : other) d_other += dtw(batch[r].signal, batch[o].signal).cost;
        d_other /= static_cast<double>(other.size());
        double d_same = 0.0;
        std::size_t cnt = 0;
        for (std::size_t s : same)
            if (s != r) {
                d_same += dtw(batch[r].signal, batch[s].signal).cost;
                ++cnt;
            }
        if (cnt > 0) d_same /= static_cast<double>(cnt);
        const double score = d_other - d_same;
        if (score > best_score) {
            best_score = score;
            best = r;
        }
    }
    return best;
}

// Warps x onto the reference's time base along the DTW path (all leads move
// together); output keeps the original length.
inline Tensor dgw_warp_to(const Tensor& x, const Tensor& ref) {
    const std::size_t C = x.shape[0];
    const std::size_t Tr = ref.shape[1];
    const DtwResult align = dtw(x, ref);
    Tensor out = Tensor::zeros({C, Tr});
    std::vector<double> counts(Tr, 0.0);
    for (const auto& [i, j] : align.path) {
        for (std::size_t c = 0; c < C; ++c) out.at(c, j) += x.at(c, i);
        counts[j] += 1.0;
    }
    for (std::size_t j = 0; j < Tr; ++j)
        for (std::size_t c = 0; c < C; ++c) out.at(c, j) /= counts[j];
    if (Tr == x.shape[1]) return out;
    // resample back to the source length
    const std::size_t T = x.shape[1];
    Tensor res = Tensor::zeros({C, T});
    for (std::size_t t = 0; t < T; ++t) {
        const double pos = static_cast<double>(t) * static_cast<double>(Tr - 1) /
                           static_cast<double>(T - 1);
        const std::size_t i0 = std::min(static_cast<std::size_t>(pos), Tr - 1);
        const std::size_t i1 = std::min(i0 + 1, Tr - 1);
        const double f = pos - static_cast<double>(i0);
        for (std::size_t c = 0; c < C; ++c)
            res.at(c, t) = (1.0 - f) * out.at(c, i0) + f * out.at(c, i1);
    }
    return res;
}

inline Tensor dgw_augment(const Tensor& x, int label, const std::vector<DgwExample>& batch) {
    return dgw_warp_to(x, batch[dgw_select_reference(label, batch)].signal);
}

// ---- SMOTE ---------------------------------------------------------------------

inline std::vector<double> smote_interpolate(const std::vector<double>& base,
                                             const std::vector<double>& neighbor,
                                             double lambda) {
    std::vector<double> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        out[i] = base[i] + lambda * (neighbor[i] - base[i]);
    return out;
}

// Balances the class counts by interpolating minority examples toward their
// k nearest minority neighbors (flattened-signal Euclidean distance). Runs
// once before training.
inline LabeledDataset smote(const LabeledDataset& ds, std::size_t k, RngStream rng) {
    std::vector<std::size_t> minority, majority;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        (ds.records[i].label == 1 ? minority : majority).push_back(i);
    int minority_label = 1;
    if (minority.size() > majority.size()) {
        std::swap(minority, majority);
        minority_label = 0;
    }
    LabeledDataset out = ds;
    if (minority.size() == majority.size()) return out;
    require(minority.size() >= 2,
            "smote: need at least two minority examples to interpolate, got " +
                std::to_string(minority.size()));

    const std::size_t k_eff = std::min(k, minority.size() - 1);
    auto dist2 = [&](std::size_t a, std::size_t b) {
        const auto& va = ds.records[a].signal.values;
        const auto& vb = ds.records[b].signal.values;
        double s = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) {
            const double d = va[i] - vb[i];
            s += d * d;
        }
        return s;
    };

    // k nearest minority neighbors per minority example (ties by index)
    std::vector<std::vector<std::size_t>> knn(minority.size());
    for (std::size_t a = 0; a < minority.size(); ++a) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t b = 0; b < minority.size(); ++b)
            if (b != a) cand.emplace_back(dist2(minority[a], minority[b]), b);
        std::sort(cand.begin(), cand.end());
        for (std::size_t j = 0; j < k_eff; ++j) knn[a].push_back(cand[j].second);
    }

    const std::size_t need = majority.size() - minority.size();
    for (std::size_t j = 0; j < need; ++j) {
        const std::size_t a = j % minority.size();
        const std::size_t nb = knn[a][rng.next_u64() % k_eff];
        const double lambda = rng.uniform();
        const Record& base = ds.records[minority[a]];
        const Record& neigh = ds.records[minority[nb]];
        Record synth;
        synth.signal = base.signal;
        synth.signal.values =
            smote_interpolate(base.signal.values, neigh.signal.values, lambda);
        synth.label = minority_label;
        synth.patient_id = "synth_" + std::to_string(j);
        synth.synthetic = true;
        out.records.push_back(std::move(synth));
    }
    return out;
}

}  // namespace taskaug
