#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prosemble/wav.hpp"

namespace prosemble {

struct PitchConfig {
    double f0_min = 50.0;
    double f0_max = 500.0;
    double nccf_threshold = 0.3;     // unvoiced hypothesis strength
    double octave_cost = 0.5;        // * |log2(f/f')| between voiced frames
    double voicing_switch_cost = 0.2;
    // Lag-proportional candidate penalty (scaled by f0_min/f0). Pure periodic
    // signals correlate perfectly at every period multiple; this breaks the
    // tie toward the shortest lag.
    double lag_bias = 0.02;
    int max_candidates = 3;
};

struct PitchFrame {
    double f0_hz = 0.0;  // 0 when unvoiced
    bool voiced = false;
    double nccf = 0.0;  // best candidate NCCF seen for this frame
};

struct PitchTrack {
    std::vector<PitchFrame> frames;  // 10 ms shift

    int size() const { return static_cast<int>(frames.size()); }
};

struct PitchCandidate {
    double f0_hz = 0.0;
    double nccf = 0.0;
};

// Dynamic program over per-frame candidate sets plus an unvoiced hypothesis.
// Returns (chosen candidate index per frame, -1 for unvoiced; total path
// cost). Exposed separately so small instances can be checked against
// exhaustive enumeration.
inline std::pair<std::vector<int>, double> viterbi_pitch_path(const std::vector<std::vector<PitchCandidate>>& lattice,
                                                              const PitchConfig& cfg) {
    const int frames = static_cast<int>(lattice.size());
    std::vector<int> path(static_cast<std::size_t>(frames), -1);
    if (frames == 0) return {path, 0.0};

    auto local_cost = [&](int f, int s) {
        // state s: 0..k-1 = candidates, k = unvoiced
        const std::vector<PitchCandidate>& cands = lattice[static_cast<std::size_t>(f)];
        if (s >= static_cast<int>(cands.size())) return 1.0 - cfg.nccf_threshold;
        const PitchCandidate& c = cands[static_cast<std::size_t>(s)];
        return 1.0 - c.nccf + cfg.lag_bias * (cfg.f0_min / c.f0_hz);
    };
    auto transition_cost = [&](int f, int s_prev, int s_cur) {
        const std::vector<PitchCandidate>& prev = lattice[static_cast<std::size_t>(f - 1)];
        const std::vector<PitchCandidate>& cur = lattice[static_cast<std::size_t>(f)];
        const bool pv = s_prev < static_cast<int>(prev.size());
        const bool cv = s_cur < static_cast<int>(cur.size());
        if (pv && cv) {
            const double ratio = cur[static_cast<std::size_t>(s_cur)].f0_hz / prev[static_cast<std::size_t>(s_prev)].f0_hz;
            return cfg.octave_cost * std::abs(std::log2(ratio));
        }
        if (pv != cv) return cfg.voicing_switch_cost;
        return 0.0;
    };

    std::vector<std::vector<double>> cost(static_cast<std::size_t>(frames));
    std::vector<std::vector<int>> back(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        const int states = static_cast<int>(lattice[static_cast<std::size_t>(f)].size()) + 1;
        cost[static_cast<std::size_t>(f)].assign(static_cast<std::size_t>(states), 0.0);
        back[static_cast<std::size_t>(f)].assign(static_cast<std::size_t>(states), -1);
        for (int s = 0; s < states; ++s) {
            double best = local_cost(f, s);
            int best_prev = -1;
            if (f > 0) {
                best = std::numeric_limits<double>::infinity();
                const int prev_states = static_cast<int>(cost[static_cast<std::size_t>(f - 1)].size());
                for (int p = 0; p < prev_states; ++p) {
                    const double c =
                        cost[static_cast<std::size_t>(f - 1)][static_cast<std::size_t>(p)] + transition_cost(f, p, s) +
                        local_cost(f, s);
                    if (c < best) {
                        best = c;
                        best_prev = p;
                    }
                }
            }
            cost[static_cast<std::size_t>(f)][static_cast<std::size_t>(s)] = best;
            back[static_cast<std::size_t>(f)][static_cast<std::size_t>(s)] = best_prev;
        }
    }

    const std::vector<double>& final_costs = cost[static_cast<std::size_t>(frames - 1)];
    int state = static_cast<int>(std::min_element(final_costs.begin(), final_costs.end()) - final_costs.begin());
    const double total = final_costs[static_cast<std::size_t>(state)];
    for (int f = frames - 1; f >= 0; --f) {
        const int cands = static_cast<int>(lattice[static_cast<std::size_t>(f)].size());
        path[static_cast<std::size_t>(f)] = state < cands ? state : -1;
        state = back[static_cast<std::size_t>(f)][static_cast<std::size_t>(state)];
    }
    return {path, total};
}

namespace detail {

// 31-tap Hamming-windowed sinc lowpass (cutoff 800 Hz at 16 kHz) used before
// 8x decimation for the first NCCF pass.
inline const std::vector<double>& decimation_filter() {
    static const std::vector<double> taps = [] {
        constexpr int kTaps = 31;
        constexpr double kPi = 3.141592653589793;
        const double fc = 800.0 / 16000.0;
        std::vector<double> h(kTaps);
        double sum = 0.0;
        for (int n = 0; n < kTaps; ++n) {
            const double m = n - (kTaps - 1) / 2.0;
            const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * m) / (kPi * m);
            const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (kTaps - 1));
            h[static_cast<std::size_t>(n)] = sinc * w;
            sum += h[static_cast<std::size_t>(n)];
        }
        for (double& v : h) v /= sum;  // unity DC gain
        return h;
    }();
    return taps;
}

inline double nccf_at(const std::vector<double>& x, int start, int window, int lag) {
    double num = 0.0, e0 = 0.0, el = 0.0;
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < window; ++i) {
        const int a = start + i;
        const int b = start + i + lag;
        const double xa = a >= 0 && a < n ? x[static_cast<std::size_t>(a)] : 0.0;
        const double xb = b >= 0 && b < n ? x[static_cast<std::size_t>(b)] : 0.0;
        num += xa * xb;
        e0 += xa * xa;
        el += xb * xb;
    }
    const double denom = std::sqrt(e0 * el);
    return denom > 1e-20 ? num / denom : 0.0;
}

}  // namespace detail

// RAPT-style tracker: coarse NCCF candidates on a 2 kHz decimated signal,
// full-rate refinement with parabolic interpolation, then Viterbi over
// candidates + unvoiced hypothesis.
inline PitchTrack track_pitch(const Waveform& wav, const PitchConfig& cfg = {}) {
    constexpr int kHop = 160;
    constexpr int kFullWindow = 320;   // 20 ms
    constexpr int kDecim = 8;          // 16 kHz -> 2 kHz
    constexpr int kDsWindow = 40;      // 20 ms at 2 kHz
    const int n = static_cast<int>(wav.samples.size());
    const int lag_min = std::max(2, static_cast<int>(std::floor(wav.sample_rate / cfg.f0_max)));
    const int lag_max = static_cast<int>(std::ceil(wav.sample_rate / cfg.f0_min));
    if (n < kFullWindow + lag_max) {
        throw std::invalid_argument("track_pitch: waveform shorter than one analysis window (" +
                                    std::to_string(kFullWindow + lag_max) + " samples)");
    }
    const int frames = (n - kFullWindow - lag_max) / kHop + 1;

    // decimated signal with group-delay compensation
    const std::vector<double>& h = detail::decimation_filter();
    const int delay = static_cast<int>(h.size() - 1) / 2;
    const int n_ds = n / kDecim;
    std::vector<double> ds(static_cast<std::size_t>(n_ds), 0.0);
    for (int m = 0; m < n_ds; ++m) {
        const int center = m * kDecim + delay;
        double acc = 0.0;
        for (int t = 0; t < static_cast<int>(h.size()); ++t) {
            const int idx = center - t;
            if (idx >= 0 && idx < n) acc += h[static_cast<std::size_t>(t)] * wav.samples[static_cast<std::size_t>(idx)];
        }
        ds[static_cast<std::size_t>(m)] = acc;
    }
    const int ds_lag_min = std::max(2, lag_min / kDecim);
    const int ds_lag_max = (lag_max + kDecim - 1) / kDecim;

    std::vector<std::vector<PitchCandidate>> lattice(static_cast<std::size_t>(frames));
    std::vector<double> best_nccf(static_cast<std::size_t>(frames), 0.0);
    for (int f = 0; f < frames; ++f) {
        const int ds_start = f * (kHop / kDecim);
        std::vector<double> coarse(static_cast<std::size_t>(ds_lag_max + 1), 0.0);
        double best = 0.0;
        for (int lag = ds_lag_min; lag <= ds_lag_max; ++lag) {
            coarse[static_cast<std::size_t>(lag)] = detail::nccf_at(ds, ds_start, kDsWindow, lag);
            best = std::max(best, coarse[static_cast<std::size_t>(lag)]);
        }
        // coarse peaks worth refining
        std::vector<int> peaks;
        for (int lag = ds_lag_min; lag <= ds_lag_max; ++lag) {
            const double c = coarse[static_cast<std::size_t>(lag)];
            const double left = lag > ds_lag_min ? coarse[static_cast<std::size_t>(lag - 1)] : -1.0;
            const double right = lag < ds_lag_max ? coarse[static_cast<std::size_t>(lag + 1)] : -1.0;
            if (c >= left && c >= right && c >= std::max(0.1, 0.5 * best)) peaks.push_back(lag);
        }
        std::sort(peaks.begin(), peaks.end(), [&](int a, int b) {
            return coarse[static_cast<std::size_t>(a)] > coarse[static_cast<std::size_t>(b)];
        });
        if (static_cast<int>(peaks.size()) > cfg.max_candidates) peaks.resize(static_cast<std::size_t>(cfg.max_candidates));

        const int full_start = f * kHop;
        std::vector<PitchCandidate>& cands = lattice[static_cast<std::size_t>(f)];
        for (int peak : peaks) {
            const int lo = std::max(lag_min, peak * kDecim - kDecim / 2);
            const int hi = std::min(lag_max, peak * kDecim + kDecim / 2);
            int best_lag = -1;
            double best_val = -2.0;
            for (int lag = lo; lag <= hi; ++lag) {
                const double v = detail::nccf_at(wav.samples, full_start, kFullWindow, lag);
                if (v > best_val) {
                    best_val = v;
                    best_lag = lag;
                }
            }
            if (best_lag < 0) continue;
            double refined_lag = best_lag;
            double refined_val = best_val;
            if (best_lag > lag_min && best_lag < lag_max) {
                const double cl = detail::nccf_at(wav.samples, full_start, kFullWindow, best_lag - 1);
                const double cr = detail::nccf_at(wav.samples, full_start, kFullWindow, best_lag + 1);
                const double denom = cl - 2.0 * best_val + cr;
                if (denom < -1e-12) {
                    const double delta = std::clamp(0.5 * (cl - cr) / denom, -0.5, 0.5);
                    refined_lag = best_lag + delta;
                    refined_val = best_val - 0.25 * (cl - cr) * delta;
                }
            }
            const double f0 = std::clamp(wav.sample_rate / refined_lag, cfg.f0_min, cfg.f0_max);
            cands.push_back({f0, refined_val});
        }
        std::sort(cands.begin(), cands.end(), [](const PitchCandidate& a, const PitchCandidate& b) {
            return a.nccf > b.nccf;
        });
        if (static_cast<int>(cands.size()) > cfg.max_candidates) cands.resize(static_cast<std::size_t>(cfg.max_candidates));
        for (const PitchCandidate& c : cands) best_nccf[static_cast<std::size_t>(f)] = std::max(best_nccf[static_cast<std::size_t>(f)], c.nccf);
    }

    const auto [path, total_cost] = viterbi_pitch_path(lattice, cfg);
    (void)total_cost;
    PitchTrack track;
    track.frames.resize(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        PitchFrame& out = track.frames[static_cast<std::size_t>(f)];
        out.nccf = best_nccf[static_cast<std::size_t>(f)];
        const int choice = path[static_cast<std::size_t>(f)];
        if (choice >= 0) {
            out.voiced = true;
            out.f0_hz = lattice[static_cast<std::size_t>(f)][static_cast<std::size_t>(choice)].f0_hz;
        }
    }
    return track;
}

// Population variance of f0 over voiced frames; empty when nothing is voiced.
inline std::optional<double> f0_variance(const PitchTrack& track) {
    double sum = 0.0;
    long long n = 0;
    for (const PitchFrame& f : track.frames) {
        if (!f.voiced) continue;
        sum += f.f0_hz;
        ++n;
    }
    if (n == 0) return std::nullopt;
    const double mean = sum / static_cast<double>(n);
    double acc = 0.0;
    for (const PitchFrame& f : track.frames) {
        if (!f.voiced) continue;
        acc += (f.f0_hz - mean) * (f.f0_hz - mean);
    }
    return acc / static_cast<double>(n);
}

inline void write_pitch_jsonl(const PitchTrack& track, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pitch: cannot write " + path);
    for (int f = 0; f < track.size(); ++f) {
        const PitchFrame& fr = track.frames[static_cast<std::size_t>(f)];
        out << nlohmann::json{{"frame", f}, {"f0_hz", fr.f0_hz}, {"voiced", fr.voiced}, {"nccf", fr.nccf}}.dump()
            << '\n';
    }
}

}  // namespace prosemble
