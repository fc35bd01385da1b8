#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prosemble/corpus.hpp"
#include "prosemble/fft.hpp"
#include "prosemble/rng.hpp"
#include "prosemble/wav.hpp"

namespace prosemble {

constexpr int kSampleRate = 16000;
constexpr int kHopSamples = 160;  // 10 ms
constexpr int kMelWindow = 400;
constexpr int kFftSize = 512;
constexpr int kMelBands = 80;
constexpr int kMfccCount = 25;
constexpr double kMelFloor = 1e-10;

struct DenormConfig {
    double f0_mean_hz = 160.0;
    double f0_sigma = 0.25;
    double logdur_mean = 2.0794415416798357;  // ln(8 frames)
    double logdur_sigma = 0.4;
    double energy_mean = -1.2039728043259361;  // ln(0.3)
    double energy_sigma = 0.3;
    double f0_min_hz = 50.0;
    double f0_max_hz = 500.0;

    nlohmann::json to_json() const {
        return {{"f0_mean_hz", f0_mean_hz},   {"f0_sigma", f0_sigma},       {"logdur_mean", logdur_mean},
                {"logdur_sigma", logdur_sigma}, {"energy_mean", energy_mean}, {"energy_sigma", energy_sigma},
                {"f0_min_hz", f0_min_hz},     {"f0_max_hz", f0_max_hz}};
    }

    static DenormConfig from_json(const nlohmann::json& j) {
        DenormConfig c;
        c.f0_mean_hz = j.value("f0_mean_hz", c.f0_mean_hz);
        c.f0_sigma = j.value("f0_sigma", c.f0_sigma);
        c.logdur_mean = j.value("logdur_mean", c.logdur_mean);
        c.logdur_sigma = j.value("logdur_sigma", c.logdur_sigma);
        c.energy_mean = j.value("energy_mean", c.energy_mean);
        c.energy_sigma = j.value("energy_sigma", c.energy_sigma);
        c.f0_min_hz = j.value("f0_min_hz", c.f0_min_hz);
        c.f0_max_hz = j.value("f0_max_hz", c.f0_max_hz);
        return c;
    }
};

struct ContourTracks {
    std::vector<double> f0_hz;      // per 10 ms frame; meaningful on voiced frames
    std::vector<double> amplitude;  // per frame linear amplitude
    std::vector<bool> voiced;
    std::vector<int> phone_frame_counts;

    int frames() const { return static_cast<int>(f0_hz.size()); }
};

// Denormalize per-phone z-scores to frame-level physical contours. F0 is
// anchored at each phone's center frame and linearly interpolated between
// anchors inside a voiced run; amplitude is constant per phone.
inline ContourTracks render_contours(const ProsodyTargets& targets, const DenormConfig& cfg = {}) {
    const int n = targets.size();
    ContourTracks tracks;
    std::vector<int> starts(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        if (!std::isfinite(targets.f0_z[si]) || !std::isfinite(targets.energy_z[si]) ||
            !std::isfinite(targets.logdur_z[si]))
            throw std::invalid_argument("render_contours: non-finite target at phone " + std::to_string(i));
        const int dur = std::max(
            1, static_cast<int>(std::lround(std::exp(targets.logdur_z[si] * cfg.logdur_sigma + cfg.logdur_mean))));
        starts[si] = tracks.frames();
        tracks.phone_frame_counts.push_back(dur);
        const double amp = std::exp(targets.energy_z[si] * cfg.energy_sigma + cfg.energy_mean);
        for (int f = 0; f < dur; ++f) {
            tracks.f0_hz.push_back(0.0);
            tracks.amplitude.push_back(amp);
            tracks.voiced.push_back(targets.voiced_mask[si]);
        }
    }
    // Fill f0 over voiced runs with piecewise-linear interpolation between
    // phone-center anchors.
    auto anchor_hz = [&](int i) {
        const double hz = std::exp(targets.f0_z[static_cast<std::size_t>(i)] * cfg.f0_sigma + std::log(cfg.f0_mean_hz));
        return std::clamp(hz, cfg.f0_min_hz, cfg.f0_max_hz);
    };
    int i = 0;
    while (i < n) {
        if (!targets.voiced_mask[static_cast<std::size_t>(i)]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && targets.voiced_mask[static_cast<std::size_t>(j + 1)]) ++j;
        // run of voiced phones [i, j]
        std::vector<double> centers, values;
        for (int p = i; p <= j; ++p) {
            const std::size_t sp = static_cast<std::size_t>(p);
            centers.push_back(starts[sp] + (tracks.phone_frame_counts[sp] - 1) / 2.0);
            values.push_back(anchor_hz(p));
        }
        const int run_start = starts[static_cast<std::size_t>(i)];
        const int run_end = starts[static_cast<std::size_t>(j)] + tracks.phone_frame_counts[static_cast<std::size_t>(j)];
        for (int f = run_start; f < run_end; ++f) {
            const double x = f;
            double hz;
            if (x <= centers.front()) {
                hz = values.front();
            } else if (x >= centers.back()) {
                hz = values.back();
            } else {
                std::size_t k = 0;
                while (x > centers[k + 1]) ++k;
                const double t = (x - centers[k]) / (centers[k + 1] - centers[k]);
                hz = values[k] + t * (values[k + 1] - values[k]);
            }
            tracks.f0_hz[static_cast<std::size_t>(f)] = hz;
        }
        i = j + 1;
    }
    return tracks;
}

// Additive-harmonic synthesis with a continuous phase accumulator. Voiced
// frames sum harmonics k*f0 up to 5 kHz at amplitude amp/k; unvoiced frames
// carry amplitude-scaled white noise; voicing transitions cross-fade over
// 5 ms. Deterministic for a fixed noise seed.
inline Waveform synthesize(const ContourTracks& tracks, std::uint64_t noise_seed = 0) {
    constexpr double kTau = 6.283185307179586;
    constexpr int kFadeSamples = 80;  // 5 ms at 16 kHz
    constexpr double kMaxHarmonicHz = 5000.0;
    const int frames = tracks.frames();
    Waveform wav;
    wav.samples.assign(static_cast<std::size_t>(frames) * kHopSamples, 0.0);
    if (frames == 0) return wav;

    // Per-sample voicing gain with linear cross-fades at voicing boundaries.
    std::vector<double> gain(wav.samples.size());
    for (int f = 0; f < frames; ++f) {
        const double g = tracks.voiced[static_cast<std::size_t>(f)] ? 1.0 : 0.0;
        for (int s = 0; s < kHopSamples; ++s) gain[static_cast<std::size_t>(f) * kHopSamples + s] = g;
    }
    for (int f = 1; f < frames; ++f) {
        if (tracks.voiced[static_cast<std::size_t>(f)] == tracks.voiced[static_cast<std::size_t>(f - 1)]) continue;
        const double from = tracks.voiced[static_cast<std::size_t>(f - 1)] ? 1.0 : 0.0;
        const double to = 1.0 - from;
        const std::size_t boundary = static_cast<std::size_t>(f) * kHopSamples;
        for (int s = 0; s < kFadeSamples && boundary + static_cast<std::size_t>(s) < gain.size(); ++s) {
            gain[boundary + static_cast<std::size_t>(s)] = from + (to - from) * (s + 1) / double(kFadeSamples);
        }
    }

    Rng noise(derive_seed(noise_seed, "synth-noise"));
    double phase = 0.0;
    double last_f0 = 0.0;
    for (int f = 0; f < frames; ++f) {
        const std::size_t sf = static_cast<std::size_t>(f);
        const double amp = tracks.amplitude[sf];
        double f0 = tracks.voiced[sf] ? tracks.f0_hz[sf] : last_f0;
        if (f0 > 0.0) last_f0 = f0;
        const int harmonics = f0 > 0.0 ? static_cast<int>(kMaxHarmonicHz / f0) : 0;
        for (int s = 0; s < kHopSamples; ++s) {
            const std::size_t idx = sf * kHopSamples + static_cast<std::size_t>(s);
            double tone = 0.0;
            if (harmonics > 0) {
                phase += kTau * f0 / kSampleRate;
                if (phase > kTau) phase -= kTau;
                for (int k = 1; k <= harmonics; ++k) tone += amp / k * std::sin(k * phase);
            }
            const double hiss = amp * noise.uniform(-1.0, 1.0);
            const double g = gain[idx];
            double sample = g * tone + (1.0 - g) * hiss;
            if (sample > 1.0) {
                sample = 1.0;
                ++wav.clipped;
            } else if (sample < -1.0) {
                sample = -1.0;
                ++wav.clipped;
            }
            wav.samples[idx] = sample;
        }
    }
    return wav;
}

// ---- mel / MFCC analysis -----------------------------------------------

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filterbank on the HTK mel scale, 80 bands over 0-8000 Hz,
// computed once per process.
inline const std::vector<std::vector<double>>& mel_filterbank() {
    static const std::vector<std::vector<double>> bank = [] {
        std::vector<std::vector<double>> filters(kMelBands, std::vector<double>(kFftSize / 2 + 1, 0.0));
        const double mel_lo = hz_to_mel(0.0);
        const double mel_hi = hz_to_mel(8000.0);
        std::vector<double> edges(kMelBands + 2);
        for (int m = 0; m < kMelBands + 2; ++m)
            edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (kMelBands + 1));
        for (int m = 0; m < kMelBands; ++m) {
            const double lo = edges[static_cast<std::size_t>(m)];
            const double mid = edges[static_cast<std::size_t>(m + 1)];
            const double hi = edges[static_cast<std::size_t>(m + 2)];
            for (int bin = 0; bin <= kFftSize / 2; ++bin) {
                const double hz = static_cast<double>(bin) * kSampleRate / kFftSize;
                double w = 0.0;
                if (hz > lo && hz < mid) {
                    w = (hz - lo) / (mid - lo);
                } else if (hz >= mid && hz < hi) {
                    w = (hi - hz) / (hi - mid);
                }
                filters[static_cast<std::size_t>(m)][static_cast<std::size_t>(bin)] = w;
            }
        }
        return filters;
    }();
    return bank;
}

// frames x 80 natural-log mel energies; Hann window 400, hop 160, FFT 512.
inline std::vector<std::vector<double>> mel_spectrogram(const Waveform& wav) {
    constexpr double kTau = 6.283185307179586;
    static const std::vector<double> window = [] {
        std::vector<double> w(kMelWindow);
        for (int i = 0; i < kMelWindow; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(kTau * i / (kMelWindow - 1));
        return w;
    }();
    std::vector<std::vector<double>> mel;
    if (wav.samples.size() < static_cast<std::size_t>(kMelWindow)) return mel;
    const std::size_t frame_count = (wav.samples.size() - static_cast<std::size_t>(kMelWindow)) / kHopSamples + 1;
    const std::vector<std::vector<double>>& bank = mel_filterbank();
    std::vector<double> frame(kMelWindow);
    for (std::size_t f = 0; f < frame_count; ++f) {
        for (int i = 0; i < kMelWindow; ++i)
            frame[static_cast<std::size_t>(i)] =
                wav.samples[f * kHopSamples + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
        const std::vector<double> power = power_spectrum(frame, kFftSize);
        std::vector<double> bands(kMelBands);
        for (int m = 0; m < kMelBands; ++m) {
            double e = 0.0;
            const std::vector<double>& filt = bank[static_cast<std::size_t>(m)];
            for (std::size_t bin = 0; bin < power.size(); ++bin) e += filt[bin] * power[bin];
            bands[static_cast<std::size_t>(m)] = std::log(std::max(e, kMelFloor));
        }
        mel.push_back(std::move(bands));
    }
    return mel;
}

// Orthonormal DCT-II over the 80 log-mel bands; keeps coefficients 0..24.
inline std::vector<std::vector<double>> mfcc(const std::vector<std::vector<double>>& mel) {
    constexpr double kPi = 3.141592653589793;
    static const std::vector<std::vector<double>> basis = [] {
        std::vector<std::vector<double>> b(kMfccCount, std::vector<double>(kMelBands));
        for (int k = 0; k < kMfccCount; ++k) {
            const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / kMelBands);
            for (int n = 0; n < kMelBands; ++n)
                b[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] =
                    scale * std::cos(kPi * k * (2 * n + 1) / (2.0 * kMelBands));
        }
        return b;
    }();
    std::vector<std::vector<double>> out;
    out.reserve(mel.size());
    for (const std::vector<double>& frame : mel) {
        if (static_cast<int>(frame.size()) != kMelBands)
            throw std::invalid_argument("mfcc: expected " + std::to_string(kMelBands) + " mel bands, got " +
                                        std::to_string(frame.size()));
        std::vector<double> coeffs(kMfccCount, 0.0);
        for (int k = 0; k < kMfccCount; ++k) {
            double acc = 0.0;
            for (int n = 0; n < kMelBands; ++n)
                acc += basis[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] * frame[static_cast<std::size_t>(n)];
            coeffs[static_cast<std::size_t>(k)] = acc;
        }
        out.push_back(std::move(coeffs));
    }
    return out;
}

// ---- frame-matrix persistence (standalone scorer path) -------------------

inline void write_frames_jsonl(const std::vector<std::vector<double>>& frames, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("frames: cannot write " + path);
    for (const std::vector<double>& row : frames) out << nlohmann::json(row).dump() << '\n';
    if (!out) throw std::runtime_error("frames: write failed for " + path);
}

inline std::vector<std::vector<double>> read_frames_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("frames: cannot read " + path);
    std::vector<std::vector<double>> frames;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            frames.push_back(nlohmann::json::parse(line).get<std::vector<double>>());
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("frames line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return frames;
}

}  // namespace prosemble
