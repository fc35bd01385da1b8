#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <numeric>

#include "prosemble/dsp.hpp"
#include "prosemble/rng.hpp"

using namespace prosemble;

namespace {

constexpr double kTau = 6.283185307179586;

ProsodyTargets uniform_targets(int n, double f0_z, double energy_z, double logdur_z, bool voiced = true) {
    ProsodyTargets t;
    t.f0_z.assign(static_cast<std::size_t>(n), f0_z);
    t.energy_z.assign(static_cast<std::size_t>(n), energy_z);
    t.logdur_z.assign(static_cast<std::size_t>(n), logdur_z);
    t.voiced_mask.assign(static_cast<std::size_t>(n), voiced);
    return t;
}

Waveform sine_wave(double hz, double seconds, double amp = 0.5) {
    Waveform wav;
    const int n = static_cast<int>(seconds * kSampleRate);
    wav.samples.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) wav.samples[static_cast<std::size_t>(i)] = amp * std::sin(kTau * hz * i / kSampleRate);
    return wav;
}

}  // namespace

TEST_CASE("fft matches the direct DFT on random input") {
    Rng rng(31);
    const std::size_t n = 64;
    std::vector<std::complex<double>> a(n);
    for (std::complex<double>& v : a) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    std::vector<std::complex<double>> direct(n, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -kTau * static_cast<double>(k * t) / static_cast<double>(n);
            direct[k] += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
    std::vector<std::complex<double>> fast = a;
    fft_radix2(fast);
    for (std::size_t k = 0; k < n; ++k) REQUIRE(std::abs(fast[k] - direct[k]) < 1e-9);
    std::vector<std::complex<double>> bad(10);
    REQUIRE_THROWS_AS(fft_radix2(bad), std::invalid_argument);
}

TEST_CASE("zero z-scores denormalize to 160 Hz and 8 frames per phone") {
    const ContourTracks tracks = render_contours(uniform_targets(5, 0.0, 0.0, 0.0));
    REQUIRE(tracks.phone_frame_counts == std::vector<int>(5, 8));
    REQUIRE(tracks.frames() == 40);
    for (int f = 0; f < tracks.frames(); ++f) {
        REQUIRE(tracks.voiced[static_cast<std::size_t>(f)]);
        REQUIRE(tracks.f0_hz[static_cast<std::size_t>(f)] == Catch::Approx(160.0).epsilon(1e-12));
        REQUIRE(tracks.amplitude[static_cast<std::size_t>(f)] == Catch::Approx(0.3).epsilon(1e-12));
    }
}

TEST_CASE("f0 denormalization is exponential in z and clamped to [50, 500]") {
    const DenormConfig cfg;
    // z = +4: 160 * e^1 = 434.9 Hz, inside the band
    ContourTracks t = render_contours(uniform_targets(1, 4.0, 0.0, 0.0));
    REQUIRE(t.f0_hz[0] == Catch::Approx(160.0 * std::exp(1.0)).epsilon(1e-12));
    // z = +5: 160 * e^1.25 = 558.5 -> clamp at 500
    t = render_contours(uniform_targets(1, 5.0, 0.0, 0.0));
    REQUIRE(t.f0_hz[0] == cfg.f0_max_hz);
    // z = -5: 160 * e^-1.25 = 45.8 -> clamp at 50
    t = render_contours(uniform_targets(1, -5.0, 0.0, 0.0));
    REQUIRE(t.f0_hz[0] == cfg.f0_min_hz);
}

TEST_CASE("total frames equal the sum of phone durations") {
    Rng rng(7);
    ProsodyTargets t;
    for (int i = 0; i < 20; ++i) {
        t.f0_z.push_back(rng.uniform(-2.0, 2.0));
        t.energy_z.push_back(rng.uniform(-2.0, 2.0));
        t.logdur_z.push_back(rng.uniform(-2.0, 2.0));
        t.voiced_mask.push_back(rng.uniform() < 0.5);
    }
    const ContourTracks tracks = render_contours(t);
    REQUIRE(tracks.frames() == std::accumulate(tracks.phone_frame_counts.begin(), tracks.phone_frame_counts.end(), 0));
    REQUIRE(tracks.phone_frame_counts.size() == 20);
    for (int d : tracks.phone_frame_counts) REQUIRE(d >= 1);
    int frame = 0;
    for (int i = 0; i < 20; ++i) {
        for (int f = 0; f < tracks.phone_frame_counts[static_cast<std::size_t>(i)]; ++f, ++frame)
            REQUIRE(tracks.voiced[static_cast<std::size_t>(frame)] == t.voiced_mask[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("f0 interpolates linearly between voiced phone centers") {
    ProsodyTargets t = uniform_targets(2, 0.0, 0.0, 0.0);
    t.f0_z[0] = 0.0;                           // 160 Hz
    t.f0_z[1] = std::log(2.0) / 0.25;          // 320 Hz
    const ContourTracks tracks = render_contours(t);
    REQUIRE(tracks.frames() == 16);
    // centers at frames 3.5 and 11.5; check midpoint and monotonicity
    REQUIRE(tracks.f0_hz[0] == Catch::Approx(160.0).epsilon(1e-9));
    REQUIRE(tracks.f0_hz[15] == Catch::Approx(320.0).epsilon(1e-9));
    for (int f = 1; f < 16; ++f)
        REQUIRE(tracks.f0_hz[static_cast<std::size_t>(f)] >= tracks.f0_hz[static_cast<std::size_t>(f - 1)] - 1e-12);
    const double mid = tracks.f0_hz[7] + (tracks.f0_hz[8] - tracks.f0_hz[7]) / 2.0;
    REQUIRE(mid == Catch::Approx(240.0).margin(11.0));  // frame quantization slack
}

TEST_CASE("render_contours rejects non-finite targets") {
    ProsodyTargets t = uniform_targets(2, 0.0, 0.0, 0.0);
    t.energy_z[1] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(render_contours(t), std::invalid_argument);
}

TEST_CASE("synthesis length is frames times the hop size") {
    const ContourTracks tracks = render_contours(uniform_targets(6, 0.0, 0.0, 0.0));
    const Waveform wav = synthesize(tracks, 1);
    REQUIRE(wav.samples.size() == static_cast<std::size_t>(tracks.frames()) * kHopSamples);
    REQUIRE(wav.sample_rate == kSampleRate);
    for (double s : wav.samples) {
        REQUIRE(std::isfinite(s));
        REQUIRE(s >= -1.0);
        REQUIRE(s <= 1.0);
    }
}

TEST_CASE("zero amplitude synthesizes silence") {
    ProsodyTargets t = uniform_targets(4, 0.0, 0.0, 0.0);
    ContourTracks tracks = render_contours(t);
    for (double& a : tracks.amplitude) a = 0.0;
    const Waveform wav = synthesize(tracks, 3);
    for (double s : wav.samples) REQUIRE(s == 0.0);
}

TEST_CASE("unvoiced synthesis is reproducible per seed") {
    const ContourTracks tracks = render_contours(uniform_targets(5, 0.0, 0.0, 0.0, false));
    const Waveform a = synthesize(tracks, 17);
    const Waveform b = synthesize(tracks, 17);
    REQUIRE(a.samples == b.samples);
    const Waveform c = synthesize(tracks, 18);
    REQUIRE(a.samples != c.samples);
    double energy = 0.0;
    for (double s : c.samples) energy += s * s;
    REQUIRE(energy > 0.0);
}

TEST_CASE("voiced synthesis concentrates energy at harmonic bins") {
    // constant 200 Hz tone; interior 4096-sample window; >=80% of spectral
    // energy within +-2 bins of the harmonic frequencies
    ProsodyTargets t = uniform_targets(8, std::log(200.0 / 160.0) / 0.25, 0.0, 0.0);
    const ContourTracks tracks = render_contours(t);
    const Waveform wav = synthesize(tracks, 5);
    REQUIRE(wav.samples.size() >= 6096);
    const std::size_t fft_n = 4096;
    std::vector<double> frame(fft_n);
    for (std::size_t i = 0; i < fft_n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(kTau * static_cast<double>(i) / (fft_n - 1));
        frame[i] = wav.samples[1000 + i] * w;
    }
    const std::vector<double> power = power_spectrum(frame, fft_n);
    const double bin_hz = static_cast<double>(kSampleRate) / fft_n;
    double total = 0.0, near_harmonic = 0.0;
    for (std::size_t bin = 0; bin < power.size(); ++bin) {
        total += power[bin];
        const double hz = static_cast<double>(bin) * bin_hz;
        const double k = std::round(hz / 200.0);
        if (k >= 1.0 && k <= 25.0 && std::abs(hz - k * 200.0) <= 2.0 * bin_hz) near_harmonic += power[bin];
    }
    REQUIRE(near_harmonic / total >= 0.8);
}

TEST_CASE("wav round-trip stays within one quantization step") {
    Rng rng(23);
    Waveform wav;
    wav.samples.resize(2000);
    for (double& s : wav.samples) s = rng.uniform(-1.0, 1.0);
    const std::string path = "dsp_test_roundtrip.wav";
    write_wav(wav, path);
    const Waveform loaded = read_wav(path);
    REQUIRE(loaded.sample_rate == 16000);
    REQUIRE(loaded.samples.size() == wav.samples.size());
    for (std::size_t i = 0; i < wav.samples.size(); ++i)
        REQUIRE(std::abs(loaded.samples[i] - wav.samples[i]) <= 1.0 / 32767.0);
    std::remove(path.c_str());
}

TEST_CASE("wav header carries 16 kHz mono 16-bit and rejects non-RIFF input") {
    Waveform wav;
    wav.samples = {0.0, 0.5, -0.5};
    const std::string path = "dsp_test_header.wav";
    write_wav(wav, path);
    std::ifstream f(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    f.close();
    REQUIRE(bytes.size() == 44 + 6);
    REQUIRE(std::memcmp(bytes.data(), "RIFF", 4) == 0);
    REQUIRE(std::memcmp(bytes.data() + 8, "WAVE", 4) == 0);
    REQUIRE(bytes[22] == 1);                       // channels
    REQUIRE(detail::get_u32(bytes.data() + 24) == 16000);
    REQUIRE(bytes[34] == 16);                      // bits per sample
    std::remove(path.c_str());

    const std::string bad = "dsp_test_bad.wav";
    {
        std::ofstream out(bad, std::ios::binary);
        out << "this is not audio";
    }
    REQUIRE_THROWS_AS(read_wav(bad), std::runtime_error);
    std::remove(bad.c_str());
}

TEST_CASE("silence produces floor-valued mel bins") {
    Waveform wav;
    wav.samples.assign(16000, 0.0);
    const std::vector<std::vector<double>> mel = mel_spectrogram(wav);
    REQUIRE(!mel.empty());
    const double floor_db = std::log(kMelFloor);
    for (const std::vector<double>& frame : mel) {
        REQUIRE(frame.size() == kMelBands);
        for (double v : frame) REQUIRE(v == floor_db);
    }
}

TEST_CASE("mel frame count follows the hop arithmetic") {
    Waveform wav;
    wav.samples.assign(160 * 50, 0.0);
    REQUIRE(mel_spectrogram(wav).size() == 48);  // (N - 400)/160 + 1
    wav.samples.assign(399, 0.0);
    REQUIRE(mel_spectrogram(wav).empty());
}

TEST_CASE("a 1 kHz sine peaks in the mel band nearest 1 kHz") {
    const Waveform wav = sine_wave(1000.0, 0.5);
    const std::vector<std::vector<double>> mel = mel_spectrogram(wav);
    REQUIRE(mel.size() > 10);
    // oracle: band whose triangular peak is nearest 1 kHz in mel space
    const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(8000.0);
    int expected = 0;
    double best = 1e18;
    for (int m = 0; m < kMelBands; ++m) {
        const double peak_mel = mel_lo + (mel_hi - mel_lo) * (m + 1) / (kMelBands + 1);
        const double d = std::abs(peak_mel - hz_to_mel(1000.0));
        if (d < best) {
            best = d;
            expected = m;
        }
    }
    for (std::size_t f = 5; f < mel.size() - 5; ++f) {
        const int argmax =
            static_cast<int>(std::max_element(mel[f].begin(), mel[f].end()) - mel[f].begin());
        REQUIRE(argmax == expected);
    }
}

TEST_CASE("doubling amplitude raises above-floor mel bins by 2 ln 2") {
    Rng rng(41);
    Waveform wav;
    wav.samples.resize(8000);
    for (double& s : wav.samples) s = 0.2 * rng.uniform(-1.0, 1.0) + 0.2 * std::sin(kTau * 440.0 * (&s - wav.samples.data()) / kSampleRate);
    Waveform loud = wav;
    for (double& s : loud.samples) s *= 2.0;
    const auto quiet_mel = mel_spectrogram(wav);
    const auto loud_mel = mel_spectrogram(loud);
    const double floor_db = std::log(kMelFloor);
    int checked = 0;
    for (std::size_t f = 0; f < quiet_mel.size(); ++f) {
        for (int m = 0; m < kMelBands; ++m) {
            const double q = quiet_mel[f][static_cast<std::size_t>(m)];
            const double l = loud_mel[f][static_cast<std::size_t>(m)];
            if (q <= floor_db + 2.0 || l <= floor_db + 2.0) continue;  // floored bins exempt
            REQUIRE(l - q == Catch::Approx(2.0 * std::log(2.0)).margin(1e-6));
            ++checked;
        }
    }
    REQUIRE(checked > 100);
}

TEST_CASE("constant log-mel frame yields only c0") {
    std::vector<std::vector<double>> mel = {std::vector<double>(kMelBands, 2.5)};
    const auto coeffs = mfcc(mel);
    REQUIRE(coeffs.size() == 1);
    REQUIRE(coeffs[0].size() == kMfccCount);
    REQUIRE(coeffs[0][0] == Catch::Approx(2.5 * std::sqrt(80.0)).epsilon(1e-12));
    for (int k = 1; k < kMfccCount; ++k) REQUIRE(std::abs(coeffs[0][static_cast<std::size_t>(k)]) < 1e-12);
}

TEST_CASE("zero log-mel frame yields all-zero coefficients") {
    std::vector<std::vector<double>> mel = {std::vector<double>(kMelBands, 0.0)};
    const std::vector<double> coeffs = mfcc(mel)[0];
    for (double v : coeffs) REQUIRE(v == 0.0);
}

TEST_CASE("the full 80-coefficient DCT basis reconstructs frames") {
    constexpr double kPi = 3.141592653589793;
    Rng rng(59);
    std::vector<double> frame(kMelBands);
    for (double& v : frame) v = rng.uniform(-3.0, 3.0);
    // full-basis DCT-II then inverse via the transposed orthonormal basis
    std::vector<double> coeffs(kMelBands, 0.0);
    for (int k = 0; k < kMelBands; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / kMelBands);
        for (int n = 0; n < kMelBands; ++n)
            coeffs[static_cast<std::size_t>(k)] +=
                scale * std::cos(kPi * k * (2 * n + 1) / (2.0 * kMelBands)) * frame[static_cast<std::size_t>(n)];
    }
    for (int n = 0; n < kMelBands; ++n) {
        double rec = 0.0;
        for (int k = 0; k < kMelBands; ++k) {
            const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / kMelBands);
            rec += scale * std::cos(kPi * k * (2 * n + 1) / (2.0 * kMelBands)) * coeffs[static_cast<std::size_t>(k)];
        }
        REQUIRE(rec == Catch::Approx(frame[static_cast<std::size_t>(n)]).margin(1e-5));
    }
    // the production mfcc() coefficients agree with the first 25 of the full basis
    const auto produced = mfcc({frame})[0];
    for (int k = 0; k < kMfccCount; ++k)
        REQUIRE(produced[static_cast<std::size_t>(k)] == Catch::Approx(coeffs[static_cast<std::size_t>(k)]).margin(1e-12));
}

TEST_CASE("frame matrices round-trip through jsonl") {
    std::vector<std::vector<double>> frames = {{1.0, 2.5, -3.0}, {0.0, 1e-9, 42.0}};
    const std::string path = "dsp_test_frames.jsonl";
    write_frames_jsonl(frames, path);
    REQUIRE(read_frames_jsonl(path) == frames);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "not json\n";
    }
    REQUIRE_THROWS_AS(read_frames_jsonl(path), std::runtime_error);
    std::remove(path.c_str());
}
