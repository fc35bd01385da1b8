#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prosemble/corpus.hpp"
#include "prosemble/dsp.hpp"
#include "prosemble/pitch.hpp"

namespace prosemble {

enum class CriterionKind { GV, WAV_F0, AFP_F0 };
enum class Polarity { Highest, Lowest };

inline std::string criterion_name(CriterionKind kind) {
    switch (kind) {
        case CriterionKind::GV: return "gv";
        case CriterionKind::WAV_F0: return "wav-f0";
        case CriterionKind::AFP_F0: return "afp-f0";
    }
    throw std::logic_error("unreachable criterion kind");
}

inline CriterionKind criterion_from_name(const std::string& name) {
    if (name == "gv") return CriterionKind::GV;
    if (name == "wav-f0") return CriterionKind::WAV_F0;
    if (name == "afp-f0") return CriterionKind::AFP_F0;
    throw std::invalid_argument("unknown criterion '" + name + "'");
}

inline std::string polarity_name(Polarity p) { return p == Polarity::Highest ? "highest" : "lowest"; }

inline Polarity polarity_from_name(const std::string& name) {
    if (name == "highest") return Polarity::Highest;
    if (name == "lowest") return Polarity::Lowest;
    throw std::invalid_argument("unknown polarity '" + name + "'");
}

struct StageCounters {
    int afp_forwards = 0;
    int synth_calls = 0;
    int mel_calls = 0;
    int pitch_calls = 0;
};

// One ensemble member's output chain for an utterance. Downstream stages
// (contours → waveform → mel/MFCC, waveform → pitch) are computed on first
// use and memoized; the counters record actual computations so the relative
// cost of the criteria is observable. Memoization is not locked: a Rendition
// is confined to a single worker (the pipeline shards work by utterance).
class Rendition {
public:
    Rendition(std::string utterance_id, int member_index, ProsodyTargets predicted, DenormConfig denorm = {},
              std::uint64_t noise_seed = 0, int forwards_performed = 1)
        : utterance_id_(std::move(utterance_id)),
          member_index_(member_index),
          predicted_(std::move(predicted)),
          denorm_(denorm),
          noise_seed_(noise_seed) {
        if (member_index_ != 0 && member_index_ != 1) throw std::invalid_argument("rendition: member_index must be 0 or 1");
        counters_.afp_forwards = forwards_performed;
    }

    const std::string& utterance_id() const { return utterance_id_; }
    int member_index() const { return member_index_; }
    const ProsodyTargets& predicted() const { return predicted_; }
    const StageCounters& counters() const { return counters_; }

    const ContourTracks& contours() {
        if (!contours_) contours_ = render_contours(predicted_, denorm_);
        return *contours_;
    }

    const Waveform& waveform() {
        if (!waveform_) {
            waveform_ = synthesize(contours(), noise_seed_);
            ++counters_.synth_calls;
        }
        return *waveform_;
    }

    const std::vector<std::vector<double>>& mel() {
        if (!mel_) {
            mel_ = mel_spectrogram(waveform());
            ++counters_.mel_calls;
        }
        return *mel_;
    }

    const std::vector<std::vector<double>>& mfcc_matrix() {
        if (!mfcc_) mfcc_ = mfcc(mel());
        return *mfcc_;
    }

    const PitchTrack& pitch() {
        if (!pitch_) {
            pitch_ = track_pitch(waveform());
            ++counters_.pitch_calls;
        }
        return *pitch_;
    }

private:
    std::string utterance_id_;
    int member_index_;
    ProsodyTargets predicted_;
    DenormConfig denorm_;
    std::uint64_t noise_seed_;
    StageCounters counters_;
    std::optional<ContourTracks> contours_;
    std::optional<Waveform> waveform_;
    std::optional<std::vector<std::vector<double>>> mel_;
    std::optional<std::vector<std::vector<double>>> mfcc_;
    std::optional<PitchTrack> pitch_;
};

namespace detail {

// Two-pass population variance.
inline double population_variance(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(values.size());
}

}  // namespace detail

// Global variance of a frame-major coefficient matrix: per-coefficient
// population variance across frames, summed over coefficients.
// `mean_over_coefficients` switches to the mean-then-sum reading, which
// rescales every score by the same constant and can never change a selection.
// Unscorable (nullopt) with fewer than 2 frames.
inline std::optional<double> gv_of_matrix(const std::vector<std::vector<double>>& coeffs,
                                          bool mean_over_coefficients = false) {
    if (coeffs.size() < 2) return std::nullopt;
    const std::size_t num_coeffs = coeffs.front().size();
    double total = 0.0;
    std::vector<double> column(coeffs.size());
    for (std::size_t c = 0; c < num_coeffs; ++c) {
        for (std::size_t t = 0; t < coeffs.size(); ++t) column[t] = coeffs[t][c];
        total += detail::population_variance(column);
    }
    if (mean_over_coefficients && num_coeffs > 0) total /= static_cast<double>(num_coeffs);
    return total;
}

inline std::optional<double> gv_score(Rendition& r, bool mean_over_coefficients = false) {
    return gv_of_matrix(r.mfcc_matrix(), mean_over_coefficients);
}

// Variance of F0 as re-estimated from the synthesized waveform (Hz²).
// Unscorable when the tracker finds no voiced frames.
inline std::optional<double> wav_f0_score(Rendition& r) { return f0_variance(r.pitch()); }

// Variance of the predicted f0_z values across voiced phones. Touches no
// synthesis stage.
inline std::optional<double> afp_f0_score(const Rendition& r) {
    const ProsodyTargets& t = r.predicted();
    std::vector<double> voiced;
    for (int i = 0; i < t.size(); ++i) {
        if (t.voiced_mask[static_cast<std::size_t>(i)]) voiced.push_back(t.f0_z[static_cast<std::size_t>(i)]);
    }
    if (voiced.empty()) return std::nullopt;
    return detail::population_variance(voiced);
}

inline std::optional<double> score_rendition(Rendition& r, CriterionKind kind, bool gv_mean_over_coefficients = false) {
    switch (kind) {
        case CriterionKind::GV: return gv_score(r, gv_mean_over_coefficients);
        case CriterionKind::WAV_F0: return wav_f0_score(r);
        case CriterionKind::AFP_F0: return afp_f0_score(r);
    }
    throw std::logic_error("unreachable criterion kind");
}

struct SelectionResult {
    int chosen_index = 0;
    std::array<std::optional<double>, 2> scores;
    bool tie = false;
    bool unscorable = false;

    nlohmann::json to_json() const {
        nlohmann::json score_arr = nlohmann::json::array();
        for (const std::optional<double>& s : scores) {
            if (s) {
                score_arr.push_back(*s);
            } else {
                score_arr.push_back(nullptr);
            }
        }
        return {{"chosen_index", chosen_index}, {"scores", score_arr}, {"tie", tie}, {"unscorable", unscorable}};
    }
};

// Selection semantics on a pair of already-computed scores: exact tie →
// index 0 with tie=true; an unscorable side loses to a scorable one; both
// unscorable → index 0 with unscorable=true.
inline SelectionResult select_scores(std::optional<double> score_a, std::optional<double> score_b,
                                     Polarity polarity = Polarity::Highest) {
    SelectionResult result;
    result.scores[0] = score_a;
    result.scores[1] = score_b;
    const bool ok0 = score_a.has_value();
    const bool ok1 = score_b.has_value();
    if (!ok0 && !ok1) {
        result.chosen_index = 0;
        result.unscorable = true;
    } else if (ok0 != ok1) {
        result.chosen_index = ok0 ? 0 : 1;
        result.unscorable = true;
    } else if (*score_a == *score_b) {
        result.chosen_index = 0;
        result.tie = true;
    } else {
        const bool first_wins = polarity == Polarity::Highest ? *score_a > *score_b : *score_a < *score_b;
        result.chosen_index = first_wins ? 0 : 1;
    }
    return result;
}

// Scores both renditions of one utterance and picks per the polarity.
inline SelectionResult select(Rendition& a, Rendition& b, CriterionKind kind, Polarity polarity = Polarity::Highest) {
    if (a.utterance_id() != b.utterance_id())
        throw std::invalid_argument("select: renditions belong to different utterances ('" + a.utterance_id() +
                                    "' vs '" + b.utterance_id() + "')");
    return select_scores(score_rendition(a, kind), score_rendition(b, kind), polarity);
}

}  // namespace prosemble
