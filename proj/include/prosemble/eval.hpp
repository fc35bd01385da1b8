#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prosemble/afp.hpp"
#include "prosemble/common.hpp"
#include "prosemble/corpus.hpp"
#include "prosemble/criteria.hpp"
#include "prosemble/rng.hpp"

namespace prosemble {

enum class Choice { A, B, Undecided };

inline std::string choice_name(Choice c) {
    switch (c) {
        case Choice::A: return "A";
        case Choice::B: return "B";
        case Choice::Undecided: return "Undecided";
    }
    throw std::logic_error("unreachable choice");
}

inline Choice choice_from_name(const std::string& name) {
    if (name == "A") return Choice::A;
    if (name == "B") return Choice::B;
    if (name == "Undecided") return Choice::Undecided;
    throw std::invalid_argument("unknown choice '" + name + "'");
}

struct PreferenceRecord {
    std::string utterance_id;
    int listener_id = 0;
    Choice choice = Choice::Undecided;

    bool operator==(const PreferenceRecord&) const = default;
};

// Simulated listener panel. Negative sigma/margin request calibration from
// the proxy-score spread: sigma = 0.5 and margin = 0.2 times the median
// |s_A − s_B| (absolute thresholds cannot suit the squared-Hz proxy scale
// across configs).
struct PanelConfig {
    int listeners = 30;
    double noise_sigma = -1.0;
    double undecided_margin = -1.0;

    nlohmann::json to_json() const {
        return {{"listeners", listeners}, {"noise_sigma", noise_sigma}, {"undecided_margin", undecided_margin}};
    }

    static PanelConfig from_json(const nlohmann::json& j) {
        PanelConfig cfg;
        cfg.listeners = j.at("listeners").get<int>();
        cfg.noise_sigma = j.at("noise_sigma").get<double>();
        cfg.undecided_margin = j.at("undecided_margin").get<double>();
        return cfg;
    }
};

// One resolved listener: the panel's noise/margin plus a private stream seed.
struct ListenerModel {
    double noise_sigma = 0.0;
    double undecided_margin = 0.0;
    std::uint64_t seed = 0;
};

enum class ExpressivityProxy { ContourF0Variance, DurationVariance, Random };

inline std::string proxy_name(ExpressivityProxy p) {
    switch (p) {
        case ExpressivityProxy::ContourF0Variance: return "contour-f0-variance";
        case ExpressivityProxy::DurationVariance: return "duration-variance";
        case ExpressivityProxy::Random: return "random";
    }
    throw std::logic_error("unreachable proxy");
}

inline ExpressivityProxy proxy_from_name(const std::string& name) {
    if (name == "contour-f0-variance") return ExpressivityProxy::ContourF0Variance;
    if (name == "duration-variance") return ExpressivityProxy::DurationVariance;
    if (name == "random") return ExpressivityProxy::Random;
    throw std::invalid_argument("unknown expressivity proxy '" + name + "'");
}

// What the simulated listener "hears" in one rendition.
inline double expressivity_score(Rendition& r, ExpressivityProxy proxy, Rng& random_stream) {
    switch (proxy) {
        case ExpressivityProxy::ContourF0Variance: {
            const ContourTracks& tracks = r.contours();
            std::vector<double> voiced_f0;
            for (std::size_t i = 0; i < tracks.f0_hz.size(); ++i) {
                if (tracks.voiced[i]) voiced_f0.push_back(tracks.f0_hz[i]);
            }
            if (voiced_f0.empty()) return 0.0;
            return detail::population_variance(voiced_f0);
        }
        case ExpressivityProxy::DurationVariance: {
            if (r.predicted().logdur_z.empty()) return 0.0;
            return detail::population_variance(r.predicted().logdur_z);
        }
        case ExpressivityProxy::Random:
            return random_stream.uniform();
    }
    throw std::logic_error("unreachable proxy");
}

struct ProxyScores {
    std::string utterance_id;
    double s_a = 0.0;
    double s_b = 0.0;
};

inline std::vector<ProxyScores> build_proxy_scores(std::vector<std::pair<Rendition*, Rendition*>>& pairs,
                                                   ExpressivityProxy proxy, std::uint64_t seed) {
    Rng random_stream(derive_seed(seed, "proxy-random"));
    std::vector<ProxyScores> scores;
    scores.reserve(pairs.size());
    for (auto& [a, b] : pairs) {
        if (a->utterance_id() != b->utterance_id())
            throw std::invalid_argument("proxy scoring: renditions belong to different utterances");
        scores.push_back({a->utterance_id(), expressivity_score(*a, proxy, random_stream),
                          expressivity_score(*b, proxy, random_stream)});
    }
    return scores;
}

// Resolves calibration sentinels against the observed proxy spread.
inline std::pair<double, double> resolve_panel(const PanelConfig& panel, const std::vector<ProxyScores>& pairs) {
    if (panel.noise_sigma >= 0.0 && panel.undecided_margin >= 0.0)
        return {panel.noise_sigma, panel.undecided_margin};
    std::vector<double> gaps;
    gaps.reserve(pairs.size());
    for (const ProxyScores& p : pairs) gaps.push_back(std::abs(p.s_a - p.s_b));
    std::sort(gaps.begin(), gaps.end());
    const double median = gaps.empty() ? 0.0
                          : gaps.size() % 2 == 1
                              ? gaps[gaps.size() / 2]
                              : 0.5 * (gaps[gaps.size() / 2 - 1] + gaps[gaps.size() / 2]);
    const double sigma = panel.noise_sigma >= 0.0 ? panel.noise_sigma : 0.5 * median;
    const double margin = panel.undecided_margin >= 0.0 ? panel.undecided_margin : 0.2 * median;
    return {sigma, margin};
}

// A/B preference simulation: each listener perceives Δ = s_A − s_B plus
// private Gaussian noise, answers Undecided inside the margin (Δ = 0 counts
// as undecided), otherwise prefers the larger side. Exactly
// listeners × utterances records, deterministic per seed.
inline std::vector<PreferenceRecord> simulate_preferences(const std::vector<ProxyScores>& pairs,
                                                          const PanelConfig& panel, std::uint64_t seed) {
    if (pairs.empty()) throw std::invalid_argument("simulate_preferences: empty pair set");
    if (panel.listeners < 1) throw std::invalid_argument("simulate_preferences: need at least one listener");
    const auto [sigma, margin] = resolve_panel(panel, pairs);
    std::vector<PreferenceRecord> records;
    records.reserve(static_cast<std::size_t>(panel.listeners) * pairs.size());
    for (int l = 0; l < panel.listeners; ++l) {
        const ListenerModel listener{sigma, margin, derive_seed(seed, "listener-" + std::to_string(l))};
        Rng rng(listener.seed);
        for (const ProxyScores& pair : pairs) {
            const double delta = pair.s_a - pair.s_b + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
            Choice choice = Choice::Undecided;
            if (std::abs(delta) >= margin && delta != 0.0) choice = delta > 0.0 ? Choice::A : Choice::B;
            records.push_back({pair.utterance_id, l, choice});
        }
    }
    return records;
}

// Convenience form: score the rendition pairs with the proxy, then run the
// panel over the resulting gaps.
inline std::vector<PreferenceRecord> simulate_preferences(std::vector<std::pair<Rendition*, Rendition*>>& pairs,
                                                          const PanelConfig& panel, ExpressivityProxy proxy,
                                                          std::uint64_t seed) {
    return simulate_preferences(build_proxy_scores(pairs, proxy, seed), panel, seed);
}

// Negative-control panel: every listener's reading of every pair is an
// independent uniform score draw, so decided control votes are fair coin
// flips record by record and per-record confidence intervals stay valid no
// matter how few utterances there are. (A per-utterance random proxy would
// instead freeze one random gap per utterance across all listeners, shrinking
// the effective sample to the utterance count.) Calibration sentinels resolve
// against the analytic median gap of two independent uniforms, 1 - sqrt(1/2).
inline std::vector<PreferenceRecord> simulate_random_control(const std::vector<std::string>& utterance_ids,
                                                             const PanelConfig& panel, std::uint64_t seed) {
    if (utterance_ids.empty()) throw std::invalid_argument("simulate_random_control: empty utterance set");
    if (panel.listeners < 1) throw std::invalid_argument("simulate_random_control: need at least one listener");
    const double median_gap = 1.0 - std::sqrt(0.5);
    const double sigma = panel.noise_sigma >= 0.0 ? panel.noise_sigma : 0.5 * median_gap;
    const double margin = panel.undecided_margin >= 0.0 ? panel.undecided_margin : 0.2 * median_gap;
    std::vector<PreferenceRecord> records;
    records.reserve(static_cast<std::size_t>(panel.listeners) * utterance_ids.size());
    for (int l = 0; l < panel.listeners; ++l) {
        Rng rng(derive_seed(seed, "listener-" + std::to_string(l)));
        for (const std::string& id : utterance_ids) {
            const double s_a = rng.uniform();
            const double s_b = rng.uniform();
            const double delta = s_a - s_b + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
            Choice choice = Choice::Undecided;
            if (std::abs(delta) >= margin && delta != 0.0) choice = delta > 0.0 ? Choice::A : Choice::B;
            records.push_back({id, l, choice});
        }
    }
    return records;
}

struct AccuracyResult {
    std::optional<double> rate;  // empty when no record was decided
    long long matched = 0;
    long long considered = 0;
    long long excluded = 0;

    long long total() const { return considered + excluded; }
};

// Per-response accuracy of a per-utterance choice map against listener
// records; Undecided responses are excluded from the denominator.
inline AccuracyResult accuracy(const std::map<std::string, int>& chosen_index,
                               const std::vector<PreferenceRecord>& records) {
    AccuracyResult result;
    for (const PreferenceRecord& rec : records) {
        if (rec.choice == Choice::Undecided) {
            ++result.excluded;
            continue;
        }
        const auto it = chosen_index.find(rec.utterance_id);
        if (it == chosen_index.end())
            throw std::invalid_argument("accuracy: no criterion choice for utterance '" + rec.utterance_id + "'");
        ++result.considered;
        const int preferred = rec.choice == Choice::A ? 0 : 1;
        if (preferred == it->second) ++result.matched;
    }
    if (result.considered > 0) result.rate = static_cast<double>(result.matched) / static_cast<double>(result.considered);
    return result;
}

struct OracleSelection {
    std::map<std::string, int> chosen;        // utterance → 0 (A) or 1 (B)
    std::set<std::string> excluded_utterances;  // Undecided-modal or A/B tie
};

// Majority vote per utterance. An utterance is kept only when the winning
// A/B count strictly exceeds both the other side and the Undecided count;
// otherwise all its ratings are excluded.
inline OracleSelection oracle_select(const std::vector<PreferenceRecord>& records) {
    std::map<std::string, std::array<long long, 3>> counts;  // A, B, U
    for (const PreferenceRecord& rec : records) {
        auto& c = counts[rec.utterance_id];
        c[rec.choice == Choice::A ? 0 : rec.choice == Choice::B ? 1 : 2] += 1;
    }
    OracleSelection sel;
    for (const auto& [utt, c] : counts) {
        const long long best_ab = std::max(c[0], c[1]);
        if (best_ab > c[2] && c[0] != c[1]) {
            sel.chosen[utt] = c[0] > c[1] ? 0 : 1;
        } else {
            sel.excluded_utterances.insert(utt);
        }
    }
    return sel;
}

// Accuracy of the oracle over the records of non-excluded utterances.
inline AccuracyResult oracle_accuracy(const std::vector<PreferenceRecord>& records) {
    const OracleSelection sel = oracle_select(records);
    std::vector<PreferenceRecord> kept;
    for (const PreferenceRecord& rec : records) {
        if (!sel.excluded_utterances.contains(rec.utterance_id)) kept.push_back(rec);
    }
    AccuracyResult result;
    if (kept.empty()) {
        result.excluded = static_cast<long long>(records.size());
        return result;
    }
    result = accuracy(sel.chosen, kept);
    result.excluded += static_cast<long long>(records.size() - kept.size());
    return result;
}

// ---- diversity (A/B "do they sound different?" analogue) ------------------

struct PairDiversity {
    std::string utterance_id;
    double mean_abs_df0 = 0.0;     // voiced phones only
    double mean_abs_dlogdur = 0.0;
    double mean_abs_denergy = 0.0;
    bool different = false;

    double max_metric() const { return std::max({mean_abs_df0, mean_abs_dlogdur, mean_abs_denergy}); }
};

struct DiversityReport {
    std::vector<PairDiversity> pairs;
    double fraction_different = 0.0;
};

// Compares the two members' predictions per utterance; a pair is "different"
// when some metric reaches tau (and is nonzero, so tau = 0 still reports
// identical members as not different).
inline DiversityReport diversity_report(const Ensemble& ensemble, const std::vector<Utterance>& test_set,
                                        double tau = 0.5) {
    if (ensemble.members.size() != 2) throw std::invalid_argument("diversity: need a 2-member ensemble");
    DiversityReport report;
    long long different = 0;
    for (const Utterance& utt : test_set) {
        const ProsodyTargets a = predict(ensemble.members[0], utt);
        const ProsodyTargets b = predict(ensemble.members[1], utt);
        PairDiversity pd;
        pd.utterance_id = utt.id;
        double df0 = 0.0;
        long long voiced = 0;
        double dlogdur = 0.0, denergy = 0.0;
        for (int i = 0; i < a.size(); ++i) {
            const std::size_t si = static_cast<std::size_t>(i);
            if (a.voiced_mask[si]) {
                df0 += std::abs(a.f0_z[si] - b.f0_z[si]);
                ++voiced;
            }
            dlogdur += std::abs(a.logdur_z[si] - b.logdur_z[si]);
            denergy += std::abs(a.energy_z[si] - b.energy_z[si]);
        }
        pd.mean_abs_df0 = voiced > 0 ? df0 / static_cast<double>(voiced) : 0.0;
        pd.mean_abs_dlogdur = a.size() > 0 ? dlogdur / a.size() : 0.0;
        pd.mean_abs_denergy = a.size() > 0 ? denergy / a.size() : 0.0;
        pd.different = pd.max_metric() >= tau && pd.max_metric() > 0.0;
        if (pd.different) ++different;
        report.pairs.push_back(std::move(pd));
    }
    report.fraction_different =
        report.pairs.empty() ? 0.0 : static_cast<double>(different) / static_cast<double>(report.pairs.size());
    return report;
}

// ---- persistence -----------------------------------------------------------

inline void write_records_jsonl(const std::vector<PreferenceRecord>& records, const std::string& path,
                                const nlohmann::json& provenance_header = nlohmann::json()) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("records: cannot write " + path);
    if (provenance_header.is_object()) out << provenance_header.dump() << '\n';
    for (const PreferenceRecord& rec : records) {
        out << nlohmann::json{{"utterance_id", rec.utterance_id},
                              {"listener_id", rec.listener_id},
                              {"choice", choice_name(rec.choice)}}
                   .dump()
            << '\n';
    }
}

inline std::vector<PreferenceRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("records: cannot read " + path);
    std::vector<PreferenceRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            if (j.is_object() && j.contains("format_version")) continue;  // provenance header line
            records.push_back({j.at("utterance_id").get<std::string>(), j.at("listener_id").get<int>(),
                               choice_from_name(j.at("choice").get<std::string>())});
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("records line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace prosemble
