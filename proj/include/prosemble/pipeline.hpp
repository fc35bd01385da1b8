#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prosemble/afp.hpp"
#include "prosemble/corpus.hpp"
#include "prosemble/criteria.hpp"
#include "prosemble/eval.hpp"
#include "prosemble/stats.hpp"
#include "prosemble/wav.hpp"

namespace prosemble {

constexpr int kPipelineFormatVersion = 1;

struct SeedSet {
    std::uint64_t corpus = 1;
    std::uint64_t train_a = 2;
    std::uint64_t train_b = 3;
    std::uint64_t panel = 4;
    std::uint64_t noise = 5;

    nlohmann::json to_json() const {
        return {{"corpus", corpus}, {"train_a", train_a}, {"train_b", train_b}, {"panel", panel}, {"noise", noise}};
    }

    static SeedSet from_json(const nlohmann::json& j) {
        SeedSet s;
        s.corpus = j.value("corpus", s.corpus);
        s.train_a = j.value("train_a", s.train_a);
        s.train_b = j.value("train_b", s.train_b);
        s.panel = j.value("panel", s.panel);
        s.noise = j.value("noise", s.noise);
        return s;
    }
};

struct CriterionSpec {
    CriterionKind kind = CriterionKind::AFP_F0;
    Polarity polarity = Polarity::Highest;

    nlohmann::json to_json() const {
        return {{"criterion", criterion_name(kind)}, {"polarity", polarity_name(polarity)}};
    }

    static CriterionSpec from_json(const nlohmann::json& j) {
        CriterionSpec s;
        s.kind = criterion_from_name(j.at("criterion").get<std::string>());
        if (j.contains("polarity")) s.polarity = polarity_from_name(j.at("polarity").get<std::string>());
        return s;
    }
};

inline std::string default_ensemble_label(Architecture a, Architecture b) {
    if (a == Architecture::Recurrent && b == Architecture::Recurrent) return "RNN-2";
    if (a == Architecture::Convolutional && b == Architecture::Convolutional) return "CONV-2";
    return "RNN-CONV";
}

// One study end to end: corpus, two trained members, criteria with
// polarities, listener panel, seeds, output location.
struct RunConfig {
    CorpusConfig corpus;
    TrainConfig training;
    Architecture arch_a = Architecture::Recurrent;
    Architecture arch_b = Architecture::Recurrent;
    std::string ensemble_label;  // empty → derived from the architectures
    std::vector<CriterionSpec> criteria = {{CriterionKind::GV, Polarity::Highest},
                                           {CriterionKind::WAV_F0, Polarity::Highest},
                                           {CriterionKind::AFP_F0, Polarity::Highest}};
    PanelConfig panel;
    ExpressivityProxy proxy = ExpressivityProxy::ContourF0Variance;
    double diversity_tau = 0.5;
    bool gv_mean_over_coefficients = false;
    SeedSet seeds;
    std::string out_dir = "out";
    int workers = 4;

    std::string label() const { return ensemble_label.empty() ? default_ensemble_label(arch_a, arch_b) : ensemble_label; }

    nlohmann::json to_json() const {
        nlohmann::json crits = nlohmann::json::array();
        for (const CriterionSpec& c : criteria) crits.push_back(c.to_json());
        return {{"corpus", corpus.to_json()},
                {"training", training.to_json()},
                {"arch_a", architecture_name(arch_a)},
                {"arch_b", architecture_name(arch_b)},
                {"ensemble_label", label()},
                {"criteria", crits},
                {"panel", panel.to_json()},
                {"proxy", proxy_name(proxy)},
                {"diversity_tau", diversity_tau},
                {"gv_mean_over_coefficients", gv_mean_over_coefficients},
                {"seeds", seeds.to_json()},
                {"out_dir", out_dir},
                {"workers", workers}};
    }

    static RunConfig from_json(const nlohmann::json& j) { return from_json(j, RunConfig()); }

    // Overlay: fields present in `j` replace those of `base`, everything
    // else keeps the base (profile) value, down to individual nested fields.
    static RunConfig from_json(const nlohmann::json& j, RunConfig cfg) {
        const auto merged = [&](const nlohmann::json& current, const char* key) {
            nlohmann::json m = current;
            m.update(j.at(key));
            return m;
        };
        if (j.contains("corpus")) cfg.corpus = CorpusConfig::from_json(merged(cfg.corpus.to_json(), "corpus"));
        if (j.contains("training")) cfg.training = TrainConfig::from_json(merged(cfg.training.to_json(), "training"));
        if (j.contains("arch_a")) cfg.arch_a = architecture_from_name(j.at("arch_a").get<std::string>());
        if (j.contains("arch_b")) cfg.arch_b = architecture_from_name(j.at("arch_b").get<std::string>());
        cfg.ensemble_label = j.value("ensemble_label", std::string());
        if (j.contains("criteria")) {
            cfg.criteria.clear();
            for (const nlohmann::json& c : j.at("criteria")) cfg.criteria.push_back(CriterionSpec::from_json(c));
        }
        if (j.contains("panel")) cfg.panel = PanelConfig::from_json(merged(cfg.panel.to_json(), "panel"));
        if (j.contains("proxy")) cfg.proxy = proxy_from_name(j.at("proxy").get<std::string>());
        cfg.diversity_tau = j.value("diversity_tau", cfg.diversity_tau);
        cfg.gv_mean_over_coefficients = j.value("gv_mean_over_coefficients", cfg.gv_mean_over_coefficients);
        if (j.contains("seeds")) cfg.seeds = SeedSet::from_json(merged(cfg.seeds.to_json(), "seeds"));
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        cfg.workers = j.value("workers", cfg.workers);
        return cfg;
    }

    // Location and parallelism do not change what is computed, so they stay
    // out of the digest that artifacts embed (and out of results.json).
    nlohmann::json canonical_json() const {
        nlohmann::json j = to_json();
        j.erase("out_dir");
        j.erase("workers");
        return j;
    }

    std::string digest() const { return hex64(fnv1a64(canonical_json().dump())); }

    void validate() const {
        corpus.validate();
        if (criteria.empty()) throw std::invalid_argument("run config: no criteria listed");
        if (arch_a == arch_b && seeds.train_a == seeds.train_b)
            throw std::invalid_argument("run config: homogeneous ensemble needs distinct member seeds");
        if (workers < 1) throw std::invalid_argument("run config: need at least one worker");
        if (diversity_tau < 0.0) throw std::invalid_argument("run config: negative diversity tau");
    }

    // Small-and-fast defaults: completes in minutes on one desk machine.
    static RunConfig smoke_profile() {
        RunConfig cfg;
        cfg.corpus.train_utterances = 100;
        cfg.corpus.val_utterances = 20;
        cfg.corpus.test_utterances = 10;
        cfg.corpus.min_phones = 6;
        cfg.corpus.max_phones = 16;
        cfg.training.iterations = 1000;
        cfg.training.val_interval = 100;
        cfg.panel.listeners = 10;
        return cfg;
    }

    // Full-scale study: 30 test utterances x 30 listeners, full training.
    static RunConfig full_profile() {
        RunConfig cfg;
        cfg.corpus.train_utterances = 500;
        cfg.corpus.val_utterances = 50;
        cfg.corpus.test_utterances = 30;
        cfg.corpus.min_phones = 8;
        cfg.corpus.max_phones = 24;
        cfg.training.iterations = 5000;
        cfg.training.val_interval = 250;
        cfg.panel.listeners = 30;
        return cfg;
    }
};

inline nlohmann::json provenance(const RunConfig& cfg) {
    return {{"format_version", kPipelineFormatVersion}, {"config_digest", cfg.digest()}, {"seeds", cfg.seeds.to_json()}};
}

namespace detail {

// Index-sharded worker pool; results keyed by index stay deterministic
// regardless of scheduling.
inline void parallel_for(int n, int workers, const std::function<void(int)>& body) {
    if (n <= 0) return;
    const int pool_size = std::max(1, std::min(workers, n));
    if (pool_size == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(pool_size));
    for (int w = 0; w < pool_size; ++w) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const int i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace detail

// ---- artifact paths --------------------------------------------------------

struct OutPaths {
    std::filesystem::path root;

    explicit OutPaths(const std::string& out_dir) : root(out_dir) {}

    std::string corpus() const { return (root / "corpus.jsonl").string(); }
    std::string checkpoint(int member) const { return (root / (member == 0 ? "afp_a.ckpt" : "afp_b.ckpt")).string(); }
    std::string loss_log(int member) const { return (root / (member == 0 ? "loss_a.jsonl" : "loss_b.jsonl")).string(); }
    std::string ensemble() const { return (root / "ensemble.json").string(); }
    std::string renders_dir() const { return (root / "renders").string(); }
    std::string render_wav(const std::string& utt_id, int member) const {
        return (std::filesystem::path(renders_dir()) / (utt_id + (member == 0 ? ".a.wav" : ".b.wav"))).string();
    }
    std::string renders_manifest() const { return (root / "renders.json").string(); }
    std::string features() const { return (root / "features.jsonl").string(); }
    std::string scores() const { return (root / "scores.jsonl").string(); }
    std::string records() const { return (root / "records.jsonl").string(); }
    std::string control_records() const { return (root / "control_records.jsonl").string(); }
    std::string results() const { return (root / "results.json").string(); }
    std::string results_csv() const { return (root / "results.csv").string(); }
    std::string timings() const { return (root / "timings.json").string(); }
    std::string report() const { return (root / "report.md").string(); }
    std::string error_file() const { return (root / "error.json").string(); }
};

// ---- per-phone feature files -----------------------------------------------

struct FeatureLine {
    std::string utterance_id;
    int member = 0;
    ProsodyTargets targets;
};

inline nlohmann::json targets_to_json(const ProsodyTargets& t) {
    nlohmann::json voiced = nlohmann::json::array();
    for (bool v : t.voiced_mask) voiced.push_back(v);
    return {{"f0_z", t.f0_z}, {"energy_z", t.energy_z}, {"logdur_z", t.logdur_z}, {"voiced_mask", voiced}};
}

inline ProsodyTargets targets_from_json(const nlohmann::json& j) {
    ProsodyTargets t;
    t.f0_z = j.at("f0_z").get<std::vector<double>>();
    t.energy_z = j.at("energy_z").get<std::vector<double>>();
    t.logdur_z = j.at("logdur_z").get<std::vector<double>>();
    for (const nlohmann::json& v : j.at("voiced_mask")) t.voiced_mask.push_back(v.get<bool>());
    if (t.f0_z.size() != t.energy_z.size() || t.f0_z.size() != t.logdur_z.size() ||
        t.f0_z.size() != t.voiced_mask.size())
        throw std::invalid_argument("features: per-phone arrays have mismatched lengths");
    return t;
}

inline void write_features_jsonl(const std::vector<FeatureLine>& lines, const std::string& path,
                                 const nlohmann::json& provenance_header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("features: cannot write " + path);
    out << provenance_header.dump() << '\n';
    for (const FeatureLine& line : lines) {
        nlohmann::json j = targets_to_json(line.targets);
        j["utterance_id"] = line.utterance_id;
        j["member"] = line.member;
        out << j.dump() << '\n';
    }
}

inline std::vector<FeatureLine> read_features_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("features: cannot read " + path);
    std::vector<FeatureLine> lines;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            if (j.is_object() && j.contains("format_version")) continue;
            lines.push_back({j.at("utterance_id").get<std::string>(), j.at("member").get<int>(), targets_from_json(j)});
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("features line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return lines;
}

// ---- pipeline stages -------------------------------------------------------

inline Corpus stage_gen_corpus(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const Corpus corpus = gen_corpus(cfg.corpus, cfg.seeds.corpus);
    save_corpus(corpus, OutPaths(cfg.out_dir).corpus());
    return corpus;
}

inline Corpus load_stage_corpus(const RunConfig& cfg) {
    const OutPaths paths(cfg.out_dir);
    if (!std::filesystem::exists(paths.corpus()))
        throw std::runtime_error("no corpus at " + paths.corpus() + " (run gen-corpus first)");
    return load_corpus(paths.corpus());
}

inline AfpModel stage_train_member(const RunConfig& cfg, const Corpus& corpus, int member) {
    const OutPaths paths(cfg.out_dir);
    const Architecture arch = member == 0 ? cfg.arch_a : cfg.arch_b;
    const std::uint64_t seed = member == 0 ? cfg.seeds.train_a : cfg.seeds.train_b;
    AfpModel model = build_afp(arch, seed, corpus.inventory.size(), cfg.corpus.num_styles);
    TrainConfig train_cfg = cfg.training;
    train_cfg.seed = seed;
    train_cfg.loss_log_path = paths.loss_log(member);
    train(model, corpus, train_cfg);
    save_checkpoint(model, paths.checkpoint(member));
    return model;
}

inline Ensemble stage_train(const RunConfig& cfg, const Corpus& corpus) {
    std::filesystem::create_directories(cfg.out_dir);
    AfpModel a = stage_train_member(cfg, corpus, 0);
    AfpModel b = stage_train_member(cfg, corpus, 1);
    return build_ensemble({std::move(a), std::move(b)}, cfg.label());
}

inline Ensemble stage_ensemble(const RunConfig& cfg) {
    const OutPaths paths(cfg.out_dir);
    for (int m : {0, 1}) {
        if (!std::filesystem::exists(paths.checkpoint(m)))
            throw std::runtime_error("no checkpoint at " + paths.checkpoint(m) + " (run train first)");
    }
    Ensemble ensemble =
        build_ensemble({load_checkpoint(paths.checkpoint(0)), load_checkpoint(paths.checkpoint(1))}, cfg.label());

    nlohmann::json members = nlohmann::json::array();
    for (const AfpModel& m : ensemble.members) {
        members.push_back({{"architecture", architecture_name(m.arch)},
                           {"seed", m.seed},
                           {"iterations", m.meta.iterations},
                           {"final_train_loss", m.meta.final_train_loss},
                           {"final_val_loss", m.meta.final_val_loss},
                           {"training_digest", m.meta.config_digest}});
    }
    nlohmann::json doc = provenance(cfg);
    doc["label"] = ensemble.label;
    doc["members"] = members;
    std::ofstream out(paths.ensemble(), std::ios::binary);
    if (!out) throw std::runtime_error("ensemble: cannot write " + paths.ensemble());
    out << doc.dump(2) << '\n';
    return ensemble;
}

// Both members' renditions of one utterance, with per-(utterance, member)
// synthesis noise streams.
inline std::pair<Rendition, Rendition> make_rendition_pair(const Ensemble& ensemble, const Utterance& utt,
                                                           const SeedSet& seeds) {
    ProsodyTargets a = predict(ensemble.members[0], utt);
    ProsodyTargets b = predict(ensemble.members[1], utt);
    return {Rendition(utt.id, 0, std::move(a), DenormConfig{}, derive_seed(seeds.noise, utt.id + ":a")),
            Rendition(utt.id, 1, std::move(b), DenormConfig{}, derive_seed(seeds.noise, utt.id + ":b"))};
}

inline void stage_render(const RunConfig& cfg, const Ensemble& ensemble, const Corpus& corpus) {
    const OutPaths paths(cfg.out_dir);
    std::filesystem::create_directories(paths.renders_dir());
    const int n = static_cast<int>(corpus.test.size());
    std::vector<FeatureLine> features(static_cast<std::size_t>(2 * n));
    detail::parallel_for(n, cfg.workers, [&](int i) {
        const Utterance& utt = corpus.test[static_cast<std::size_t>(i)];
        auto [a, b] = make_rendition_pair(ensemble, utt, cfg.seeds);
        write_wav(a.waveform(), paths.render_wav(utt.id, 0));
        write_wav(b.waveform(), paths.render_wav(utt.id, 1));
        features[static_cast<std::size_t>(2 * i)] = {utt.id, 0, a.predicted()};
        features[static_cast<std::size_t>(2 * i + 1)] = {utt.id, 1, b.predicted()};
    });
    write_features_jsonl(features, paths.features(), provenance(cfg));

    nlohmann::json files = nlohmann::json::array();
    for (const Utterance& utt : corpus.test) {
        files.push_back({{"utterance_id", utt.id},
                         {"wav_a", paths.render_wav(utt.id, 0)},
                         {"wav_b", paths.render_wav(utt.id, 1)}});
    }
    nlohmann::json doc = provenance(cfg);
    doc["files"] = files;
    std::ofstream out(paths.renders_manifest(), std::ios::binary);
    if (!out) throw std::runtime_error("render: cannot write " + paths.renders_manifest());
    out << doc.dump(2) << '\n';
}

struct CriterionScores {
    CriterionSpec spec;
    std::vector<SelectionResult> selections;  // aligned with the test split
    StageCounters counters;                   // summed over both renditions of every pair
    double seconds = 0.0;
};

// Scores one criterion over the test split on fresh renditions, so the
// stage counters and wall-clock reflect that criterion's true cost.
inline CriterionScores score_criterion(const RunConfig& cfg, const Ensemble& ensemble,
                                       const std::vector<Utterance>& test, const CriterionSpec& spec) {
    CriterionScores out;
    out.spec = spec;
    const int n = static_cast<int>(test.size());
    out.selections.resize(static_cast<std::size_t>(n));
    std::vector<StageCounters> counters(static_cast<std::size_t>(n));
    const auto start = std::chrono::steady_clock::now();
    detail::parallel_for(n, cfg.workers, [&](int i) {
        const std::size_t si = static_cast<std::size_t>(i);
        auto [a, b] = make_rendition_pair(ensemble, test[si], cfg.seeds);
        out.selections[si] = select_scores(score_rendition(a, spec.kind, cfg.gv_mean_over_coefficients),
                                           score_rendition(b, spec.kind, cfg.gv_mean_over_coefficients), spec.polarity);
        counters[si].afp_forwards = a.counters().afp_forwards + b.counters().afp_forwards;
        counters[si].synth_calls = a.counters().synth_calls + b.counters().synth_calls;
        counters[si].mel_calls = a.counters().mel_calls + b.counters().mel_calls;
        counters[si].pitch_calls = a.counters().pitch_calls + b.counters().pitch_calls;
    });
    out.seconds = detail::seconds_since(start);
    for (const StageCounters& c : counters) {
        out.counters.afp_forwards += c.afp_forwards;
        out.counters.synth_calls += c.synth_calls;
        out.counters.mel_calls += c.mel_calls;
        out.counters.pitch_calls += c.pitch_calls;
    }
    return out;
}

inline std::vector<CriterionScores> stage_score(const RunConfig& cfg, const Ensemble& ensemble, const Corpus& corpus) {
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<CriterionScores> all;
    all.reserve(cfg.criteria.size());
    for (const CriterionSpec& spec : cfg.criteria) all.push_back(score_criterion(cfg, ensemble, corpus.test, spec));

    const OutPaths paths(cfg.out_dir);
    std::ofstream out(paths.scores(), std::ios::binary);
    if (!out) throw std::runtime_error("score: cannot write " + paths.scores());
    out << provenance(cfg).dump() << '\n';
    for (const CriterionScores& cs : all) {
        for (std::size_t i = 0; i < cs.selections.size(); ++i) {
            nlohmann::json j = cs.selections[i].to_json();
            j["utterance_id"] = corpus.test[i].id;
            j["criterion"] = criterion_name(cs.spec.kind);
            j["polarity"] = polarity_name(cs.spec.polarity);
            out << j.dump() << '\n';
        }
        out << nlohmann::json{{"criterion", criterion_name(cs.spec.kind)},
                              {"polarity", polarity_name(cs.spec.polarity)},
                              {"stage_calls",
                               {{"afp_forwards", cs.counters.afp_forwards},
                                {"synth_calls", cs.counters.synth_calls},
                                {"mel_calls", cs.counters.mel_calls},
                                {"pitch_calls", cs.counters.pitch_calls}}}}
                   .dump()
            << '\n';
    }
    return all;
}

// Listener panel over the ensemble's test renditions; the control stream
// replaces every listener response with an independent uniform score draw
// (and reseeds the panel) so a well-behaved study shows chance-level
// agreement against it under a per-record confidence interval.
struct SimulatedStudy {
    std::vector<ProxyScores> proxy_scores;
    std::vector<PreferenceRecord> records;
    std::vector<PreferenceRecord> control_records;
    double resolved_sigma = 0.0;
    double resolved_margin = 0.0;
};

inline SimulatedStudy stage_simulate(const RunConfig& cfg, const Ensemble& ensemble, const Corpus& corpus) {
    std::filesystem::create_directories(cfg.out_dir);
    SimulatedStudy study;
    std::vector<std::pair<Rendition, Rendition>> pairs;
    pairs.reserve(corpus.test.size());
    for (const Utterance& utt : corpus.test) pairs.push_back(make_rendition_pair(ensemble, utt, cfg.seeds));
    std::vector<std::pair<Rendition*, Rendition*>> pair_ptrs;
    pair_ptrs.reserve(pairs.size());
    for (auto& [a, b] : pairs) pair_ptrs.push_back({&a, &b});

    study.proxy_scores = build_proxy_scores(pair_ptrs, cfg.proxy, cfg.seeds.panel);
    const auto [sigma, margin] = resolve_panel(cfg.panel, study.proxy_scores);
    study.resolved_sigma = sigma;
    study.resolved_margin = margin;
    study.records = simulate_preferences(study.proxy_scores, cfg.panel, cfg.seeds.panel);

    const std::uint64_t control_seed = derive_seed(cfg.seeds.panel, "control");
    std::vector<std::string> test_ids;
    test_ids.reserve(corpus.test.size());
    for (const Utterance& utt : corpus.test) test_ids.push_back(utt.id);
    study.control_records = simulate_random_control(test_ids, cfg.panel, control_seed);

    const OutPaths paths(cfg.out_dir);
    write_records_jsonl(study.records, paths.records(), provenance(cfg));
    write_records_jsonl(study.control_records, paths.control_records(), provenance(cfg));
    return study;
}

// ---- study assembly ---------------------------------------------------------

inline nlohmann::json accuracy_to_json(const AccuracyResult& r) {
    nlohmann::json j{{"matched", r.matched}, {"considered", r.considered}, {"excluded", r.excluded}};
    if (r.rate) {
        j["rate"] = *r.rate;
    } else {
        j["rate"] = nullptr;
    }
    return j;
}

struct StudyResult {
    nlohmann::json results;  // deterministic; everything but wall-clock
    nlohmann::json timings;  // wall-clock seconds per stage and criterion
};

inline std::map<std::string, int> chosen_map(const CriterionScores& cs, const std::vector<Utterance>& test) {
    std::map<std::string, int> chosen;
    for (std::size_t i = 0; i < cs.selections.size(); ++i) chosen[test[i].id] = cs.selections[i].chosen_index;
    return chosen;
}

inline void write_results_csv(const nlohmann::json& results, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("results: cannot write " + path);
    out << "# format_version=" << results.at("format_version") << " config_digest="
        << results.at("config_digest").get<std::string>() << " seeds=" << results.at("seeds").dump() << '\n';
    out << "selector,polarity,accuracy,ci_lo,ci_hi,matched,considered,excluded,binomial_p,holm_p,gap_closure\n";
    const auto cell = [](const nlohmann::json& j, const char* key) {
        if (!j.contains(key) || j.at(key).is_null()) return std::string();
        return j.at(key).dump();
    };
    for (const nlohmann::json& c : results.at("criteria")) {
        out << c.at("criterion").get<std::string>() << ',' << c.at("polarity").get<std::string>() << ','
            << cell(c.at("accuracy"), "rate") << ',' << cell(c, "ci_lo") << ',' << cell(c, "ci_hi") << ','
            << c.at("accuracy").at("matched") << ',' << c.at("accuracy").at("considered") << ','
            << c.at("accuracy").at("excluded") << ',' << cell(c, "binomial_p") << ',' << cell(c, "holm_p") << ','
            << cell(c, "gap_closure") << '\n';
    }
    for (const char* name : {"always_a", "always_b"}) {
        const nlohmann::json& b = results.at("baselines").at(name);
        out << name << ",," << cell(b, "rate") << ",,," << b.at("matched") << ',' << b.at("considered") << ','
            << b.at("excluded") << ",,,\n";
    }
    const nlohmann::json& o = results.at("oracle");
    out << "oracle,," << cell(o, "rate") << ",,," << o.at("matched") << ',' << o.at("considered") << ','
        << o.at("excluded") << ",,,\n";
}

inline void write_report_md(const nlohmann::json& results, const nlohmann::json& timings, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    const auto num = [](const nlohmann::json& j) { return j.is_null() ? std::string("—") : detail::fmt(j.get<double>()); };

    out << "# Ensemble selection study\n\n";
    out << "- format_version: " << results.at("format_version") << '\n';
    out << "- config_digest: `" << results.at("config_digest").get<std::string>() << "`\n";
    out << "- seeds: `" << results.at("seeds").dump() << "`\n";
    out << "- ensemble: " << results.at("ensemble").at("label").get<std::string>() << '\n';
    out << "- test utterances: " << results.at("study").at("utterances") << ", listeners: "
        << results.at("study").at("listeners") << ", records: " << results.at("study").at("records_total") << '\n';
    out << "- panel noise sigma: " << num(results.at("study").at("noise_sigma")) << ", undecided margin: "
        << num(results.at("study").at("undecided_margin")) << '\n';
    out << "- records undecided: " << results.at("study").at("records_undecided") << " ("
        << num(results.at("study").at("undecided_fraction")) << " of total)\n";
    out << "- ensemble diversity: fraction different "
        << num(results.at("diversity").at("fraction_different")) << " at tau "
        << num(results.at("diversity").at("tau")) << "\n\n";

    out << "## Accuracy against simulated listeners\n\n";
    out << "| selector | accuracy | 95% CI | binomial p | Holm p | gap closure | control acc |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const nlohmann::json& c : results.at("criteria")) {
        out << "| " << c.at("criterion").get<std::string>() << " (" << c.at("polarity").get<std::string>() << ") | "
            << num(c.at("accuracy").at("rate")) << " | [" << num(c.at("ci_lo")) << ", " << num(c.at("ci_hi")) << "] | "
            << num(c.at("binomial_p")) << " | " << num(c.at("holm_p")) << " | " << num(c.at("gap_closure")) << " | "
            << num(c.at("control").at("accuracy").at("rate")) << " |\n";
    }
    const nlohmann::json& always_a = results.at("baselines").at("always_a");
    const nlohmann::json& always_b = results.at("baselines").at("always_b");
    out << "| always-A | " << num(always_a.at("rate")) << " | | | | | |\n";
    out << "| always-B | " << num(always_b.at("rate")) << " | | | | | |\n";
    out << "| oracle | " << num(results.at("oracle").at("rate")) << " | | | | | |\n\n";
    out << "Gap closure is measured from the better constant selector to the oracle.\n\n";

    out << "## Pairwise accuracy comparisons (Fisher exact)\n\n";
    out << "| pair | p raw | p Holm |\n|---|---|---|\n";
    for (const nlohmann::json& f : results.at("fisher")) {
        out << "| " << f.at("a").get<std::string>() << " vs " << f.at("b").get<std::string>() << " | "
            << num(f.at("p_raw")) << " | " << num(f.at("p_holm")) << " |\n";
    }

    out << "\n## Criterion cost\n\n";
    out << "| selector | afp forwards | synth | mel | pitch | seconds | vs cheapest |\n";
    out << "|---|---|---|---|---|---|---|\n";
    double cheapest = 0.0;
    for (const nlohmann::json& c : results.at("criteria")) {
        const std::string key = c.at("criterion").get<std::string>() + ":" + c.at("polarity").get<std::string>();
        const double sec = timings.at("criteria_seconds").value(key, 0.0);
        if (cheapest == 0.0 || (sec > 0.0 && sec < cheapest)) cheapest = sec;
    }
    for (const nlohmann::json& c : results.at("criteria")) {
        const std::string key = c.at("criterion").get<std::string>() + ":" + c.at("polarity").get<std::string>();
        const double sec = timings.at("criteria_seconds").value(key, 0.0);
        const nlohmann::json& k = c.at("stage_calls");
        out << "| " << c.at("criterion").get<std::string>() << " | " << k.at("afp_forwards") << " | "
            << k.at("synth_calls") << " | " << k.at("mel_calls") << " | " << k.at("pitch_calls") << " | "
            << detail::fmt(sec, 3) << " | " << (cheapest > 0.0 ? detail::fmt(sec / cheapest, 1) + "x" : "—") << " |\n";
    }
    out << "\nStage wall-clock seconds: " << timings.at("stages_seconds").dump() << '\n';
}

// The full protocol: corpus → train both members → render → score every
// criterion on fresh renditions → simulated panel → accuracy, tests and
// report. Deterministic given the seed set; wall-clock lands in timings only.
inline StudyResult run_study(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const OutPaths paths(cfg.out_dir);
    nlohmann::json stage_seconds;
    const auto timed = [&](const char* name, const auto& fn) {
        const auto start = std::chrono::steady_clock::now();
        auto value = fn();
        stage_seconds[name] = detail::seconds_since(start);
        return value;
    };

    const Corpus corpus = timed("gen_corpus", [&] { return stage_gen_corpus(cfg); });
    const Ensemble trained = timed("train", [&] { return stage_train(cfg, corpus); });
    const Ensemble ensemble = stage_ensemble(cfg);  // reload: the study consumes what landed on disk
    timed("render", [&] {
        stage_render(cfg, ensemble, corpus);
        return 0;
    });
    const std::vector<CriterionScores> scores = timed("score", [&] { return stage_score(cfg, ensemble, corpus); });
    const SimulatedStudy study = timed("simulate", [&] { return stage_simulate(cfg, ensemble, corpus); });

    // Headline rates: criterion accuracies, constant-selector baselines and
    // the majority-vote oracle, all against the same simulated records.
    std::map<std::string, int> all_a, all_b;
    for (const Utterance& utt : corpus.test) {
        all_a[utt.id] = 0;
        all_b[utt.id] = 1;
    }
    const AccuracyResult acc_a = accuracy(all_a, study.records);
    const AccuracyResult acc_b = accuracy(all_b, study.records);
    const AccuracyResult oracle = oracle_accuracy(study.records);
    const double baseline_rate = std::max(acc_a.rate.value_or(0.0), acc_b.rate.value_or(0.0));

    std::vector<AccuracyResult> criterion_acc, control_acc;
    std::vector<double> binomial_raw;
    for (const CriterionScores& cs : scores) {
        const std::map<std::string, int> chosen = chosen_map(cs, corpus.test);
        const AccuracyResult acc = accuracy(chosen, study.records);
        criterion_acc.push_back(acc);
        control_acc.push_back(accuracy(chosen, study.control_records));
        binomial_raw.push_back(acc.considered > 0 ? binomial_two_sided(acc.matched, acc.considered) : 1.0);
    }
    const std::vector<double> binomial_holm = holm_bonferroni(binomial_raw);

    std::vector<std::array<std::size_t, 2>> fisher_pairs;
    std::vector<double> fisher_raw;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = i + 1; j < scores.size(); ++j) {
            const std::array<std::array<long long, 2>, 2> tab = {
                {{criterion_acc[i].matched, criterion_acc[i].considered - criterion_acc[i].matched},
                 {criterion_acc[j].matched, criterion_acc[j].considered - criterion_acc[j].matched}}};
            fisher_pairs.push_back({i, j});
            fisher_raw.push_back(fisher_exact_two_sided(tab));
        }
    }
    const std::vector<double> fisher_holm = holm_bonferroni(fisher_raw);

    const DiversityReport diversity = diversity_report(ensemble, corpus.test, cfg.diversity_tau);

    nlohmann::json results = provenance(cfg);
    results["config"] = cfg.canonical_json();
    results["ensemble"] = {{"label", ensemble.label},
                           {"arch_a", architecture_name(ensemble.members[0].arch)},
                           {"arch_b", architecture_name(ensemble.members[1].arch)},
                           {"val_loss_a", ensemble.members[0].meta.final_val_loss},
                           {"val_loss_b", ensemble.members[1].meta.final_val_loss}};
    long long undecided = 0;
    for (const PreferenceRecord& rec : study.records) undecided += rec.choice == Choice::Undecided ? 1 : 0;
    results["study"] = {{"utterances", corpus.test.size()},
                        {"listeners", cfg.panel.listeners},
                        {"records_total", study.records.size()},
                        {"records_undecided", undecided},
                        {"undecided_fraction",
                         study.records.empty() ? 0.0 : static_cast<double>(undecided) / static_cast<double>(study.records.size())},
                        {"proxy", proxy_name(cfg.proxy)},
                        {"noise_sigma", study.resolved_sigma},
                        {"undecided_margin", study.resolved_margin}};

    nlohmann::json criteria = nlohmann::json::array();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const CriterionScores& cs = scores[i];
        const AccuracyResult& acc = criterion_acc[i];
        nlohmann::json c;
        c["criterion"] = criterion_name(cs.spec.kind);
        c["polarity"] = polarity_name(cs.spec.polarity);
        c["accuracy"] = accuracy_to_json(acc);
        if (acc.considered > 0) {
            const auto [lo, hi] = proportion_ci_95(acc.matched, acc.considered);
            c["ci_lo"] = lo;
            c["ci_hi"] = hi;
            c["binomial_p"] = binomial_raw[i];
            c["holm_p"] = binomial_holm[i];
        } else {
            c["ci_lo"] = nullptr;
            c["ci_hi"] = nullptr;
            c["binomial_p"] = nullptr;
            c["holm_p"] = nullptr;
        }
        if (acc.rate && oracle.rate && *oracle.rate > baseline_rate) {
            c["gap_closure"] = gap_closure(*acc.rate, baseline_rate, *oracle.rate);
        } else {
            c["gap_closure"] = nullptr;
        }
        nlohmann::json control{{"accuracy", accuracy_to_json(control_acc[i])}};
        if (control_acc[i].considered > 0) {
            const auto [clo, chi] = proportion_ci_95(control_acc[i].matched, control_acc[i].considered);
            control["ci_lo"] = clo;
            control["ci_hi"] = chi;
            control["chance_within_ci"] = clo <= 0.5 && 0.5 <= chi;
        } else {
            control["ci_lo"] = nullptr;
            control["ci_hi"] = nullptr;
            control["chance_within_ci"] = nullptr;
        }
        c["control"] = control;
        c["stage_calls"] = {{"afp_forwards", cs.counters.afp_forwards},
                            {"synth_calls", cs.counters.synth_calls},
                            {"mel_calls", cs.counters.mel_calls},
                            {"pitch_calls", cs.counters.pitch_calls}};
        long long chose_a = 0;
        for (const SelectionResult& sel : cs.selections) chose_a += sel.chosen_index == 0 ? 1 : 0;
        c["chose_member_a"] = chose_a;
        criteria.push_back(c);
    }
    results["criteria"] = criteria;
    results["baselines"] = {{"always_a", accuracy_to_json(acc_a)},
                            {"always_b", accuracy_to_json(acc_b)},
                            {"better_single_rate", baseline_rate}};
    results["oracle"] = accuracy_to_json(oracle);

    nlohmann::json fisher = nlohmann::json::array();
    for (std::size_t k = 0; k < fisher_pairs.size(); ++k) {
        fisher.push_back({{"a", criterion_name(scores[fisher_pairs[k][0]].spec.kind)},
                          {"b", criterion_name(scores[fisher_pairs[k][1]].spec.kind)},
                          {"p_raw", fisher_raw[k]},
                          {"p_holm", fisher_holm[k]}});
    }
    results["fisher"] = fisher;
    results["diversity"] = {{"tau", cfg.diversity_tau}, {"fraction_different", diversity.fraction_different}};

    nlohmann::json timings = provenance(cfg);
    timings["stages_seconds"] = stage_seconds;
    nlohmann::json criteria_seconds;
    for (const CriterionScores& cs : scores)
        criteria_seconds[criterion_name(cs.spec.kind) + ":" + polarity_name(cs.spec.polarity)] = cs.seconds;
    timings["criteria_seconds"] = criteria_seconds;

    {
        std::ofstream out(paths.results(), std::ios::binary);
        if (!out) throw std::runtime_error("results: cannot write " + paths.results());
        out << results.dump(2) << '\n';
    }
    {
        std::ofstream out(paths.timings(), std::ios::binary);
        if (!out) throw std::runtime_error("timings: cannot write " + paths.timings());
        out << timings.dump(2) << '\n';
    }
    write_results_csv(results, paths.results_csv());
    write_report_md(results, timings, paths.report());

    (void)trained;
    return {results, timings};
}

// Rebuilds the human-readable report from artifacts already on disk.
inline void stage_report(const RunConfig& cfg) {
    const OutPaths paths(cfg.out_dir);
    for (const std::string& p : {paths.results(), paths.timings()}) {
        if (!std::filesystem::exists(p)) throw std::runtime_error("no artifact at " + p + " (run evaluate first)");
    }
    std::ifstream results_in(paths.results(), std::ios::binary);
    std::ifstream timings_in(paths.timings(), std::ios::binary);
    const nlohmann::json results = nlohmann::json::parse(results_in);
    const nlohmann::json timings = nlohmann::json::parse(timings_in);
    write_report_md(results, timings, paths.report());
    write_results_csv(results, paths.results_csv());
}

// ---- standalone pair scorer --------------------------------------------------

// Scores one A/B pair given either audio (.wav) or per-phone feature JSON.
// Feature inputs never touch the synthesis chain, so AFP-F0 works with no
// audio at all; WAV inputs are scored on the recorded signal directly.
inline SelectionResult score_files(CriterionKind kind, Polarity polarity, const std::string& path_a,
                                   const std::string& path_b, bool gv_mean_over_coefficients = false,
                                   StageCounters* counters_out = nullptr) {
    StageCounters counters;
    const auto ends_with = [](const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    const auto score_one = [&](const std::string& path) -> std::optional<double> {
        if (ends_with(path, ".wav")) {
            if (kind == CriterionKind::AFP_F0)
                throw std::invalid_argument("afp-f0 scores predicted features, not audio: " + path);
            const Waveform wav = read_wav(path);
            if (kind == CriterionKind::WAV_F0) {
                ++counters.pitch_calls;
                return f0_variance(track_pitch(wav));
            }
            ++counters.mel_calls;
            return gv_of_matrix(mfcc(mel_spectrogram(wav)), gv_mean_over_coefficients);
        }
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("score: cannot read " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("score: " + path + " is neither audio nor feature JSON: " + e.what());
        }
        Rendition r("standalone", 0, targets_from_json(j), DenormConfig{}, 0, 0);
        const std::optional<double> s = score_rendition(r, kind, gv_mean_over_coefficients);
        counters.synth_calls += r.counters().synth_calls;
        counters.mel_calls += r.counters().mel_calls;
        counters.pitch_calls += r.counters().pitch_calls;
        return s;
    };
    const std::optional<double> a = score_one(path_a);
    const std::optional<double> b = score_one(path_b);
    if (counters_out) *counters_out = counters;
    return select_scores(a, b, polarity);
}

}  // namespace prosemble
