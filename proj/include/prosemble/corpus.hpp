#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prosemble/common.hpp"
#include "prosemble/rng.hpp"

namespace prosemble {

struct Phone {
    std::string symbol;
    bool voiced = false;

    bool operator==(const Phone&) const = default;
};

struct PhoneInventory {
    std::vector<Phone> phones;

    bool operator==(const PhoneInventory&) const = default;

    int size() const { return static_cast<int>(phones.size()); }

    int voiced_count() const {
        int n = 0;
        for (const Phone& p : phones) n += p.voiced ? 1 : 0;
        return n;
    }

    int index_of(const std::string& symbol) const {
        for (std::size_t i = 0; i < phones.size(); ++i)
            if (phones[i].symbol == symbol) return static_cast<int>(i);
        return -1;
    }

    static PhoneInventory defaults() {
        PhoneInventory inv;
        for (const char* s : {"a", "e", "i", "o", "u", "m", "n", "l", "r", "b", "d", "g", "w", "y"})
            inv.phones.push_back({s, true});
        for (const char* s : {"p", "t", "k", "f", "s", "x", "ch", "sh", "th", "h", "j", "z", "c", "q", "ts", "tl",
                              "hh", "sil"})
            inv.phones.push_back({s, false});
        return inv;
    }
};

struct ProsodyTargets {
    std::vector<double> f0_z;
    std::vector<double> energy_z;
    std::vector<double> logdur_z;
    std::vector<bool> voiced_mask;

    bool operator==(const ProsodyTargets&) const = default;

    int size() const { return static_cast<int>(f0_z.size()); }
};

struct Utterance {
    std::string id;
    int speaker_id = 0;
    int style_id = 0;
    std::vector<int> phones;  // indices into the corpus inventory
    ProsodyTargets targets;

    bool operator==(const Utterance&) const = default;
};

struct ZStats {
    double f0_mean = 0, f0_std = 0;
    double energy_mean = 0, energy_std = 0;
    double logdur_mean = 0, logdur_std = 0;

    bool operator==(const ZStats&) const = default;
};

struct CorpusConfig {
    int train_utterances = 500;
    int val_utterances = 50;
    int test_utterances = 30;
    int min_phones = 8;
    int max_phones = 40;
    int num_styles = 4;
    int num_speakers = 2;
    int min_voiced_phones = 1;
    double noise_sigma = 0.3;
    // When false, every utterance uses phase 0, which makes the target a
    // deterministic function of (phone, style, position) — the learnable
    // regime used by convergence tests.
    bool random_phase = true;

    nlohmann::json to_json() const {
        return {{"train_utterances", train_utterances},
                {"val_utterances", val_utterances},
                {"test_utterances", test_utterances},
                {"min_phones", min_phones},
                {"max_phones", max_phones},
                {"num_styles", num_styles},
                {"num_speakers", num_speakers},
                {"min_voiced_phones", min_voiced_phones},
                {"noise_sigma", noise_sigma},
                {"random_phase", random_phase}};
    }

    static CorpusConfig from_json(const nlohmann::json& j) {
        CorpusConfig c;
        c.train_utterances = j.value("train_utterances", c.train_utterances);
        c.val_utterances = j.value("val_utterances", c.val_utterances);
        c.test_utterances = j.value("test_utterances", c.test_utterances);
        c.min_phones = j.value("min_phones", c.min_phones);
        c.max_phones = j.value("max_phones", c.max_phones);
        c.num_styles = j.value("num_styles", c.num_styles);
        c.num_speakers = j.value("num_speakers", c.num_speakers);
        c.min_voiced_phones = j.value("min_voiced_phones", c.min_voiced_phones);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.random_phase = j.value("random_phase", c.random_phase);
        return c;
    }

    std::string digest() const { return hex64(fnv1a64(to_json().dump())); }

    void validate() const {
        if (train_utterances < 0 || val_utterances < 0 || test_utterances < 0)
            throw std::invalid_argument("corpus config: negative split size");
        if (min_phones < 1 || max_phones < min_phones)
            throw std::invalid_argument("corpus config: bad phone-count bounds");
        if (num_styles < 1 || num_speakers < 1) throw std::invalid_argument("corpus config: need >=1 style/speaker");
        if (noise_sigma < 0) throw std::invalid_argument("corpus config: negative noise_sigma");
        if (min_voiced_phones < 0 || min_voiced_phones > min_phones)
            throw std::invalid_argument("corpus config: min_voiced_phones out of range");
    }
};

struct Corpus {
    PhoneInventory inventory;
    ZStats z_stats;
    std::string config_digest;
    std::vector<Utterance> train;
    std::vector<Utterance> val;
    std::vector<Utterance> test;

    bool operator==(const Corpus&) const = default;
};

// Style-dependent sinusoid laws. Amplitude and period both grow with the
// style id so styles are separable by their prosody statistics.
struct StyleLaw {
    double amplitude = 0;
    double period = 1;
};

inline StyleLaw f0_law(int style) { return {0.6 + 0.2 * style, 6.0 + 3.0 * style}; }
inline StyleLaw energy_law(int style) { return {0.4 + 0.15 * style, 5.0 + 2.0 * style}; }
inline StyleLaw logdur_law(int style) { return {0.3 + 0.1 * style, 7.0 + 2.0 * style}; }

// Fixed per-phone offset in [-0.25, 0.25], a pure function of the symbol so
// the mapping survives inventory reordering.
inline double phone_offset(const std::string& symbol, const char* feature) {
    Rng rng(derive_seed(fnv1a64(symbol), feature));
    return rng.uniform(-0.25, 0.25);
}

namespace detail {

inline void generate_split(std::vector<Utterance>& out, const char* prefix, int count, const CorpusConfig& cfg,
                           const PhoneInventory& inv, Rng& rng) {
    constexpr double kTau = 6.283185307179586;
    for (int u = 0; u < count; ++u) {
        Utterance utt;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "%s-%04d", prefix, u);
        utt.id = idbuf;
        utt.speaker_id = rng.uniform_int(0, cfg.num_speakers - 1);
        utt.style_id = rng.uniform_int(0, cfg.num_styles - 1);
        const int n = rng.uniform_int(cfg.min_phones, cfg.max_phones);
        do {
            utt.phones.clear();
            int voiced = 0;
            for (int i = 0; i < n; ++i) {
                const int p = rng.uniform_int(0, inv.size() - 1);
                utt.phones.push_back(p);
                voiced += inv.phones[static_cast<std::size_t>(p)].voiced ? 1 : 0;
            }
            if (voiced >= cfg.min_voiced_phones) break;
        } while (true);

        const double phi_f0 = cfg.random_phase ? rng.uniform(0.0, kTau) : 0.0;
        const double phi_energy = cfg.random_phase ? rng.uniform(0.0, kTau) : 0.0;
        const double phi_logdur = cfg.random_phase ? rng.uniform(0.0, kTau) : 0.0;
        const StyleLaw lf = f0_law(utt.style_id);
        const StyleLaw le = energy_law(utt.style_id);
        const StyleLaw ld = logdur_law(utt.style_id);

        ProsodyTargets& t = utt.targets;
        for (int i = 0; i < n; ++i) {
            const Phone& ph = inv.phones[static_cast<std::size_t>(utt.phones[static_cast<std::size_t>(i)])];
            t.voiced_mask.push_back(ph.voiced);
            if (ph.voiced) {
                t.f0_z.push_back(lf.amplitude * std::sin(kTau * i / lf.period + phi_f0) +
                                 phone_offset(ph.symbol, "f0") + rng.normal(0.0, cfg.noise_sigma));
            } else {
                t.f0_z.push_back(0.0);
            }
            t.energy_z.push_back(le.amplitude * std::sin(kTau * i / le.period + phi_energy) +
                                 phone_offset(ph.symbol, "energy") + rng.normal(0.0, cfg.noise_sigma));
            t.logdur_z.push_back(ld.amplitude * std::sin(kTau * i / ld.period + phi_logdur) +
                                 phone_offset(ph.symbol, "logdur") + rng.normal(0.0, cfg.noise_sigma));
        }
        out.push_back(std::move(utt));
    }
}

struct RunningStats {
    double sum = 0, sq = 0;
    long long n = 0;
    void add(double x) {
        sum += x;
        sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double stddev() const {
        if (!n) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - m * m));
    }
};

}  // namespace detail

inline Corpus gen_corpus(const CorpusConfig& cfg, std::uint64_t seed,
                         const PhoneInventory& inventory = PhoneInventory::defaults()) {
    cfg.validate();
    if (inventory.voiced_count() == 0) throw std::invalid_argument("corpus: inventory has no voiced phones");
    Corpus corpus;
    corpus.inventory = inventory;
    corpus.config_digest = cfg.digest();
    Rng rng(derive_seed(seed, "corpus"));
    detail::generate_split(corpus.train, "train", cfg.train_utterances, cfg, inventory, rng);
    detail::generate_split(corpus.val, "val", cfg.val_utterances, cfg, inventory, rng);
    detail::generate_split(corpus.test, "test", cfg.test_utterances, cfg, inventory, rng);

    // Provenance statistics over the train split; f0 restricted to voiced
    // positions (unvoiced f0_z is a placeholder zero).
    detail::RunningStats f0, energy, logdur;
    for (const Utterance& u : corpus.train) {
        for (int i = 0; i < u.targets.size(); ++i) {
            if (u.targets.voiced_mask[static_cast<std::size_t>(i)]) f0.add(u.targets.f0_z[static_cast<std::size_t>(i)]);
            energy.add(u.targets.energy_z[static_cast<std::size_t>(i)]);
            logdur.add(u.targets.logdur_z[static_cast<std::size_t>(i)]);
        }
    }
    corpus.z_stats = {f0.mean(), f0.stddev(), energy.mean(), energy.stddev(), logdur.mean(), logdur.stddev()};
    return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("corpus: cannot write " + path);
    nlohmann::json inv = nlohmann::json::array();
    for (const Phone& p : corpus.inventory.phones) inv.push_back({{"symbol", p.symbol}, {"voiced", p.voiced}});
    const nlohmann::json header = {
        {"format_version", kCorpusFormatVersion},
        {"inventory", inv},
        {"z_stats",
         {{"f0_mean", corpus.z_stats.f0_mean},
          {"f0_std", corpus.z_stats.f0_std},
          {"energy_mean", corpus.z_stats.energy_mean},
          {"energy_std", corpus.z_stats.energy_std},
          {"logdur_mean", corpus.z_stats.logdur_mean},
          {"logdur_std", corpus.z_stats.logdur_std}}},
        {"config_digest", corpus.config_digest}};
    out << header.dump() << '\n';
    auto write_split = [&](const std::vector<Utterance>& split) {
        for (const Utterance& u : split) {
            nlohmann::json phones = nlohmann::json::array();
            for (int p : u.phones) phones.push_back(corpus.inventory.phones[static_cast<std::size_t>(p)].symbol);
            const nlohmann::json rec = {{"id", u.id},           {"speaker_id", u.speaker_id},
                                        {"style_id", u.style_id}, {"phones", phones},
                                        {"f0_z", u.targets.f0_z}, {"energy_z", u.targets.energy_z},
                                        {"logdur_z", u.targets.logdur_z}};
            out << rec.dump() << '\n';
        }
    };
    write_split(corpus.train);
    write_split(corpus.val);
    write_split(corpus.test);
    if (!out) throw std::runtime_error("corpus: write failed for " + path);
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("corpus: cannot read " + path);
    std::string line;
    int line_no = 0;
    int last_valid = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("corpus line " + std::to_string(line_no) + ": " + what + " (last valid line " +
                                 std::to_string(last_valid) + ")");
    };
    Corpus corpus;
    if (!std::getline(in, line)) {
        line_no = 1;
        fail("missing header");
    }
    ++line_no;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
        const int version = header.at("format_version").get<int>();
        if (version != kCorpusFormatVersion) {
            throw std::runtime_error("corpus: format version " + std::to_string(version) + ", expected " +
                                     std::to_string(kCorpusFormatVersion));
        }
        for (const nlohmann::json& p : header.at("inventory")) {
            corpus.inventory.phones.push_back({p.at("symbol").get<std::string>(), p.at("voiced").get<bool>()});
        }
        const nlohmann::json& z = header.at("z_stats");
        corpus.z_stats = {z.at("f0_mean"),     z.at("f0_std"),     z.at("energy_mean"),
                          z.at("energy_std"), z.at("logdur_mean"), z.at("logdur_std")};
        corpus.config_digest = header.at("config_digest").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("bad header: ") + e.what());
    }
    last_valid = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) fail("empty record");
        Utterance u;
        try {
            const nlohmann::json rec = nlohmann::json::parse(line);
            u.id = rec.at("id").get<std::string>();
            u.speaker_id = rec.at("speaker_id").get<int>();
            u.style_id = rec.at("style_id").get<int>();
            for (const nlohmann::json& s : rec.at("phones")) {
                const int idx = corpus.inventory.index_of(s.get<std::string>());
                if (idx < 0) throw std::runtime_error("unknown phone symbol " + s.get<std::string>());
                u.phones.push_back(idx);
                u.targets.voiced_mask.push_back(corpus.inventory.phones[static_cast<std::size_t>(idx)].voiced);
            }
            u.targets.f0_z = rec.at("f0_z").get<std::vector<double>>();
            u.targets.energy_z = rec.at("energy_z").get<std::vector<double>>();
            u.targets.logdur_z = rec.at("logdur_z").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            fail(std::string("malformed record: ") + e.what());
        } catch (const std::runtime_error& e) {
            fail(e.what());
        }
        const std::size_t n = u.phones.size();
        if (u.targets.f0_z.size() != n || u.targets.energy_z.size() != n || u.targets.logdur_z.size() != n) {
            fail("target length does not match phone count");
        }
        if (u.id.rfind("train-", 0) == 0) {
            corpus.train.push_back(std::move(u));
        } else if (u.id.rfind("val-", 0) == 0) {
            corpus.val.push_back(std::move(u));
        } else if (u.id.rfind("test-", 0) == 0) {
            corpus.test.push_back(std::move(u));
        } else {
            fail("id " + u.id + " has no split prefix");
        }
        last_valid = line_no;
    }
    return corpus;
}

}  // namespace prosemble
