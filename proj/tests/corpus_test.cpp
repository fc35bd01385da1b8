#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "prosemble/corpus.hpp"

using namespace prosemble;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string temp_path(const char* name) { return std::string("corpus_test_") + name + ".jsonl"; }

}  // namespace

TEST_CASE("generation is deterministic per (config, seed)") {
    CorpusConfig cfg;
    cfg.train_utterances = 20;
    cfg.val_utterances = 5;
    cfg.test_utterances = 5;
    const Corpus a = gen_corpus(cfg, 1234);
    const Corpus b = gen_corpus(cfg, 1234);
    REQUIRE(a == b);
    const Corpus c = gen_corpus(cfg, 1235);
    REQUIRE_FALSE(a == c);

    const std::string pa = temp_path("det_a"), pb = temp_path("det_b");
    save_corpus(a, pa);
    save_corpus(b, pb);
    REQUIRE(slurp(pa) == slurp(pb));
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}

TEST_CASE("sigma zero with fixed phase yields the exact deterministic law") {
    CorpusConfig cfg;
    cfg.train_utterances = 6;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    cfg.noise_sigma = 0.0;
    cfg.random_phase = false;
    const Corpus corpus = gen_corpus(cfg, 99);
    constexpr double tau = 6.283185307179586;
    for (const Utterance& u : corpus.train) {
        const StyleLaw lf = f0_law(u.style_id);
        const StyleLaw le = energy_law(u.style_id);
        const StyleLaw ld = logdur_law(u.style_id);
        for (int i = 0; i < u.targets.size(); ++i) {
            const Phone& ph = corpus.inventory.phones[static_cast<std::size_t>(u.phones[static_cast<std::size_t>(i)])];
            const double f0_expect =
                ph.voiced ? lf.amplitude * std::sin(tau * i / lf.period) + phone_offset(ph.symbol, "f0") : 0.0;
            REQUIRE(u.targets.f0_z[static_cast<std::size_t>(i)] == f0_expect);
            REQUIRE(u.targets.energy_z[static_cast<std::size_t>(i)] ==
                    le.amplitude * std::sin(tau * i / le.period) + phone_offset(ph.symbol, "energy"));
            REQUIRE(u.targets.logdur_z[static_cast<std::size_t>(i)] ==
                    ld.amplitude * std::sin(tau * i / ld.period) + phone_offset(ph.symbol, "logdur"));
        }
    }
}

TEST_CASE("per-style f0 variance matches the generative law within 20%") {
    // Monte-Carlo oracle: with phase uniform per utterance, Var[a sin + b + eps]
    // = a^2/2 + Var_b + sigma^2; the per-phone offsets contribute Var_b < 0.04,
    // so the a^2/2 + sigma^2 prediction must hold within the 20% envelope.
    CorpusConfig cfg;
    cfg.train_utterances = 4000;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    const Corpus corpus = gen_corpus(cfg, 20240601);
    std::vector<double> sum(static_cast<std::size_t>(cfg.num_styles), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(cfg.num_styles), 0.0);
    std::vector<long long> n(static_cast<std::size_t>(cfg.num_styles), 0);
    long long total = 0;
    for (const Utterance& u : corpus.train) {
        for (int i = 0; i < u.targets.size(); ++i) {
            ++total;
            if (!u.targets.voiced_mask[static_cast<std::size_t>(i)]) continue;
            const double x = u.targets.f0_z[static_cast<std::size_t>(i)];
            const std::size_t s = static_cast<std::size_t>(u.style_id);
            sum[s] += x;
            sq[s] += x * x;
            ++n[s];
        }
    }
    REQUIRE(total > 90000);  // enough draws for the variance estimate
    for (int s = 0; s < cfg.num_styles; ++s) {
        const std::size_t si = static_cast<std::size_t>(s);
        REQUIRE(n[si] > 5000);
        const double mean = sum[si] / static_cast<double>(n[si]);
        const double var = sq[si] / static_cast<double>(n[si]) - mean * mean;
        const double a = f0_law(s).amplitude;
        const double predicted = a * a / 2.0 + cfg.noise_sigma * cfg.noise_sigma;
        INFO("style " << s << " var=" << var << " predicted=" << predicted);
        REQUIRE(std::abs(var / predicted - 1.0) < 0.2);
    }
}

TEST_CASE("train-split feature means stay near zero") {
    CorpusConfig cfg;
    cfg.train_utterances = 2000;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    const Corpus corpus = gen_corpus(cfg, 77);
    REQUIRE(std::abs(corpus.z_stats.f0_mean) < 0.1);
    REQUIRE(std::abs(corpus.z_stats.energy_mean) < 0.1);
    REQUIRE(std::abs(corpus.z_stats.logdur_mean) < 0.1);
}

TEST_CASE("save then load is the identity") {
    CorpusConfig cfg;
    cfg.train_utterances = 12;
    cfg.val_utterances = 4;
    cfg.test_utterances = 3;
    const Corpus corpus = gen_corpus(cfg, 5);
    const std::string path = temp_path("roundtrip");
    save_corpus(corpus, path);
    const Corpus loaded = load_corpus(path);
    REQUIRE(loaded == corpus);
    std::remove(path.c_str());
}

TEST_CASE("empty splits still produce a loadable file") {
    CorpusConfig cfg;
    cfg.train_utterances = 0;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    const Corpus corpus = gen_corpus(cfg, 1);
    const std::string path = temp_path("empty");
    save_corpus(corpus, path);
    const Corpus loaded = load_corpus(path);
    REQUIRE(loaded == corpus);
    REQUIRE(loaded.train.empty());
    REQUIRE(loaded.val.empty());
    REQUIRE(loaded.test.empty());
    std::remove(path.c_str());
}

TEST_CASE("truncated file is rejected with the offending line number") {
    CorpusConfig cfg;
    cfg.train_utterances = 3;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    const Corpus corpus = gen_corpus(cfg, 5);
    const std::string path = temp_path("truncated");
    save_corpus(corpus, path);
    std::string content = slurp(path);
    content.resize(content.size() - 40);  // cut into the last record
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
    }
    try {
        load_corpus(path);
        FAIL("expected parse failure");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("line 4") != std::string::npos);
        REQUIRE(msg.find("last valid line 3") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("malformed record is rejected with its line number") {
    CorpusConfig cfg;
    cfg.train_utterances = 2;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    const std::string path = temp_path("malformed");
    save_corpus(gen_corpus(cfg, 5), path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "{\"id\": \"train-9999\", \"broken\": true}\n";
    }
    try {
        load_corpus(path);
        FAIL("expected malformed-record failure");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("line 4") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("an inventory without voiced phones is rejected") {
    PhoneInventory inv;
    inv.phones = {{"p", false}, {"t", false}};
    CorpusConfig cfg;
    REQUIRE_THROWS_AS(gen_corpus(cfg, 1, inv), std::invalid_argument);
}

TEST_CASE("splits are disjoint by utterance id") {
    CorpusConfig cfg;
    cfg.train_utterances = 30;
    cfg.val_utterances = 10;
    cfg.test_utterances = 10;
    const Corpus corpus = gen_corpus(cfg, 9);
    std::set<std::string> ids;
    for (const auto* split : {&corpus.train, &corpus.val, &corpus.test}) {
        for (const Utterance& u : *split) {
            REQUIRE(ids.insert(u.id).second);
        }
    }
    REQUIRE(ids.size() == 50);
}

TEST_CASE("structure follows the config bounds and the inventory voicing") {
    CorpusConfig cfg;
    cfg.train_utterances = 50;
    cfg.val_utterances = 0;
    cfg.test_utterances = 0;
    cfg.min_phones = 8;
    cfg.max_phones = 40;
    cfg.min_voiced_phones = 2;
    const Corpus corpus = gen_corpus(cfg, 11);
    for (const Utterance& u : corpus.train) {
        const int n = static_cast<int>(u.phones.size());
        REQUIRE(n >= cfg.min_phones);
        REQUIRE(n <= cfg.max_phones);
        REQUIRE(u.targets.size() == n);
        REQUIRE(u.speaker_id >= 0);
        REQUIRE(u.speaker_id < cfg.num_speakers);
        REQUIRE(u.style_id >= 0);
        REQUIRE(u.style_id < cfg.num_styles);
        int voiced = 0;
        for (int i = 0; i < n; ++i) {
            const Phone& ph = corpus.inventory.phones[static_cast<std::size_t>(u.phones[static_cast<std::size_t>(i)])];
            REQUIRE(u.targets.voiced_mask[static_cast<std::size_t>(i)] == ph.voiced);
            if (!ph.voiced) REQUIRE(u.targets.f0_z[static_cast<std::size_t>(i)] == 0.0);
            voiced += ph.voiced ? 1 : 0;
            REQUIRE(std::isfinite(u.targets.f0_z[static_cast<std::size_t>(i)]));
            REQUIRE(std::isfinite(u.targets.energy_z[static_cast<std::size_t>(i)]));
            REQUIRE(std::isfinite(u.targets.logdur_z[static_cast<std::size_t>(i)]));
        }
        REQUIRE(voiced >= cfg.min_voiced_phones);
    }
}

TEST_CASE("config digest tracks config content") {
    CorpusConfig a, b;
    REQUIRE(a.digest() == b.digest());
    b.noise_sigma = 0.0;
    REQUIRE(a.digest() != b.digest());
}

TEST_CASE("default inventory has 32 phones, 14 voiced") {
    const PhoneInventory inv = PhoneInventory::defaults();
    REQUIRE(inv.size() == 32);
    REQUIRE(inv.voiced_count() == 14);
    REQUIRE(inv.index_of("a") == 0);
    REQUIRE(inv.index_of("zz") == -1);
}
