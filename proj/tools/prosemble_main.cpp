// Command-line front end: pipeline stages as subcommands plus a standalone
// A/B pair scorer. Exit codes: 0 success, 1 usage/config error (nothing
// written), 2 runtime failure (error JSON lands next to the other outputs).
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <prosemble/pipeline.hpp>

namespace {

using namespace prosemble;

// Bad flags, unreadable config, invalid combinations: refused before any
// output exists.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CliState {
    std::string config_path;
    std::string profile = "smoke";
    std::string out_dir;
    std::string criterion;
    std::string polarity;
    std::string proxy;
    std::string file_a;
    std::string file_b;
    bool gv_mean = false;
    int workers = 0;
    int listeners = 0;
    std::uint64_t seed_corpus = 0;
    std::uint64_t seed_train_a = 0;
    std::uint64_t seed_train_b = 0;
    std::uint64_t seed_panel = 0;
    std::uint64_t seed_noise = 0;

    CLI::Option* out_opt = nullptr;
    CLI::Option* workers_opt = nullptr;
    CLI::Option* listeners_opt = nullptr;
    CLI::Option* proxy_opt = nullptr;
    CLI::Option* criterion_opt = nullptr;
    CLI::Option* polarity_opt = nullptr;
    CLI::Option* seed_corpus_opt = nullptr;
    CLI::Option* seed_train_a_opt = nullptr;
    CLI::Option* seed_train_b_opt = nullptr;
    CLI::Option* seed_panel_opt = nullptr;
    CLI::Option* seed_noise_opt = nullptr;
};

void add_common_options(CLI::App* sub, CliState& s) {
    sub->add_option("--config", s.config_path, "JSON run-config file; overlays the profile");
    sub->add_option("--profile", s.profile, "base profile")->check(CLI::IsMember({"smoke", "full"}));
    s.out_opt = sub->add_option("--out", s.out_dir, "output directory");
    s.workers_opt = sub->add_option("--workers", s.workers, "worker pool size")->check(CLI::PositiveNumber);
    s.seed_corpus_opt = sub->add_option("--seed-corpus", s.seed_corpus, "corpus generation seed");
    s.seed_train_a_opt = sub->add_option("--seed-train-a", s.seed_train_a, "member A training seed");
    s.seed_train_b_opt = sub->add_option("--seed-train-b", s.seed_train_b, "member B training seed");
    s.seed_panel_opt = sub->add_option("--seed-panel", s.seed_panel, "listener panel seed");
    s.seed_noise_opt = sub->add_option("--seed-noise", s.seed_noise, "synthesis noise seed");
}

RunConfig resolve_config(const CliState& s) {
    RunConfig cfg = s.profile == "full" ? RunConfig::full_profile() : RunConfig::smoke_profile();
    if (!s.config_path.empty()) {
        std::ifstream in(s.config_path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config file: " + s.config_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + s.config_path + " is not valid JSON: " + e.what());
        }
        try {
            cfg = RunConfig::from_json(j, cfg);
        } catch (const std::exception& e) {
            throw ConfigError("config file " + s.config_path + ": " + e.what());
        }
    }
    if (s.out_opt && s.out_opt->count() > 0) cfg.out_dir = s.out_dir;
    if (s.workers_opt && s.workers_opt->count() > 0) cfg.workers = s.workers;
    if (s.listeners_opt && s.listeners_opt->count() > 0) cfg.panel.listeners = s.listeners;
    if (s.seed_corpus_opt && s.seed_corpus_opt->count() > 0) cfg.seeds.corpus = s.seed_corpus;
    if (s.seed_train_a_opt && s.seed_train_a_opt->count() > 0) cfg.seeds.train_a = s.seed_train_a;
    if (s.seed_train_b_opt && s.seed_train_b_opt->count() > 0) cfg.seeds.train_b = s.seed_train_b;
    if (s.seed_panel_opt && s.seed_panel_opt->count() > 0) cfg.seeds.panel = s.seed_panel;
    if (s.seed_noise_opt && s.seed_noise_opt->count() > 0) cfg.seeds.noise = s.seed_noise;
    try {
        if (s.proxy_opt && s.proxy_opt->count() > 0) cfg.proxy = proxy_from_name(s.proxy);
        if (s.criterion_opt && s.criterion_opt->count() > 0) {
            CriterionSpec spec;
            spec.kind = criterion_from_name(s.criterion);
            if (s.polarity_opt && s.polarity_opt->count() > 0) spec.polarity = polarity_from_name(s.polarity);
            cfg.criteria = {spec};
        }
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

int run_subcommand(const std::string& name, const CliState& s) {
    const RunConfig cfg = resolve_config(s);
    try {
        if (name == "gen-corpus") {
            stage_gen_corpus(cfg);
        } else if (name == "train") {
            const Corpus corpus = load_stage_corpus(cfg);
            stage_train(cfg, corpus);
        } else if (name == "ensemble") {
            stage_ensemble(cfg);
        } else if (name == "render") {
            const Corpus corpus = load_stage_corpus(cfg);
            stage_render(cfg, stage_ensemble(cfg), corpus);
        } else if (name == "score") {
            const Corpus corpus = load_stage_corpus(cfg);
            stage_score(cfg, stage_ensemble(cfg), corpus);
        } else if (name == "simulate") {
            const Corpus corpus = load_stage_corpus(cfg);
            stage_simulate(cfg, stage_ensemble(cfg), corpus);
        } else if (name == "evaluate") {
            run_study(cfg);
        } else if (name == "report") {
            stage_report(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "prosemble " << name << ": " << e.what() << '\n';
        std::error_code ignored;
        std::filesystem::create_directories(cfg.out_dir, ignored);
        std::ofstream err(OutPaths(cfg.out_dir).error_file(), std::ios::binary);
        if (err) err << nlohmann::json{{"subcommand", name}, {"error", e.what()}}.dump(2) << '\n';
        return 2;
    }
    return 0;
}

// `score --criterion K --a X --b Y`: no run directory involved; the
// selection (with stage-call counts) goes to stdout as JSON.
int run_standalone_score(const CliState& s) {
    if (s.criterion_opt->count() == 0) throw ConfigError("standalone scoring needs --criterion");
    const CriterionKind kind = [&] {
        try {
            return criterion_from_name(s.criterion);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }();
    Polarity polarity = Polarity::Highest;
    if (s.polarity_opt->count() > 0) {
        try {
            polarity = polarity_from_name(s.polarity);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    try {
        StageCounters counters;
        const SelectionResult result = [&] {
            try {
                return score_files(kind, polarity, s.file_a, s.file_b, s.gv_mean, &counters);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());  // wrong input kind for the criterion
            }
        }();
        nlohmann::json j = result.to_json();
        j["criterion"] = criterion_name(kind);
        j["polarity"] = polarity_name(polarity);
        j["stage_calls"] = {{"afp_forwards", counters.afp_forwards},
                            {"synth_calls", counters.synth_calls},
                            {"mel_calls", counters.mel_calls},
                            {"pitch_calls", counters.pitch_calls}};
        std::cout << j.dump(2) << '\n';
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        std::cerr << "prosemble score: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prosody ensemble selection workbench"};
    app.require_subcommand(1);

    std::map<std::string, CliState> states;
    const char* stage_names[] = {"gen-corpus", "train", "ensemble", "render", "score",
                                 "simulate",   "evaluate", "report"};
    const char* stage_help[] = {"generate and persist the synthetic corpus",
                                "train both ensemble members on the persisted corpus",
                                "validate member checkpoints and write ensemble metadata",
                                "synthesize test-set renditions to WAV plus feature JSONL",
                                "run the selection criteria over the test set (or one A/B pair)",
                                "run the simulated listener panel over the test renditions",
                                "full study: corpus, training, scoring, panel, statistics, report",
                                "rebuild report.md and results.csv from persisted artifacts"};
    for (std::size_t i = 0; i < std::size(stage_names); ++i) {
        CLI::App* sub = app.add_subcommand(stage_names[i], stage_help[i]);
        CliState& s = states[stage_names[i]];
        add_common_options(sub, s);
        const std::string name = stage_names[i];
        if (name == "score" || name == "evaluate" || name == "simulate") {
            s.criterion_opt = sub->add_option("--criterion", s.criterion, "selection criterion")
                                  ->check(CLI::IsMember({"gv", "wav-f0", "afp-f0"}));
            s.polarity_opt =
                sub->add_option("--polarity", s.polarity, "pick side")->check(CLI::IsMember({"highest", "lowest"}));
        }
        if (name == "simulate" || name == "evaluate") {
            s.proxy_opt = sub->add_option("--proxy", s.proxy, "listener expressivity proxy")
                              ->check(CLI::IsMember({"contour-f0-variance", "duration-variance", "random"}));
            s.listeners_opt = sub->add_option("--listeners", s.listeners, "panel size")->check(CLI::PositiveNumber);
        }
        if (name == "score") {
            sub->add_option("--a", s.file_a, "rendition A: .wav or feature JSON");
            sub->add_option("--b", s.file_b, "rendition B: .wav or feature JSON");
            sub->add_flag("--gv-mean", s.gv_mean, "average GV over coefficients instead of summing");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    const CliState& s = states[name];
    try {
        if (name == "score" && (!s.file_a.empty() || !s.file_b.empty())) {
            if (s.file_a.empty() || s.file_b.empty()) throw ConfigError("standalone scoring needs both --a and --b");
            return run_standalone_score(s);
        }
        return run_subcommand(name, s);
    } catch (const ConfigError& e) {
        std::cerr << "prosemble " << name << ": " << e.what() << '\n';
        return 1;
    }
}
