#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prosemble/adam.hpp"
#include "prosemble/common.hpp"
#include "prosemble/corpus.hpp"
#include "prosemble/rng.hpp"
#include "prosemble/tape.hpp"
#include "prosemble/tensor.hpp"

namespace prosemble {

constexpr int kPhoneEmbedDim = 32;
constexpr int kStyleEmbedDim = 8;
constexpr int kAfpInputDim = kPhoneEmbedDim + kStyleEmbedDim + 1;  // + normalized position
constexpr int kAfpOutputDim = 3;                                  // f0_z, energy_z, logdur_z
constexpr double kConvDropout = 0.1;

enum class Architecture { Recurrent, Convolutional };

inline std::string architecture_name(Architecture a) {
    return a == Architecture::Recurrent ? "recurrent" : "convolutional";
}

inline Architecture architecture_from_name(const std::string& name) {
    if (name == "recurrent" || name == "rnn") return Architecture::Recurrent;
    if (name == "convolutional" || name == "conv") return Architecture::Convolutional;
    throw std::invalid_argument("unknown architecture '" + name + "'");
}

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
};

// Bi-LSTM dimensions per direction, in layer order.
constexpr int kLstmDims[4] = {64, 64, 32, 32};
constexpr int kFcDim = 16;
constexpr int kConvFilters = 256;
constexpr int kConvKernel = 3;

inline std::vector<ParamSpec> param_manifest(Architecture arch, int inventory_size, int num_styles) {
    std::vector<ParamSpec> specs;
    specs.push_back({"phone_embedding", {inventory_size + 1, kPhoneEmbedDim}});  // + padding row
    specs.push_back({"style_embedding", {num_styles, kStyleEmbedDim}});
    if (arch == Architecture::Recurrent) {
        int in_dim = kAfpInputDim;
        for (int layer = 0; layer < 4; ++layer) {
            const int h = kLstmDims[layer];
            for (const char* dir : {"fw", "bw"}) {
                const std::string prefix = "lstm" + std::to_string(layer + 1) + "_" + dir;
                specs.push_back({prefix + "_wx", {in_dim, 4 * h}});
                specs.push_back({prefix + "_wh", {h, 4 * h}});
                specs.push_back({prefix + "_b", {4 * h}});
            }
            in_dim = 2 * h;
        }
        specs.push_back({"fc_w", {2 * kLstmDims[3], kFcDim}});
        specs.push_back({"fc_b", {kFcDim}});
        specs.push_back({"proj_w", {kFcDim, kAfpOutputDim}});
        specs.push_back({"proj_b", {kAfpOutputDim}});
    } else {
        specs.push_back({"conv1_w", {kConvKernel, kAfpInputDim, kConvFilters}});
        specs.push_back({"conv1_b", {kConvFilters}});
        specs.push_back({"ln1_gain", {kConvFilters}});
        specs.push_back({"ln1_bias", {kConvFilters}});
        specs.push_back({"conv2_w", {kConvKernel, kConvFilters, kConvFilters}});
        specs.push_back({"conv2_b", {kConvFilters}});
        specs.push_back({"ln2_gain", {kConvFilters}});
        specs.push_back({"ln2_bias", {kConvFilters}});
        specs.push_back({"proj_w", {kConvFilters, kAfpOutputDim}});
        specs.push_back({"proj_b", {kAfpOutputDim}});
    }
    return specs;
}

struct TrainingMeta {
    long long iterations = 0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    std::string config_digest;

    bool operator==(const TrainingMeta&) const = default;
};

struct AfpModel {
    Architecture arch = Architecture::Recurrent;
    std::uint64_t seed = 0;
    int inventory_size = 0;
    int num_styles = 0;
    std::vector<std::pair<std::string, Tensor<float>>> params;
    TrainingMeta meta;

    int pad_phone_id() const { return inventory_size; }

    const Tensor<float>& param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        throw std::logic_error("afp: no parameter named " + name);
    }

    bool same_parameters(const AfpModel& other) const {
        if (params.size() != other.params.size()) return false;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].first != other.params[i].first) return false;
            if (params[i].second.values != other.params[i].second.values) return false;
        }
        return true;
    }
};

// Scaled-uniform init, bound sqrt(6 / (fan_in + fan_out)); biases zero,
// normalization gains one.
inline AfpModel build_afp(Architecture arch, std::uint64_t seed, int inventory_size, int num_styles) {
    if (inventory_size < 1 || num_styles < 1) throw std::invalid_argument("afp: bad inventory/style count");
    AfpModel model;
    model.arch = arch;
    model.seed = seed;
    model.inventory_size = inventory_size;
    model.num_styles = num_styles;
    Rng rng(derive_seed(seed, "afp-init"));
    for (const ParamSpec& spec : param_manifest(arch, inventory_size, num_styles)) {
        Tensor<float> t = Tensor<float>::zeros(spec.shape);
        const bool is_bias = spec.name.ends_with("_b") || spec.name.ends_with("_bias");
        const bool is_gain = spec.name.ends_with("_gain");
        if (is_gain) {
            t = Tensor<float>::full(spec.shape, 1.0f);
        } else if (!is_bias) {
            int fan_in = 0, fan_out = 0;
            if (spec.shape.size() == 2) {
                fan_in = spec.shape[0];
                fan_out = spec.shape[1];
            } else {
                fan_in = spec.shape[0] * spec.shape[1];
                fan_out = spec.shape[0] * spec.shape[2];
            }
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (float& v : t.values) v = static_cast<float>(rng.uniform(-bound, bound));
        }
        model.params.emplace_back(spec.name, std::move(t));
    }
    return model;
}

// One batch in time-major layout: row index = t * batch + b.
struct BatchInput {
    int batch = 0;
    int time = 0;
    std::vector<int> phone_ids;    // time * batch
    std::vector<int> style_ids;    // time * batch
    std::vector<float> positions;  // time * batch, i/(T-1) within each utterance
};

inline BatchInput make_batch_input(const std::vector<const Utterance*>& utts, int pad_phone_id) {
    BatchInput batch;
    batch.batch = static_cast<int>(utts.size());
    for (const Utterance* u : utts) batch.time = std::max(batch.time, static_cast<int>(u->phones.size()));
    const std::size_t rows = static_cast<std::size_t>(batch.time) * static_cast<std::size_t>(batch.batch);
    batch.phone_ids.assign(rows, pad_phone_id);
    batch.style_ids.assign(rows, 0);
    batch.positions.assign(rows, 1.0f);
    for (int b = 0; b < batch.batch; ++b) {
        const Utterance& u = *utts[static_cast<std::size_t>(b)];
        const int len = static_cast<int>(u.phones.size());
        for (int t = 0; t < batch.time; ++t) {
            const std::size_t row = static_cast<std::size_t>(t) * batch.batch + static_cast<std::size_t>(b);
            batch.style_ids[row] = u.style_id;
            if (t < len) {
                batch.phone_ids[row] = u.phones[static_cast<std::size_t>(t)];
                batch.positions[row] = len > 1 ? static_cast<float>(t) / static_cast<float>(len - 1) : 0.0f;
            }
        }
    }
    return batch;
}

namespace detail {

struct ForwardGraph {
    int output = -1;  // [time*batch, 3]
    std::vector<std::pair<std::string, int>> layer_nodes;
};

// Single LSTM direction over the time-major input; returns [T*B, H] in time
// order. `reverse` runs the recurrence from the last step backwards.
template <typename TapeT>
int lstm_direction(TapeT& tape, int x, int wx, int wh, int b, int batch, int time, bool reverse) {
    const int h = tape.shape(wh)[0];
    const int xw = tape.add(tape.matmul(x, wx), b);
    int h_state = tape.constant(Tensor<float>::zeros({batch, h}));
    int c_state = tape.constant(Tensor<float>::zeros({batch, h}));
    std::vector<int> outputs(static_cast<std::size_t>(time), -1);
    for (int step = 0; step < time; ++step) {
        const int t = reverse ? time - 1 - step : step;
        const int z = tape.add(tape.slice(xw, t * batch, (t + 1) * batch, 0, 4 * h), tape.matmul(h_state, wh));
        const int i_gate = tape.sigmoid(tape.slice(z, 0, batch, 0, h));
        const int f_gate = tape.sigmoid(tape.slice(z, 0, batch, h, 2 * h));
        const int g_gate = tape.tanh(tape.slice(z, 0, batch, 2 * h, 3 * h));
        const int o_gate = tape.sigmoid(tape.slice(z, 0, batch, 3 * h, 4 * h));
        c_state = tape.add(tape.mul(f_gate, c_state), tape.mul(i_gate, g_gate));
        h_state = tape.mul(o_gate, tape.tanh(c_state));
        outputs[static_cast<std::size_t>(t)] = h_state;
    }
    return tape.concat(outputs, 0);
}

// Builds the full forward graph. `params` holds tape ids in manifest order.
inline ForwardGraph forward_graph(Tape<float>& tape, const AfpModel& model, const std::vector<int>& params,
                                  const BatchInput& batch, bool train_mode, Rng* dropout_rng,
                                  double dropout_rate = kConvDropout) {
    ForwardGraph graph;
    std::map<std::string, int> by_name;
    for (std::size_t i = 0; i < model.params.size(); ++i) by_name[model.params[i].first] = params[i];
    auto p = [&](const std::string& name) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw std::logic_error("afp: no parameter named " + name);
        return it->second;
    };

    const std::size_t rows = batch.phone_ids.size();
    Tensor<float> pos = Tensor<float>::zeros({static_cast<int>(rows), 1});
    for (std::size_t i = 0; i < rows; ++i) pos.values[i] = batch.positions[i];
    const int phone_vec = tape.embedding(p("phone_embedding"), batch.phone_ids);
    const int style_vec = tape.embedding(p("style_embedding"), batch.style_ids);
    int x = tape.concat({phone_vec, style_vec, tape.constant(std::move(pos))}, 1);
    graph.layer_nodes.emplace_back("input", x);

    if (model.arch == Architecture::Recurrent) {
        for (int layer = 0; layer < 4; ++layer) {
            const std::string prefix = "lstm" + std::to_string(layer + 1);
            const int fw = lstm_direction(tape, x, p(prefix + "_fw_wx"), p(prefix + "_fw_wh"), p(prefix + "_fw_b"),
                                          batch.batch, batch.time, false);
            const int bw = lstm_direction(tape, x, p(prefix + "_bw_wx"), p(prefix + "_bw_wh"), p(prefix + "_bw_b"),
                                          batch.batch, batch.time, true);
            x = tape.concat({fw, bw}, 1);
            graph.layer_nodes.emplace_back(prefix, x);
        }
        x = tape.tanh(tape.add(tape.matmul(x, p("fc_w")), p("fc_b")));
        graph.layer_nodes.emplace_back("fc", x);
    } else {
        for (int block = 1; block <= 2; ++block) {
            const std::string prefix = std::to_string(block);
            x = tape.relu(tape.conv1d(x, p("conv" + prefix + "_w"), p("conv" + prefix + "_b"), batch.batch, batch.time));
            x = tape.layer_norm(x, p("ln" + prefix + "_gain"), p("ln" + prefix + "_bias"));
            if (train_mode && dropout_rate > 0.0) {
                if (dropout_rng == nullptr) throw std::logic_error("afp: train-mode forward needs a dropout rng");
                x = tape.dropout(x, static_cast<float>(1.0 - dropout_rate), true, *dropout_rng);
            }
            graph.layer_nodes.emplace_back("conv_block" + prefix, x);
        }
    }
    graph.output = tape.add(tape.matmul(x, p("proj_w")), p("proj_b"));
    graph.layer_nodes.emplace_back("projection", graph.output);
    return graph;
}

}  // namespace detail

// Inference forward pass for one utterance; deterministic (dropout off).
// Predicted voiced_mask is carried over from the utterance's inventory-derived
// mask.
inline ProsodyTargets predict(const AfpModel& model, const Utterance& utt) {
    if (utt.phones.empty()) throw std::invalid_argument("afp: cannot predict an empty utterance");
    Tape<float> tape;
    std::vector<int> params;
    params.reserve(model.params.size());
    for (const auto& [name, tensor] : model.params) params.push_back(tape.constant(tensor));
    const BatchInput batch = make_batch_input({&utt}, model.pad_phone_id());
    const detail::ForwardGraph graph = detail::forward_graph(tape, model, params, batch, false, nullptr);
    for (const auto& [layer, node] : graph.layer_nodes) {
        if (!all_finite(tape.value(node).values))
            throw std::runtime_error("afp: non-finite activation in layer '" + layer + "'");
    }
    const Tensor<float>& out = tape.value(graph.output);
    ProsodyTargets pred;
    const int n = static_cast<int>(utt.phones.size());
    for (int i = 0; i < n; ++i) {
        pred.f0_z.push_back(out.at(i, 0));
        pred.energy_z.push_back(out.at(i, 1));
        pred.logdur_z.push_back(out.at(i, 2));
    }
    pred.voiced_mask = utt.targets.voiced_mask;
    return pred;
}

struct TrainConfig {
    int iterations = 5000;
    int batch_size = 16;
    double lr = 1e-3;
    int bucket_width = 4;      // utterance-length bucket granularity
    int val_interval = 250;    // validation cadence for the loss log
    double early_stop_val = 0.0;  // stop once val loss falls below; 0 disables
    double dropout = kConvDropout;  // convolutional blocks only
    double weight_decay = 0.0;      // decoupled L2 shrinkage on weight matrices
    double lr_min_fraction = 1.0;   // <1 enables cosine decay from lr to lr*fraction
    std::uint64_t seed = 0;
    std::string loss_log_path;  // JSONL {iteration, train_loss, val_loss}; empty disables

    nlohmann::json to_json() const {
        return {{"iterations", iterations},     {"batch_size", batch_size},
                {"lr", lr},                     {"bucket_width", bucket_width},
                {"val_interval", val_interval}, {"early_stop_val", early_stop_val},
                {"dropout", dropout},           {"weight_decay", weight_decay},
                {"lr_min_fraction", lr_min_fraction}};
    }

    // Seed and log path are runtime wiring, not part of the recipe, so they
    // stay out of the JSON form (and of the digest).
    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.iterations = j.value("iterations", c.iterations);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.bucket_width = j.value("bucket_width", c.bucket_width);
        c.val_interval = j.value("val_interval", c.val_interval);
        c.early_stop_val = j.value("early_stop_val", c.early_stop_val);
        c.dropout = j.value("dropout", c.dropout);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.lr_min_fraction = j.value("lr_min_fraction", c.lr_min_fraction);
        return c;
    }

    std::string digest() const { return hex64(fnv1a64(to_json().dump())); }
};

namespace detail {

inline double masked_mse(const AfpModel& model, const std::vector<const Utterance*>& utts) {
    double total = 0.0;
    long long count = 0;
    for (const Utterance* u : utts) {
        const ProsodyTargets pred = predict(model, *u);
        for (int i = 0; i < pred.size(); ++i) {
            const std::size_t si = static_cast<std::size_t>(i);
            const double df = pred.f0_z[si] - u->targets.f0_z[si];
            const double de = pred.energy_z[si] - u->targets.energy_z[si];
            const double dd = pred.logdur_z[si] - u->targets.logdur_z[si];
            total += df * df + de * de + dd * dd;
            count += 3;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// Average per-value squared error over a split (inference mode).
inline double validation_loss(const AfpModel& model, const std::vector<Utterance>& split) {
    std::vector<const Utterance*> ptrs;
    ptrs.reserve(split.size());
    for (const Utterance& u : split) ptrs.push_back(&u);
    return detail::masked_mse(model, ptrs);
}

// Adam training with length-bucketed batches and padding-masked L2 loss.
// The model is trained in place and the checkpoint metadata filled in.
inline void train(AfpModel& model, const Corpus& corpus, const TrainConfig& cfg) {
    if (corpus.train.empty()) throw std::invalid_argument("afp: empty train split");
    if (cfg.iterations < 0 || cfg.batch_size < 1) throw std::invalid_argument("afp: bad train config");

    // length buckets over the train split
    std::map<int, std::vector<int>> buckets;
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        const int len = static_cast<int>(corpus.train[i].phones.size());
        buckets[len / std::max(1, cfg.bucket_width)].push_back(static_cast<int>(i));
    }
    std::vector<const std::vector<int>*> bucket_of(corpus.train.size());
    for (const auto& [key, members] : buckets)
        for (int idx : members) bucket_of[static_cast<std::size_t>(idx)] = &members;

    Rng sample_rng(derive_seed(cfg.seed, "afp-batches"));
    Rng dropout_rng(derive_seed(cfg.seed, "afp-dropout"));
    Adam<float> opt(AdamConfig{.lr = cfg.lr, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8});

    std::ofstream loss_log;
    if (!cfg.loss_log_path.empty()) {
        loss_log.open(cfg.loss_log_path, std::ios::binary);
        if (!loss_log) throw std::runtime_error("afp: cannot write loss log " + cfg.loss_log_path);
    }
    double val = validation_loss(model, corpus.val);
    double train_loss_avg = 0.0;
    bool have_train_loss = false;
    auto log_point = [&](long long iter) {
        if (!loss_log) return;
        nlohmann::json rec{{"iteration", iter}, {"val_loss", val}};
        if (have_train_loss) {
            rec["train_loss"] = train_loss_avg;
        } else {
            rec["train_loss"] = nullptr;
        }
        loss_log << rec.dump() << '\n';
    };
    log_point(0);

    long long iter = 0;
    for (; iter < cfg.iterations; ++iter) {
        double lr_now = cfg.lr;
        if (cfg.lr_min_fraction < 1.0 && cfg.iterations > 1) {
            constexpr double kPi = 3.141592653589793;
            const double progress = static_cast<double>(iter) / static_cast<double>(cfg.iterations - 1);
            const double lr_lo = cfg.lr * cfg.lr_min_fraction;
            lr_now = lr_lo + 0.5 * (cfg.lr - lr_lo) * (1.0 + std::cos(kPi * progress));
            opt.set_lr(lr_now);
        }
        // sample a bucket via a uniform utterance, then fill the batch from it
        const int anchor = sample_rng.uniform_int(0, static_cast<int>(corpus.train.size()) - 1);
        const std::vector<int>& bucket = *bucket_of[static_cast<std::size_t>(anchor)];
        std::vector<const Utterance*> utts;
        utts.push_back(&corpus.train[static_cast<std::size_t>(anchor)]);
        for (int b = 1; b < cfg.batch_size; ++b) {
            const int pick = bucket[static_cast<std::size_t>(sample_rng.uniform_int(0, static_cast<int>(bucket.size()) - 1))];
            utts.push_back(&corpus.train[static_cast<std::size_t>(pick)]);
        }

        const BatchInput batch = make_batch_input(utts, model.pad_phone_id());
        const std::size_t rows = batch.phone_ids.size();
        Tensor<float> target = Tensor<float>::zeros({static_cast<int>(rows), kAfpOutputDim});
        Tensor<float> mask = Tensor<float>::zeros({static_cast<int>(rows)});
        for (int b = 0; b < batch.batch; ++b) {
            const Utterance& u = *utts[static_cast<std::size_t>(b)];
            for (int t = 0; t < static_cast<int>(u.phones.size()); ++t) {
                const std::size_t row = static_cast<std::size_t>(t) * batch.batch + static_cast<std::size_t>(b);
                const std::size_t st = static_cast<std::size_t>(t);
                target.values[row * 3 + 0] = static_cast<float>(u.targets.f0_z[st]);
                target.values[row * 3 + 1] = static_cast<float>(u.targets.energy_z[st]);
                target.values[row * 3 + 2] = static_cast<float>(u.targets.logdur_z[st]);
                mask.values[row] = 1.0f;
            }
        }

        Tape<float> tape;
        std::vector<int> params;
        params.reserve(model.params.size());
        for (const auto& [name, tensor] : model.params) params.push_back(tape.leaf(tensor));
        const detail::ForwardGraph graph =
            detail::forward_graph(tape, model, params, batch, true, &dropout_rng, cfg.dropout);
        const int loss =
            tape.mse_masked(graph.output, tape.constant(std::move(target)), tape.constant(std::move(mask)));
        const double loss_value = tape.value(loss).values[0];
        if (!std::isfinite(loss_value))
            throw std::runtime_error("afp: training diverged at iteration " + std::to_string(iter + 1));
        tape.backward(loss);

        std::vector<Tensor<float>*> param_ptrs;
        std::vector<const std::vector<float>*> grads;
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            param_ptrs.push_back(&model.params[i].second);
            grads.push_back(&tape.grad(params[i]));
        }
        opt.step(param_ptrs, grads);
        if (cfg.weight_decay > 0.0) {
            const float shrink = static_cast<float>(1.0 - lr_now * cfg.weight_decay);
            for (auto& [name, tensor] : model.params) {
                if (name.ends_with("_b") || name.ends_with("_bias") || name.ends_with("_gain")) continue;
                for (float& v : tensor.values) v *= shrink;
            }
        }

        train_loss_avg = have_train_loss ? 0.98 * train_loss_avg + 0.02 * loss_value : loss_value;
        have_train_loss = true;
        if ((iter + 1) % cfg.val_interval == 0 || iter + 1 == cfg.iterations) {
            val = validation_loss(model, corpus.val);
            log_point(iter + 1);
            if (cfg.early_stop_val > 0.0 && val < cfg.early_stop_val) {
                ++iter;
                break;
            }
        }
    }

    model.meta.iterations = iter;
    model.meta.final_train_loss = have_train_loss ? train_loss_avg : validation_loss(model, corpus.train);
    model.meta.final_val_loss = corpus.val.empty() ? 0.0 : validation_loss(model, corpus.val);
    model.meta.config_digest = cfg.digest();
}

// ---- checkpoint persistence ----------------------------------------------
// Layout: magic "AFP1" | u32 header length | JSON header | raw little-endian
// float32 payloads in header order.

inline void save_checkpoint(const AfpModel& model, const std::string& path) {
    nlohmann::json names = nlohmann::json::array();
    for (const auto& [name, tensor] : model.params)
        names.push_back({{"name", name}, {"shape", tensor.shape}, {"dtype", "f32"}});
    const nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                                   {"architecture", architecture_name(model.arch)},
                                   {"seed", model.seed},
                                   {"inventory_size", model.inventory_size},
                                   {"num_styles", model.num_styles},
                                   {"params", names},
                                   {"training_meta",
                                    {{"iterations", model.meta.iterations},
                                     {"final_train_loss", model.meta.final_train_loss},
                                     {"final_val_loss", model.meta.final_val_loss},
                                     {"config_digest", model.meta.config_digest}}}};
    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write("AFP1", 4);
    const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, tensor] : model.params)
        out.write(reinterpret_cast<const char*>(tensor.values.data()),
                  static_cast<std::streamsize>(tensor.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline AfpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "AFP1")
        throw std::runtime_error("checkpoint: bad magic bytes in " + path);
    std::uint32_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), 4)) throw std::runtime_error("checkpoint: truncated header length");
    std::string header_str(len, '\0');
    if (!in.read(header_str.data(), len)) throw std::runtime_error("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: unparseable header: ") + e.what());
    }
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint: format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointFormatVersion));
    }
    AfpModel model;
    model.arch = architecture_from_name(header.at("architecture").get<std::string>());
    model.seed = header.at("seed").get<std::uint64_t>();
    model.inventory_size = header.at("inventory_size").get<int>();
    model.num_styles = header.at("num_styles").get<int>();
    const nlohmann::json& meta = header.at("training_meta");
    model.meta.iterations = meta.at("iterations").get<long long>();
    model.meta.final_train_loss = meta.at("final_train_loss").get<double>();
    model.meta.final_val_loss = meta.at("final_val_loss").get<double>();
    model.meta.config_digest = meta.at("config_digest").get<std::string>();

    const std::vector<ParamSpec> expected = param_manifest(model.arch, model.inventory_size, model.num_styles);
    const nlohmann::json& names = header.at("params");
    if (names.size() != expected.size())
        throw std::runtime_error("checkpoint: parameter count does not match the architecture");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const std::string name = names[i].at("name").get<std::string>();
        const std::vector<int> shape = names[i].at("shape").get<std::vector<int>>();
        if (name != expected[i].name || shape != expected[i].shape) {
            throw std::runtime_error("checkpoint: parameter '" + name + "' " + shape_string(shape) +
                                     " does not match architecture entry '" + expected[i].name + "' " +
                                     shape_string(expected[i].shape));
        }
        Tensor<float> t = Tensor<float>::zeros(shape);
        if (!in.read(reinterpret_cast<char*>(t.values.data()),
                     static_cast<std::streamsize>(t.values.size() * sizeof(float))))
            throw std::runtime_error("checkpoint: truncated payload for " + name);
        model.params.emplace_back(name, std::move(t));
    }
    return model;
}

// ---- ensembles ------------------------------------------------------------

struct Ensemble {
    std::string label;  // RNN-2, CONV-2, RNN-CONV, custom
    std::vector<AfpModel> members;  // exactly 2; index is rendition identity (0=A, 1=B)
};

inline Ensemble build_ensemble(std::vector<AfpModel> members, const std::string& label) {
    if (members.size() != 2) throw std::invalid_argument("ensemble: need exactly 2 members");
    const AfpModel& a = members[0];
    const AfpModel& b = members[1];
    if (a.arch == b.arch && a.seed == b.seed)
        throw std::invalid_argument("ensemble: members share architecture and seed");
    if (a.same_parameters(b)) throw std::invalid_argument("ensemble: members have identical parameters");
    if (label == "RNN-2") {
        if (a.arch != Architecture::Recurrent || b.arch != Architecture::Recurrent)
            throw std::invalid_argument("ensemble: RNN-2 requires two recurrent members");
    } else if (label == "CONV-2") {
        if (a.arch != Architecture::Convolutional || b.arch != Architecture::Convolutional)
            throw std::invalid_argument("ensemble: CONV-2 requires two convolutional members");
    } else if (label == "RNN-CONV") {
        if (a.arch == b.arch) throw std::invalid_argument("ensemble: RNN-CONV requires one member per architecture");
    } else if (label != "custom") {
        throw std::invalid_argument("ensemble: unknown label '" + label + "'");
    }
    return Ensemble{label, std::move(members)};
}

}  // namespace prosemble
