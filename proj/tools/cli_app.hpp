#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "headgate/attribution.hpp"
#include "headgate/bench/planted.hpp"
#include "headgate/bench/sweep.hpp"
#include "headgate/bench/task.hpp"
#include "headgate/bench/timing.hpp"
#include "headgate/forward.hpp"
#include "headgate/io.hpp"
#include "headgate/presets.hpp"
#include "headgate/rescale.hpp"

namespace headgate::cli {

// Exit codes: 0 success, 1 validation failure, 2 numeric failure, 3 I/O failure.

struct Options {
    std::string config_path;
    std::string model_path;
    std::string input_path;
    std::string preset;
    std::string out_dir = "out";
    std::string rescale = "off";
    std::string axes = "boundaries";
    std::uint64_t seed = 1;
    long position = -1;
    int target = -1;
    int top_k = 5;
    std::string lengths = "256,512";
    int reps = 30;
    std::string trace_dir;
};

struct Settings {
    std::map<std::string, std::string> kv;

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
    double get_real(const std::string& key, double fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw validation_error("config: " + key + " is not a number");
        }
    }
    long get_int(const std::string& key, long fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            return std::stol(it->second);
        } catch (...) {
            throw validation_error("config: " + key + " is not an integer");
        }
    }
    bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "on") return true;
        if (it->second == "false" || it->second == "0" || it->second == "off") return false;
        throw validation_error("config: " + key + " is not a boolean");
    }
};

namespace detail {

inline Settings load_settings(const Options& opt) {
    Settings s;
    if (!opt.config_path.empty()) s.kv = parse_ini_file(opt.config_path);
    return s;
}

// Hyperparameters resolved from preset < config < flags, validated before
// any computation starts.
struct Hyper {
    Boundaries boundaries{7, 3};
    Thresholds thresholds{0.22, 0.01};
    double g_perc = 1.16;
    double g_reas = 1.30;
};

inline Hyper resolve_hyper(const Options& opt, const Settings& s, int num_layers) {
    Hyper h;
    if (!opt.preset.empty()) {
        const Preset& p = find_preset(opt.preset);
        h.boundaries = p.boundaries;
        h.thresholds = p.thresholds;
        h.g_perc = p.g_perc;
        h.g_reas = p.g_reas;
    }
    h.boundaries.perc_last = static_cast<int>(s.get_int("boundaries.perc_last", h.boundaries.perc_last));
    h.boundaries.reas_first = static_cast<int>(s.get_int("boundaries.reas_first", h.boundaries.reas_first));
    h.thresholds.tau_perc = s.get_real("thresholds.tau_perc", h.thresholds.tau_perc);
    h.thresholds.tau_reas = s.get_real("thresholds.tau_reas", h.thresholds.tau_reas);
    h.g_perc = s.get_real("gains.g_perc", h.g_perc);
    h.g_reas = s.get_real("gains.g_reas", h.g_reas);
    // Boundaries above a shallow model are clamped to L so presets written
    // for deep stacks stay usable on desk-scale models.
    h.boundaries.perc_last = std::min(h.boundaries.perc_last, num_layers);
    h.boundaries.reas_first = std::min(h.boundaries.reas_first, num_layers);
    h.thresholds.validate();
    h.boundaries.validate(num_layers);
    if (!(h.g_perc >= 1.0) || !(h.g_reas >= 1.0))
        throw validation_error("gains: g_perc and g_reas must be >= 1");
    return h;
}

inline ModelConfig resolve_model_config(const Settings& s) {
    ModelConfig cfg = make_config(static_cast<int>(s.get_int("model.layers", 4)),
                                  static_cast<int>(s.get_int("model.heads", 4)),
                                  static_cast<int>(s.get_int("model.d_model", 32)),
                                  static_cast<int>(s.get_int("model.vocab", 64)),
                                  s.get_bool("model.causal", true),
                                  s.get_bool("model.use_mlp", true));
    cfg.validate();
    return cfg;
}

// "layer:head layer:head ..." with 1-based indices in the file.
inline std::vector<bench::HeadIndex> parse_head_list(const std::string& text) {
    std::vector<bench::HeadIndex> out;
    std::istringstream in(text);
    std::string item;
    while (in >> item) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw validation_error("planted: expected layer:head pairs, got '" + item + "'");
        out.push_back({std::stoi(item.substr(0, colon)) - 1, std::stoi(item.substr(colon + 1)) - 1});
    }
    return out;
}

inline bench::PlantedSpec resolve_planted(const Settings& s, std::uint64_t seed) {
    bench::PlantedSpec spec;
    spec.seed = seed;
    spec.planted_perception = parse_head_list(s.get("planted.perception", ""));
    spec.planted_reasoning = parse_head_list(s.get("planted.reasoning", ""));
    spec.rho_hi = s.get_real("planted.rho_hi", spec.rho_hi);
    spec.rho_lo = s.get_real("planted.rho_lo", spec.rho_lo);
    spec.band_lo = s.get_real("planted.band_lo", spec.band_lo);
    spec.band_hi = s.get_real("planted.band_hi", spec.band_hi);
    spec.vision_fraction = s.get_real("planted.vision_fraction", spec.vision_fraction);
    return spec;
}

inline GainPolicy resolve_policy(const Settings& s, const Hyper& hyper) {
    GainPolicy policy;
    policy.g_perc = hyper.g_perc;
    policy.g_reas = hyper.g_reas;
    policy.strategy = parse_strategy(s.get("policy.strategy", "class_gains"));
    policy.alpha = s.get_real("policy.alpha", policy.alpha);
    policy.beta = s.get_real("policy.beta", policy.beta);
    auto parse_labels = [&](const std::string& key, std::vector<HeadLabel> fallback) {
        const std::string text = s.get(key, "");
        if (text.empty()) return fallback;
        std::vector<HeadLabel> out;
        std::istringstream in(text);
        std::string word;
        while (in >> word) out.push_back(parse_label(word));
        return out;
    };
    policy.enhance_labels = parse_labels("policy.enhance", policy.enhance_labels);
    policy.attenuate_labels = parse_labels("policy.attenuate", policy.attenuate_labels);
    policy.validate();
    return policy;
}

inline std::uint64_t settings_hash(const std::string& command, const Options& opt,
                                   const Settings& s) {
    std::string canon = "command=" + command + ";model=" + opt.model_path +
                        ";input=" + opt.input_path + ";preset=" + opt.preset +
                        ";rescale=" + opt.rescale + ";seed=" + std::to_string(opt.seed) +
                        ";axes=" + opt.axes + ";";
    for (const auto& [k, v] : s.kv) canon += k + "=" + v + ";";
    return fnv1a64(canon);
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory: " + dir);
}

inline TokenSequence load_input(const Options& opt, const Settings& s, const Model& model,
                                ModalityPartition* partition_out) {
    if (opt.input_path.empty()) throw validation_error("--input is required");
    const SequenceFile sf = parse_sequence_file(opt.input_path);
    TokenSequence seq = sequence_from_file(sf);
    seq.validate(model.config.vocab_size, model.config.d_model);
    if (partition_out) {
        *partition_out = ModalityPartition::from_labels(seq.modality);
        // Optional decode-style query restriction: ratios average only over
        // positions at or after query_start.
        const long query_start = s.get_int("partition.query_start", 0);
        if (query_start > 0) {
            if (query_start >= static_cast<long>(seq.size()))
                throw validation_error("partition.query_start beyond the sequence");
            std::vector<int> queries;
            for (long i = query_start; i < static_cast<long>(seq.size()); ++i)
                queries.push_back(static_cast<int>(i));
            partition_out->restrict_queries(std::move(queries));
        }
    }
    return seq;
}

inline std::vector<int> parse_lengths(const std::string& text) {
    std::vector<int> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
        if (out.back() < 1) throw validation_error("bench: lengths must be positive");
    }
    if (out.empty()) throw validation_error("bench: no sequence lengths given");
    return out;
}

inline nlohmann::ordered_json config_json(const ModelConfig& c) {
    return {{"layers", c.num_layers},   {"heads", c.num_heads}, {"d_model", c.d_model},
            {"d_k", c.d_k},             {"d_v", c.d_v},         {"d_ff", c.d_ff},
            {"vocab", c.vocab_size},    {"causal", c.causal_mask},
            {"use_mlp", c.use_mlp},     {"norm_eps", c.norm_eps}};
}

inline nlohmann::ordered_json heads_json(const std::vector<bench::HeadIndex>& set) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (auto [l, h] : set) arr.push_back({l + 1, h + 1});
    return arr;
}

// --- subcommands -----------------------------------------------------------

inline int cmd_generate(const Options& opt) {
    const Settings s = load_settings(opt);
    const ModelConfig cfg = resolve_model_config(s);
    bench::PlantedSpec spec = resolve_planted(s, opt.seed);
    ensure_dir(opt.out_dir);

    const Model model = spec.empty() && !s.kv.count("planted.band_lo")
                            ? make_random_model(cfg, opt.seed)
                            : bench::generate_planted_model(cfg, spec);
    save_model(opt.out_dir + "/model.bin", model);

    nlohmann::ordered_json manifest;
    manifest["config"] = config_json(cfg);
    manifest["seed"] = opt.seed;
    manifest["config_hash"] = hex64(settings_hash("generate", opt, s));
    manifest["planted"] = {{"perception", heads_json(spec.planted_perception)},
                           {"reasoning", heads_json(spec.planted_reasoning)},
                           {"rho_hi", spec.rho_hi},
                           {"rho_lo", spec.rho_lo},
                           {"band_lo", spec.band_lo},
                           {"band_hi", spec.band_hi},
                           {"vision_fraction", spec.vision_fraction}};
    detail_io::write_text_file(opt.out_dir + "/planted.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << opt.out_dir << "/model.bin (" << cfg.num_layers << " layers, "
              << cfg.num_heads << " heads, d_model " << cfg.d_model << ")\n";
    return 0;
}

inline int cmd_inspect(const Options& opt) {
    const Model model = load_model(opt.model_path);
    const ModelConfig& c = model.config;
    std::cout << "model: " << opt.model_path << "\n"
              << "  layers " << c.num_layers << ", heads " << c.num_heads << ", d_model "
              << c.d_model << ", d_k " << c.d_k << ", d_v " << c.d_v << ", d_ff " << c.d_ff
              << ", vocab " << c.vocab_size << "\n"
              << "  causal_mask " << (c.causal_mask ? "on" : "off") << ", mlp "
              << (c.use_mlp ? "on" : "off") << ", norm_eps " << format_double(c.norm_eps) << "\n";
    double sum = 0.0;
    std::size_t count = model.embedding.size() + model.unembedding.size();
    for (std::size_t i = 0; i < model.embedding.size(); ++i) sum += model.embedding.data()[i];
    for (std::size_t i = 0; i < model.unembedding.size(); ++i) sum += model.unembedding.data()[i];
    std::cout << "  embedding+unembedding mean " << format_double(sum / static_cast<double>(count))
              << "\n";
    return 0;
}

inline int cmd_classify(const Options& opt) {
    const Settings s = load_settings(opt);
    const Model model = load_model(opt.model_path);
    const detail::Hyper hyper = resolve_hyper(opt, s, model.config.num_layers);
    ModalityPartition partition;
    const TokenSequence seq = load_input(opt, s, model, &partition);
    ensure_dir(opt.out_dir);

    const auto res = model_forward_ungated(model, seq);
    const RatioProfile profile = ratio_profile(res.trace, partition);
    const HeadClassification cls = classify_heads(profile, hyper.boundaries, hyper.thresholds);

    const std::uint64_t hash = settings_hash("classify", opt, s);
    detail_io::write_text_file(opt.out_dir + "/classification.csv",
                               classification_csv(profile, cls, hash));
    detail_io::write_text_file(opt.out_dir + "/profile.csv", profile_csv(profile, hash));
    const auto counts = classification_counts(cls);
    std::cout << "classified " << counts.total() << " heads: " << counts.num_perception
              << " perception, " << counts.num_reasoning << " reasoning, "
              << counts.num_unlabeled << " unlabeled\n";
    return 0;
}

inline int cmd_infer(const Options& opt) {
    const Settings s = load_settings(opt);
    const Model model = load_model(opt.model_path);
    if (opt.rescale != "on" && opt.rescale != "off")
        throw validation_error("--rescale must be on or off");
    ModalityPartition partition;
    const TokenSequence seq = load_input(opt, s, model, &partition);
    ensure_dir(opt.out_dir);
    const std::uint64_t hash = settings_hash("infer", opt, s);

    ForwardOptions fwd;
    fwd.capture_trace = !opt.trace_dir.empty();

    ForwardResult res;
    bool wrote_gains = false;
    std::string applied = csv_header(hash) + "layer,head,s_v,label,gain\n";
    if (opt.rescale == "on") {
        const detail::Hyper hyper = resolve_hyper(opt, s, model.config.num_layers);
        const GainPolicy policy = resolve_policy(s, hyper);
        if (policy.strategy == GainStrategy::class_gains) {
            // Plugin behavior: ratios, labels, and gains from this pass.
            InlineRescale rescale;
            rescale.partition = partition;
            rescale.boundaries = hyper.boundaries;
            rescale.thresholds = hyper.thresholds;
            rescale.g_perc = hyper.g_perc;
            rescale.g_reas = hyper.g_reas;
            fwd.rescale = &rescale;
            fwd.capture_ratios = true;
            fwd.capture_labels = true;
            res = model_forward(model, seq, fwd);
            for (std::size_t l = 0; l < res.labels.num_layers(); ++l)
                for (std::size_t h = 0; h < res.labels.num_heads(); ++h) {
                    const HeadLabel label = res.labels.at(l, h);
                    applied += std::to_string(l + 1) + "," + std::to_string(h + 1) + "," +
                               format_double(res.ratios.visual_ratio(l, h)) + "," +
                               label_name(label) + "," +
                               format_double(policy_gain(policy, label)) + "\n";
                }
        } else {
            // Strategy variants classify from a first pass, then gate.
            const auto plain = model_forward_ungated(model, seq);
            const RatioProfile profile = ratio_profile(plain.trace, partition);
            const HeadClassification cls =
                classify_heads(profile, hyper.boundaries, hyper.thresholds);
            const GateTensor gates = gain_vector(cls, policy);
            fwd.gates = &gates;
            res = model_forward(model, seq, fwd);
            for (std::size_t l = 0; l < cls.num_layers(); ++l)
                for (std::size_t h = 0; h < cls.num_heads(); ++h)
                    applied += std::to_string(l + 1) + "," + std::to_string(h + 1) + "," +
                               format_double(profile.visual_ratio(l, h)) + "," +
                               label_name(cls.at(l, h)) + "," + format_double(gates(l, h)) + "\n";
        }
        wrote_gains = true;
    } else {
        res = model_forward(model, seq, fwd);
    }

    detail_io::write_text_file(opt.out_dir + "/logits.csv", logits_csv(res.logits, opt.top_k, hash));
    if (wrote_gains) detail_io::write_text_file(opt.out_dir + "/applied_gains.csv", applied);
    if (!opt.trace_dir.empty()) {
        ensure_dir(opt.trace_dir);
        dump_trace(opt.trace_dir, res.trace, hash);
    }
    std::cout << "wrote " << opt.out_dir << "/logits.csv (rescale " << opt.rescale << ")\n";
    return 0;
}

inline int cmd_attribute(const Options& opt) {
    const Settings s = load_settings(opt);
    const Model model = load_model(opt.model_path);
    const TokenSequence seq = load_input(opt, s, model, nullptr);
    if (opt.position < 0 || static_cast<std::size_t>(opt.position) >= seq.size())
        throw validation_error("--position must index a sequence position");
    if (opt.target < 0 || opt.target >= model.config.vocab_size)
        throw validation_error("--target must be a vocab index");
    ensure_dir(opt.out_dir);

    const GateGradient grad =
        gate_gradients(model, seq, static_cast<std::size_t>(opt.position), opt.target);
    detail_io::write_text_file(opt.out_dir + "/heatmap.csv",
                               heatmap_csv(grad, settings_hash("attribute", opt, s)));
    std::cout << "wrote " << opt.out_dir << "/heatmap.csv\n";
    return 0;
}

inline int cmd_bench(const Options& opt) {
    const Settings s = load_settings(opt);
    Model model;
    if (!opt.model_path.empty()) {
        model = load_model(opt.model_path);
    } else {
        // Reference configuration for overhead measurements.
        ModelConfig cfg = make_config(static_cast<int>(s.get_int("model.layers", 2)),
                                      static_cast<int>(s.get_int("model.heads", 8)),
                                      static_cast<int>(s.get_int("model.d_model", 64)),
                                      static_cast<int>(s.get_int("model.vocab", 256)));
        model = make_random_model(cfg, opt.seed);
    }
    const detail::Hyper hyper = resolve_hyper(opt, s, model.config.num_layers);
    InlineRescale rescale;
    rescale.boundaries = hyper.boundaries;
    rescale.thresholds = hyper.thresholds;
    rescale.g_perc = hyper.g_perc;
    rescale.g_reas = hyper.g_reas;
    ensure_dir(opt.out_dir);

    const auto report =
        bench::timing_harness(model, parse_lengths(opt.lengths), rescale, opt.reps, 5, opt.seed);
    detail_io::write_text_file(opt.out_dir + "/timing.csv",
                               timing_csv(report, settings_hash("bench", opt, s)));
    for (const auto& [n, overhead] : report.overhead)
        std::cout << "N=" << n << " overhead " << format_double(overhead * 100.0) << "%\n";
    return 0;
}

inline int cmd_sweep(const Options& opt) {
    const Settings s = load_settings(opt);
    ensure_dir(opt.out_dir);
    const int L = static_cast<int>(s.get_int("model.layers", 6));
    const int H = static_cast<int>(s.get_int("model.heads", 4));
    const int d_model = static_cast<int>(s.get_int("model.d_model", 32));
    const int vocab = static_cast<int>(s.get_int("model.vocab", 64));
    const int n_seeds = static_cast<int>(s.get_int("run.sweep_seeds", 5));
    const int n_samples = static_cast<int>(s.get_int("run.samples", 200));
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_seeds; ++i) seeds.push_back(Rng::derive(opt.seed, 31 + i));

    bench::SweepResult result;
    if (opt.axes == "boundaries" || opt.axes == "thresholds") {
        if (L < 4 || H < 2)
            throw validation_error("sweep: planted sweeps need layers >= 4 and heads >= 2");
        bench::PlantedSpec spec;
        spec.planted_perception = {{0, 0}, {1, 1}};
        spec.planted_reasoning = {{L - 2, 0}, {L - 1, 1}};
        const ModelConfig cfg = make_config(L, H, d_model, vocab);

        auto recovery_score = [&](const Boundaries& b, const Thresholds& t, std::uint64_t seed) {
            bench::PlantedSpec seeded = spec;
            seeded.seed = seed;
            const Model model = bench::generate_planted_model(cfg, seeded);
            return bench::recover_planted_heads(model, seeded, b, t, 4, Rng::derive(seed, 99))
                .mean();
        };

        if (opt.axes == "boundaries") {
            std::vector<double> layer_axis;
            for (int l = 1; l <= L; ++l) layer_axis.push_back(l);
            result = bench::sweep(
                {{"perc_last", layer_axis}, {"reas_first", layer_axis}},
                [&](const std::vector<double>& coords, std::uint64_t seed) {
                    const Boundaries b{static_cast<int>(coords[0]), static_cast<int>(coords[1])};
                    return recovery_score(b, {0.75, 0.25}, seed);
                },
                seeds);
        } else {
            result = bench::sweep(
                {{"tau_perc", {0.55, 0.65, 0.75, 0.85, 0.95}},
                 {"tau_reas", {0.05, 0.15, 0.25, 0.35, 0.45}}},
                [&](const std::vector<double>& coords, std::uint64_t seed) {
                    return recovery_score({2, L - 1}, {coords[0], coords[1]}, seed);
                },
                seeds);
        }
    } else if (opt.axes == "gains") {
        bench::TaskSpec task;
        task.num_heads = H;
        task.d_model = d_model;
        task.vocab_size = std::max(vocab, 2 * task.num_classes + 8);
        result = bench::sweep(
            {{"g_perc", {1.0, 1.08, 1.16, 1.3, 1.5}}, {"g_reas", {1.0, 1.15, 1.3, 1.45}}},
            [&](const std::vector<double>& coords, std::uint64_t seed) {
                bench::TaskSpec seeded = task;
                seeded.seed = seed;
                const bench::TaskModel tm = bench::make_task_model(seeded);
                InlineRescale rescale;
                rescale.boundaries = {1, 1};
                // The planted copy head realizes S_v = 1.0 on this task;
                // background heads stay under ~0.8.
                rescale.thresholds = {0.9, 0.3};
                rescale.g_perc = coords[0];
                rescale.g_reas = coords[1];
                int correct = 0;
                for (int i = 0; i < n_samples; ++i) {
                    const auto input = bench::make_task_input(tm, Rng::derive(seed, 500 + i));
                    InlineRescale local = rescale;
                    local.partition = ModalityPartition::from_labels(input.sequence.modality);
                    ForwardOptions fwd;
                    fwd.capture_trace = false;
                    fwd.rescale = &local;
                    const auto res = model_forward(tm.model, input.sequence, fwd);
                    const double* row = res.logits.row(input.query_position);
                    int best = 0;
                    for (int k = 1; k < tm.spec.num_classes; ++k)
                        if (row[k] > row[best]) best = k;
                    if (best == input.true_class) ++correct;
                }
                return static_cast<double>(correct) / static_cast<double>(n_samples);
            },
            seeds);
    } else {
        throw validation_error("--axes must be boundaries, thresholds, or gains");
    }

    detail_io::write_text_file(opt.out_dir + "/grid.csv",
                               grid_csv(result, settings_hash("sweep", opt, s)));
    if (result.has_best) {
        std::cout << "best cell:";
        for (std::size_t a = 0; a < result.axes.size(); ++a)
            std::cout << " " << result.axes[a].name << "=" << result.best().coords[a];
        std::cout << " score=" << format_double(result.best().score) << "\n";
    }
    return 0;
}

} // namespace detail

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"gated multi-head attention analysis: head identification, "
                 "class-conditioned rescaling, and gradient attribution"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "config file (key = value with [sections])");
        sub->add_option("--seed", opt.seed, "PRNG seed");
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--preset", opt.preset, "hyperparameter preset")
            ->check(CLI::IsMember({"kimi-vl", "ocean-r1", "r1-onevision"}));
    };

    CLI::App* generate = app.add_subcommand("generate", "create a model file (optionally planted)");
    add_common(generate);
    CLI::App* inspect = app.add_subcommand("inspect", "print a model file's configuration");
    inspect->add_option("--model", opt.model_path, "model file")->required();
    CLI::App* classify = app.add_subcommand("classify", "label heads from a ratio profile");
    add_common(classify);
    classify->add_option("--model", opt.model_path, "model file")->required();
    classify->add_option("--input", opt.input_path, "sequence file")->required();
    CLI::App* infer = app.add_subcommand("infer", "run a forward pass, optionally rescaled");
    add_common(infer);
    infer->add_option("--model", opt.model_path, "model file")->required();
    infer->add_option("--input", opt.input_path, "sequence file")->required();
    infer->add_option("--rescale", opt.rescale, "on|off")->required();
    infer->add_option("--topk", opt.top_k, "top-k logits per position");
    infer->add_option("--trace", opt.trace_dir, "directory for the attention trace dump");
    CLI::App* attribute = app.add_subcommand("attribute", "per-head contribution map for a token");
    add_common(attribute);
    attribute->add_option("--model", opt.model_path, "model file")->required();
    attribute->add_option("--input", opt.input_path, "sequence file")->required();
    attribute->add_option("--position", opt.position, "query position (0-based)")->required();
    attribute->add_option("--target", opt.target, "target token id")->required();
    CLI::App* bench_cmd = app.add_subcommand("bench", "timing overhead of the gated+ratio pass");
    add_common(bench_cmd);
    bench_cmd->add_option("--model", opt.model_path, "model file (default: reference model)");
    bench_cmd->add_option("--lengths", opt.lengths, "comma list of sequence lengths");
    bench_cmd->add_option("--reps", opt.reps, "repetitions per mode and length");
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid sweep with CSV export");
    add_common(sweep_cmd);
    sweep_cmd->add_option("--axes", opt.axes, "boundaries|thresholds|gains");

    std::vector<const char*> argv;
    argv.push_back("headgate");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (generate->parsed()) return detail::cmd_generate(opt);
        if (inspect->parsed()) return detail::cmd_inspect(opt);
        if (classify->parsed()) return detail::cmd_classify(opt);
        if (infer->parsed()) return detail::cmd_infer(opt);
        if (attribute->parsed()) return detail::cmd_attribute(opt);
        if (bench_cmd->parsed()) return detail::cmd_bench(opt);
        if (sweep_cmd->parsed()) return detail::cmd_sweep(opt);
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what();
        if (e.layer >= 0) std::cerr << " (layer " << e.layer + 1 << ")";
        if (e.head >= 0) std::cerr << " (head " << e.head + 1 << ")";
        std::cerr << "\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const validation_error& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

inline int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

} // namespace headgate::cli
