#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "headgate/forward.hpp"
#include "headgate/model.hpp"
#include "headgate/ratio.hpp"
#include "headgate/rng.hpp"
#include "headgate/taxonomy.hpp"

namespace headgate::bench {

using HeadIndex = std::pair<int, int>; // (layer, head), 0-based

// Ground truth for recovery experiments: selected heads are constructed to
// realize a visual ratio at or above rho_hi (perception plants) or at or
// below rho_lo (reasoning plants); every other head must stay inside the
// background band.
struct PlantedSpec {
    std::vector<HeadIndex> planted_perception;
    std::vector<HeadIndex> planted_reasoning;
    double rho_hi = 0.85;
    double rho_lo = 0.15;
    double band_lo = 0.35;
    double band_hi = 0.65;
    double vision_fraction = 0.5;
    std::uint64_t seed = 1;
    int probe_sequences = 6;
    int probe_length = 32;
    int max_attempts = 50;

    bool empty() const { return planted_perception.empty() && planted_reasoning.empty(); }

    void validate(const ModelConfig& cfg) const {
        auto check = [&](const std::vector<HeadIndex>& set) {
            for (auto [l, h] : set)
                if (l < 0 || l >= cfg.num_layers || h < 0 || h >= cfg.num_heads)
                    throw validation_error("planted spec: head index outside L x H");
        };
        check(planted_perception);
        check(planted_reasoning);
        for (auto p : planted_perception)
            for (auto r : planted_reasoning)
                if (p == r) throw validation_error("planted spec: planted sets must be disjoint");
        if (!(rho_lo < band_lo && band_lo <= band_hi && band_hi < rho_hi))
            throw validation_error("planted spec: need rho_lo < band_lo <= band_hi < rho_hi");
        if (!(vision_fraction > 0.0 && vision_fraction < 1.0))
            throw validation_error("planted spec: vision fraction must lie in (0, 1)");
        if (probe_sequences < 1 || probe_length < 4 || max_attempts < 1)
            throw validation_error("planted spec: bad probe settings");
    }
};

// Synthetic inputs: the lower half of the vocab is the vision pool, the
// upper half the text pool; modality labels are an exact-count interleave
// shuffled per seed. The first two positions are pinned to (vision, text)
// so that under causal masking every later row has both modalities in its
// prefix; otherwise an unlucky single-modality run at the start pins early
// attention rows to ratio 0 or 1 no matter how a head is steered.
inline TokenSequence make_modality_sequence(const ModelConfig& cfg, int length,
                                            double vision_fraction, std::uint64_t seed) {
    if (length < 1) throw validation_error("sequence length must be >= 1");
    Rng rng(Rng::derive(seed, 0x736571ULL));
    TokenSequence seq;
    seq.modality.assign(static_cast<std::size_t>(length), Modality::text);
    const int n_vision = std::clamp(
        static_cast<int>(vision_fraction * static_cast<double>(length) + 0.5), 1, length - 1);
    for (int i = 0; i < n_vision; ++i) seq.modality[static_cast<std::size_t>(i)] = Modality::vision;
    if (length >= 2) {
        seq.modality[0] = Modality::vision;
        seq.modality[1] = Modality::text;
        // Shuffle the remaining n_vision - 1 vision tags over positions >= 2.
        std::fill(seq.modality.begin() + 2, seq.modality.end(), Modality::text);
        for (int placed = 1; placed < n_vision;) {
            const int j = static_cast<int>(rng.uniform_int(2, length - 1));
            if (seq.modality[static_cast<std::size_t>(j)] == Modality::text) {
                seq.modality[static_cast<std::size_t>(j)] = Modality::vision;
                ++placed;
            }
        }
    }
    const int half = cfg.vocab_size / 2;
    seq.token_ids.resize(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
        const bool vis = seq.modality[static_cast<std::size_t>(i)] == Modality::vision;
        seq.token_ids[static_cast<std::size_t>(i)] =
            vis ? static_cast<int>(rng.uniform_int(0, half - 1))
                : static_cast<int>(rng.uniform_int(half, cfg.vocab_size - 1));
    }
    return seq;
}

namespace detail {

// Embedding-space conventions used by all planted constructions:
// dimension d-1 carries the modality sign (+1 vision pool, -1 text pool)
// and dimension d-2 carries a constant query bias shared by every token.
// Both dimensions are made read-only channels: no block may write to them,
// so the stamps survive the residual stream exactly at any depth. Without
// this, accumulated block noise flips the modality sign of individual deep
// tokens and a steered head locks onto the wrong modality.
inline void stamp_modality_pools(Model& model) {
    const int d = model.config.d_model;
    if (d < 4 || model.config.vocab_size < 2)
        throw validation_error("planted model: need d_model >= 4 and vocab >= 2");
    const int half = model.config.vocab_size / 2;
    for (int id = 0; id < model.config.vocab_size; ++id) {
        model.embedding(id, d - 2) += 1.0;
        model.embedding(id, d - 1) += id < half ? 1.0 : -1.0;
    }
    for (auto& layer : model.layers) {
        for (std::size_t r = 0; r < layer.w_o.rows(); ++r) {
            layer.w_o(r, d - 2) = 0.0;
            layer.w_o(r, d - 1) = 0.0;
        }
        if (model.config.use_mlp) {
            for (std::size_t r = 0; r < layer.ff_w2.rows(); ++r) {
                layer.ff_w2(r, d - 2) = 0.0;
                layer.ff_w2(r, d - 1) = 0.0;
            }
            layer.ff_b2[d - 2] = 0.0;
            layer.ff_b2[d - 1] = 0.0;
        }
    }
}

// Rank-one bias that steers the head's attention toward one modality:
// queries pick up the shared bias dimension, keys the signed modality
// dimension, so every logit splits by the key token's modality.
inline void steer_head(HeadWeights& hw, int d_model, double strength, double sign) {
    hw.w_q(d_model - 2, 0) += strength;
    hw.w_k(d_model - 1, 0) += sign * strength;
}

inline void redraw_head(HeadWeights& hw, const ModelConfig& cfg, double scale, Rng& rng) {
    const double sd = scale / std::sqrt(static_cast<double>(cfg.d_model));
    hw.w_q = headgate::detail::random_matrix(cfg.d_model, cfg.d_k, sd, rng);
    hw.w_k = headgate::detail::random_matrix(cfg.d_model, cfg.d_k, sd, rng);
}

} // namespace detail

// Builds a model whose planted heads realize their target ratio bands on
// modality-tagged inputs, rejection-resampling offending heads up to
// max_attempts times.
inline Model generate_planted_model(const ModelConfig& cfg, const PlantedSpec& spec,
                                    double steer_strength = 6.0) {
    cfg.validate();
    spec.validate(cfg);
    Model model = make_random_model(cfg, spec.seed);
    if (spec.empty() && spec.band_lo <= 0.0 && spec.band_hi >= 1.0) return model;

    detail::stamp_modality_pools(model);
    enum class Kind { background, perception, reasoning };
    std::vector<std::vector<Kind>> kind(cfg.num_layers,
                                        std::vector<Kind>(cfg.num_heads, Kind::background));
    for (auto [l, h] : spec.planted_perception) kind[l][h] = Kind::perception;
    for (auto [l, h] : spec.planted_reasoning) kind[l][h] = Kind::reasoning;

    for (auto [l, h] : spec.planted_perception)
        detail::steer_head(model.layers[l].heads[h], cfg.d_model, steer_strength, +1.0);
    for (auto [l, h] : spec.planted_reasoning)
        detail::steer_head(model.layers[l].heads[h], cfg.d_model, steer_strength, -1.0);

    std::vector<TokenSequence> probes;
    for (int i = 0; i < spec.probe_sequences; ++i)
        probes.push_back(make_modality_sequence(cfg, spec.probe_length, spec.vision_fraction,
                                                Rng::derive(spec.seed, 0x70726f6265ULL + i)));

    for (int attempt = 0;; ++attempt) {
        // Per-head min/mean/max of the realized visual ratio over the probes.
        Matrix lo(cfg.num_layers, cfg.num_heads, 2.0);
        Matrix hi(cfg.num_layers, cfg.num_heads, -1.0);
        Matrix mean(cfg.num_layers, cfg.num_heads, 0.0);
        for (const auto& probe : probes) {
            const auto res = model_forward_ungated(model, probe);
            const auto profile =
                ratio_profile(res.trace, ModalityPartition::from_labels(probe.modality));
            for (int l = 0; l < cfg.num_layers; ++l)
                for (int h = 0; h < cfg.num_heads; ++h) {
                    const double sv = profile.visual_ratio(l, h);
                    lo(l, h) = std::min(lo(l, h), sv);
                    hi(l, h) = std::max(hi(l, h), sv);
                    mean(l, h) += sv / static_cast<double>(probes.size());
                }
        }

        std::vector<HeadIndex> failing;
        for (int l = 0; l < cfg.num_layers; ++l)
            for (int h = 0; h < cfg.num_heads; ++h) {
                bool ok = true;
                switch (kind[l][h]) {
                    case Kind::perception: ok = lo(l, h) >= spec.rho_hi; break;
                    case Kind::reasoning: ok = hi(l, h) <= spec.rho_lo; break;
                    case Kind::background:
                        ok = mean(l, h) >= spec.band_lo && mean(l, h) <= spec.band_hi;
                        break;
                }
                if (!ok) failing.push_back({l, h});
            }
        if (failing.empty()) return model;
        if (attempt + 1 >= spec.max_attempts) {
            const auto [l, h] = failing.front();
            throw validation_error("planted model generation failed for layer " +
                                   std::to_string(l + 1) + ", head " + std::to_string(h + 1) +
                                   " after max attempts");
        }

        for (auto [l, h] : failing) {
            Rng rng(Rng::derive(spec.seed, 0x726564726177ULL + 1000003ULL * attempt +
                                                1009ULL * l + static_cast<std::uint64_t>(h)));
            HeadWeights& hw = model.layers[l].heads[h];
            switch (kind[l][h]) {
                case Kind::perception:
                    detail::redraw_head(hw, cfg, 1.0, rng);
                    detail::steer_head(hw, cfg.d_model, steer_strength * (1.0 + 0.25 * (attempt + 1)),
                                       +1.0);
                    break;
                case Kind::reasoning:
                    detail::redraw_head(hw, cfg, 1.0, rng);
                    detail::steer_head(hw, cfg.d_model, steer_strength * (1.0 + 0.25 * (attempt + 1)),
                                       -1.0);
                    break;
                case Kind::background:
                    // Damp toward uniform attention on each retry.
                    detail::redraw_head(hw, cfg, std::pow(0.7, attempt + 1), rng);
                    break;
            }
        }
    }
}

struct RecoveryScore {
    double perception_precision = 1.0;
    double perception_recall = 1.0;
    double reasoning_precision = 1.0;
    double reasoning_recall = 1.0;

    double mean() const {
        return 0.25 * (perception_precision + perception_recall + reasoning_precision +
                       reasoning_recall);
    }
};

namespace detail {

inline void score_set(const std::vector<HeadIndex>& truth, const std::vector<HeadIndex>& predicted,
                      double& precision, double& recall) {
    long tp = 0;
    for (const auto& p : predicted)
        if (std::find(truth.begin(), truth.end(), p) != truth.end()) ++tp;
    precision = predicted.empty() ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted.size());
    recall = truth.empty() ? 1.0 : static_cast<double>(tp) / static_cast<double>(truth.size());
}

} // namespace detail

// Runs n_inputs fresh sequences through the model, averages the ratio
// profiles, classifies, and scores the labels against the planted truth.
inline RecoveryScore recover_planted_heads(const Model& model, const PlantedSpec& spec,
                                           const Boundaries& boundaries,
                                           const Thresholds& thresholds, int n_inputs,
                                           std::uint64_t eval_seed, int seq_length = 0) {
    if (n_inputs < 1) throw validation_error("recover: need at least one input");
    const int length = seq_length > 0 ? seq_length : spec.probe_length;
    std::vector<RatioProfile> profiles;
    profiles.reserve(static_cast<std::size_t>(n_inputs));
    for (int i = 0; i < n_inputs; ++i) {
        const auto seq = make_modality_sequence(model.config, length, spec.vision_fraction,
                                                Rng::derive(eval_seed, 0x6576616cULL + i));
        const auto res = model_forward_ungated(model, seq);
        profiles.push_back(ratio_profile(res.trace, ModalityPartition::from_labels(seq.modality)));
    }
    const auto classification =
        classify_heads(average_profiles(profiles), boundaries, thresholds);

    std::vector<HeadIndex> found_perc, found_reas;
    for (std::size_t l = 0; l < classification.num_layers(); ++l)
        for (std::size_t h = 0; h < classification.num_heads(); ++h) {
            if (classification.at(l, h) == HeadLabel::perception)
                found_perc.push_back({static_cast<int>(l), static_cast<int>(h)});
            else if (classification.at(l, h) == HeadLabel::reasoning)
                found_reas.push_back({static_cast<int>(l), static_cast<int>(h)});
        }

    RecoveryScore score;
    detail::score_set(spec.planted_perception, found_perc, score.perception_precision,
                      score.perception_recall);
    detail::score_set(spec.planted_reasoning, found_reas, score.reasoning_precision,
                      score.reasoning_recall);
    return score;
}

// Ratio profile with a low-visual tail, mimicking the regime where a sparse
// slice of deep heads sits under a tight reasoning threshold. With the
// stock thresholds (tau_reas = 0.01, reas_first = 3) on a 28-layer stack
// this lands near 6-7% reasoning heads.
inline RatioProfile synthetic_profile(int num_layers, int num_heads, std::uint64_t seed,
                                      double tail_fraction = 0.08) {
    Rng rng(Rng::derive(seed, 0x70726f66ULL));
    RatioProfile p;
    p.visual_ratio = Matrix(num_layers, num_heads);
    for (int l = 0; l < num_layers; ++l)
        for (int h = 0; h < num_heads; ++h) {
            if (rng.uniform() < tail_fraction)
                p.visual_ratio(l, h) = 0.012 * rng.uniform();
            else
                p.visual_ratio(l, h) = 0.05 + 0.85 * rng.uniform();
        }
    return p;
}

} // namespace headgate::bench
