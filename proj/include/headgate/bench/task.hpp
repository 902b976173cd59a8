#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "headgate/bench/planted.hpp"
#include "headgate/forward.hpp"
#include "headgate/rescale.hpp"

namespace headgate::bench {

// A desk-scale classification task with a planted modality rule: one vision
// token carries the class content, a single planted head copies it to every
// query position, and the label tokens read it out of the unembedding.
// Amplifying the planted head raises the signal-to-noise of the readout, so
// task accuracy responds to the gain on exactly that head.
struct TaskSpec {
    int num_classes = 4;
    int num_heads = 4;
    int d_model = 32;
    int vocab_size = 64;
    int seq_length = 16;
    int vision_tokens = 6;
    int planted_head = 0;
    double content_strength = 2.0;    // class signal carried by the cue token
    double distractor_strength = 0.5; // conflicting content on vision fillers
    double chain_strength = 1.2;      // w_v -> w_o -> unembedding readout path
    double cue_gate = 3.0;            // key-side boost that parks the head on the cue
    double steer_strength = 6.0;
    std::uint64_t seed = 1;

    void validate() const {
        const int d_v = d_model / num_heads;
        if (num_classes < 2) throw validation_error("task: need at least two classes");
        if (num_classes > d_v)
            throw validation_error("task: num_classes must fit in the head width");
        if (num_classes + 4 > d_model)
            throw validation_error("task: d_model too small for the content dims");
        if (vocab_size < 2 * num_classes + 8)
            throw validation_error("task: vocab too small for label/cue/filler pools");
        if (planted_head < 0 || planted_head >= num_heads)
            throw validation_error("task: planted head out of range");
        if (vision_tokens < 1 || vision_tokens + 2 > seq_length)
            throw validation_error("task: vision block does not fit the sequence");
    }
};

struct TaskModel {
    Model model;
    TaskSpec spec;
    // vocab layout: [0, K) label tokens, [K, 2K) cue tokens, then fillers
    // split into a vision pool and a text pool.
    int filler_vision_base = 0;
    int filler_vision_count = 0;
    int filler_text_base = 0;
    int filler_text_count = 0;
};

inline TaskModel make_task_model(const TaskSpec& spec) {
    spec.validate();
    const int K = spec.num_classes;
    ModelConfig cfg = make_config(1, spec.num_heads, spec.d_model, spec.vocab_size,
                                  /*causal=*/true, /*use_mlp=*/false);
    TaskModel tm;
    tm.spec = spec;
    tm.model = make_random_model(cfg, spec.seed);
    Model& m = tm.model;
    const int d = cfg.d_model;
    const int d_v = cfg.d_v;

    const int fillers = spec.vocab_size - 2 * K;
    tm.filler_vision_base = 2 * K;
    tm.filler_vision_count = fillers / 2;
    tm.filler_text_base = 2 * K + fillers / 2;
    tm.filler_text_count = fillers - fillers / 2;

    // Modality stamp: cue + vision fillers on the vision side, everything
    // else text; shared query-bias dimension on every token. The stamps are
    // assigned exactly (not added to the random embedding) so the planted
    // head's steering logits carry no per-token noise.
    for (int id = 0; id < spec.vocab_size; ++id) {
        const bool vision = (id >= K && id < 2 * K) ||
                            (id >= tm.filler_vision_base &&
                             id < tm.filler_vision_base + tm.filler_vision_count);
        m.embedding(id, d - 2) = 1.0;
        m.embedding(id, d - 1) = vision ? 1.0 : -1.0;
    }
    // Cue token k carries the class content on dimension k; vision fillers
    // carry weaker conflicting content so the readout has to out-vote them.
    for (int k = 0; k < K; ++k) m.embedding(K + k, k) += spec.content_strength;
    Rng content_rng(Rng::derive(spec.seed, 0x636f6e74ULL));
    for (int i = 0; i < tm.filler_vision_count; ++i) {
        const int dim = static_cast<int>(content_rng.uniform_int(0, K - 1));
        m.embedding(tm.filler_vision_base + i, dim) += spec.distractor_strength;
    }

    // The planted head attends to vision tokens and, inside the vision
    // block, prefers the cue: head-space column 0 carries the modality
    // steering, column 1 a content detector that boosts the cue key. Values
    // copy content dims into the slot; the output projection and
    // unembedding read them back out.
    LayerWeights& lw = m.layers[0];
    HeadWeights& hw = lw.heads[static_cast<std::size_t>(spec.planted_head)];
    for (int r = 0; r < d; ++r) {
        hw.w_q(r, 0) = hw.w_k(r, 0) = 0.0; // modality steering channel
        hw.w_q(r, 1) = hw.w_k(r, 1) = 0.0; // cue detection channel
    }
    detail::steer_head(hw, d, spec.steer_strength, +1.0);
    hw.w_q(d - 2, 1) = spec.cue_gate;
    for (int k = 0; k < K; ++k) {
        hw.w_k(k, 1) = 1.0;
        hw.w_v(k, k) += spec.chain_strength;
        lw.w_o(spec.planted_head * d_v + k, k) += spec.chain_strength;
        m.unembedding(k, k) += spec.chain_strength;
    }
    return tm;
}

struct TaskInput {
    TokenSequence sequence;
    int true_class = 0; // 0-based
    std::size_t query_position = 0;
};

inline TaskInput make_task_input(const TaskModel& tm, std::uint64_t seed) {
    const TaskSpec& spec = tm.spec;
    Rng rng(Rng::derive(seed, 0x7461736bULL));
    TaskInput input;
    input.true_class = static_cast<int>(rng.uniform_int(0, spec.num_classes - 1));

    const int n = spec.seq_length;
    const int nv = spec.vision_tokens;
    TokenSequence& seq = input.sequence;
    seq.token_ids.resize(static_cast<std::size_t>(n));
    seq.modality.resize(static_cast<std::size_t>(n));
    const int cue_slot = static_cast<int>(rng.uniform_int(0, nv - 1));
    for (int i = 0; i < n; ++i) {
        if (i < nv) {
            seq.modality[static_cast<std::size_t>(i)] = Modality::vision;
            seq.token_ids[static_cast<std::size_t>(i)] =
                i == cue_slot
                    ? spec.num_classes + input.true_class
                    : tm.filler_vision_base +
                          static_cast<int>(rng.uniform_int(0, tm.filler_vision_count - 1));
        } else {
            seq.modality[static_cast<std::size_t>(i)] = Modality::text;
            seq.token_ids[static_cast<std::size_t>(i)] =
                tm.filler_text_base +
                static_cast<int>(rng.uniform_int(0, tm.filler_text_count - 1));
        }
    }
    input.query_position = static_cast<std::size_t>(n - 1);
    return input;
}

// Fraction of inputs whose argmax over the label tokens hits the true class.
inline double task_accuracy(const TaskModel& tm, const GateTensor& gates, int n_samples,
                            std::uint64_t seed) {
    int correct = 0;
    for (int s = 0; s < n_samples; ++s) {
        const TaskInput input = make_task_input(tm, Rng::derive(seed, 7700 + s));
        const auto res = model_forward_gated(tm.model, input.sequence, gates,
                                             /*capture_trace=*/false);
        const double* row = res.logits.row(input.query_position);
        int best = 0;
        for (int k = 1; k < tm.spec.num_classes; ++k)
            if (row[k] > row[best]) best = k;
        if (best == input.true_class) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n_samples);
}

struct DeltaStats {
    double mean_enhance = 0.0;    // strategy A
    double mean_attenuate = 0.0;  // strategy B
    double mean_bipolar = 0.0;    // strategy C
    int draws = 0;
};

// Samples task directions around a caller-supplied base (typically the
// planted utility direction, so every head's expected utility is
// non-negative) and accumulates the alignment deltas of the three gain
// patterns over the draws.
inline DeltaStats sample_alignment_deltas(const std::vector<Matrix>& head_outputs,
                                          const Matrix& w_o,
                                          const std::vector<bool>& enhance_mask, double alpha,
                                          double beta, int draws, std::uint64_t seed,
                                          const Vec& base_direction, double noise = 0.5) {
    const std::size_t H = head_outputs.size();
    if (enhance_mask.size() != H)
        throw validation_error("delta sampling: one enhance flag per head required");
    if (base_direction.size() != w_o.cols())
        throw validation_error("delta sampling: direction dimension mismatch");
    const std::size_t d = w_o.cols();

    std::vector<double> gains_a(H, 1.0), gains_b(H, 1.0), gains_c(H, 1.0);
    for (std::size_t h = 0; h < H; ++h) {
        if (enhance_mask[h]) {
            gains_a[h] = alpha;
            gains_c[h] = alpha;
        } else {
            gains_b[h] = beta;
            gains_c[h] = beta;
        }
    }

    Rng rng(Rng::derive(seed, 0x64656c7461ULL));
    DeltaStats stats;
    stats.draws = draws;
    for (int t = 0; t < draws; ++t) {
        Vec v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = base_direction[j] + noise * rng.gaussian();
        stats.mean_enhance += alignment_delta(head_outputs, w_o, v, gains_a).predicted;
        stats.mean_attenuate += alignment_delta(head_outputs, w_o, v, gains_b).predicted;
        stats.mean_bipolar += alignment_delta(head_outputs, w_o, v, gains_c).predicted;
    }
    const double inv = 1.0 / static_cast<double>(draws);
    stats.mean_enhance *= inv;
    stats.mean_attenuate *= inv;
    stats.mean_bipolar *= inv;
    return stats;
}

} // namespace headgate::bench
