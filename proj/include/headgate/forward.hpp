#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "headgate/matrix.hpp"
#include "headgate/model.hpp"
#include "headgate/ratio.hpp"
#include "headgate/sequence.hpp"
#include "headgate/taxonomy.hpp"
#include "headgate/trace.hpp"

namespace headgate {

namespace detail {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// Row-wise RMS rescale with a per-dimension scale vector. Returns the
// normalized matrix and stores 1/rms per row for the backward pass.
inline Matrix rmsnorm_rows(const Matrix& x, const Vec& scale, double eps, Vec* inv_rms_out) {
    Matrix y(x.rows(), x.cols());
    if (inv_rms_out) inv_rms_out->assign(x.rows(), 0.0);
    const double inv_d = 1.0 / static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* r = x.row(i);
        double ms = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) ms += r[j] * r[j];
        const double inv = 1.0 / std::sqrt(ms * inv_d + eps);
        if (inv_rms_out) (*inv_rms_out)[i] = inv;
        double* out = y.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) out[j] = scale[j] * r[j] * inv;
    }
    return y;
}

} // namespace detail

// Row-stochastic attention for one head: softmax((X Wq)(X Wk)^T / sqrt(d_k)),
// masked entries exact zero with rows renormalized over the unmasked prefix.
inline Matrix attention_weights(const Matrix& x, const LayerWeights& lw, int head, bool causal,
                                int layer_for_errors = -1) {
    if (head < 0 || static_cast<std::size_t>(head) >= lw.heads.size())
        throw validation_error("attention_weights: head index out of range");
    const HeadWeights& hw = lw.heads[static_cast<std::size_t>(head)];
    const Matrix q = matmul(x, hw.w_q);
    const Matrix k = matmul(x, hw.w_k);
    Matrix logits = matmul_bt(q, k);
    scale_inplace(logits, 1.0 / std::sqrt(static_cast<double>(hw.w_q.cols())));
    if (!all_finite(logits))
        throw numeric_error("attention logits are non-finite", layer_for_errors, head);
    softmax_rows(logits, causal);
    return logits;
}

// O = A V.
inline Matrix head_output(const Matrix& attention, const Matrix& values) {
    if (attention.cols() != values.rows())
        throw validation_error("head_output: attention/value shapes do not conform");
    return matmul(attention, values);
}

// Plugin-style per-layer intervention: compute each head's visual ratio from
// the realized attention of the current pass, label it against the depth
// boundaries and ratio thresholds, and gate its output by the class gain.
struct InlineRescale {
    ModalityPartition partition;
    Boundaries boundaries;
    Thresholds thresholds;
    double g_perc = 1.0;
    double g_reas = 1.0;

    void validate(int num_layers, std::size_t seq_len) const {
        partition.validate(seq_len);
        boundaries.validate(num_layers);
        thresholds.validate();
        if (!(g_perc >= 1.0) || !(g_reas >= 1.0))
            throw validation_error("rescale: class gains must be >= 1");
    }
};

// Everything the reverse pass needs, recorded during a forward.
struct LayerRecord {
    Matrix x_in;
    std::vector<Matrix> q, k, v, attn, head_out;
    Matrix concat_gated; // post-gain, pre-projection
    Matrix attn_out;     // concat_gated * W_O, pre-residual
    Matrix r1;           // x_in + attn_out (use_mlp only)
    Matrix n1;
    Vec inv_rms;
    Matrix h1, a1;
    Matrix x_out;
};

struct ForwardWorkspace {
    Matrix embedded;
    std::vector<LayerRecord> layers;
    Matrix logits;
    Matrix gains; // L x H as applied
};

struct ForwardOptions {
    const GateTensor* gates = nullptr;      // explicit per-head gains; null = ungated path
    const InlineRescale* rescale = nullptr; // mutually exclusive with gates
    bool capture_trace = true;
    bool capture_ratios = false; // requires rescale
    bool capture_labels = false; // requires rescale
    ForwardWorkspace* workspace = nullptr;
};

struct ForwardResult {
    Matrix logits;
    AttentionTrace trace;
    RatioProfile ratios;
    HeadClassification labels;
    bool has_trace = false;
    bool has_ratios = false;
    bool has_labels = false;
};

struct LayerCapture {
    std::vector<Matrix>* attention = nullptr;
    std::vector<Matrix>* head_outputs = nullptr;
    Matrix* attn_out = nullptr;
    LayerRecord* record = nullptr;
    double* ratios = nullptr;      // H entries
    HeadLabel* labels = nullptr;   // H entries
    double* gains_used = nullptr;  // H entries
};

// One block: gated multi-head attention, then (when use_mlp) residual add,
// RMS normalization, two-layer feed-forward, residual add. Without the MLP
// the block output is the bare attention sublayer, which is also the probe
// point for all pre-residual identities.
inline Matrix layer_forward(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg,
                            int layer_index, const double* gains, const InlineRescale* rescale,
                            const LayerCapture* cap = nullptr) {
    const std::size_t n = x.rows();
    const std::size_t h_count = lw.heads.size();
    const std::size_t d_v = static_cast<std::size_t>(cfg.d_v);
    const int layer_number = layer_index + 1;

    std::vector<Matrix> attn(h_count), outs(h_count);
    std::vector<Matrix> qs, ks, vs;
    if (cap && cap->record) {
        qs.resize(h_count);
        ks.resize(h_count);
        vs.resize(h_count);
    }
    std::vector<double> vis_mask;
    if (rescale) vis_mask = rescale->partition.real_mask(Modality::vision);

    Matrix concat(n, static_cast<std::size_t>(cfg.d_model));
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));

    for (std::size_t h = 0; h < h_count; ++h) {
        const HeadWeights& hw = lw.heads[h];
        Matrix q = matmul(x, hw.w_q);
        Matrix k = matmul(x, hw.w_k);
        Matrix v = matmul(x, hw.w_v);
        Matrix z = matmul_bt(q, k);
        scale_inplace(z, inv_scale);
        if (!all_finite(z))
            throw numeric_error("attention logits are non-finite", layer_index, static_cast<int>(h));
        softmax_rows(z, cfg.causal_mask);
        attn[h] = std::move(z);
        outs[h] = matmul(attn[h], v);
        if (cap && cap->record) {
            qs[h] = std::move(q);
            ks[h] = std::move(k);
            vs[h] = std::move(v);
        }

        double gain = 1.0;
        bool gated = false;
        if (gains) {
            gain = gains[h];
            gated = true;
        } else if (rescale) {
            // One masked traversal of the realized attention entries per
            // head; bitwise-identical to modality_ratio on the same matrix.
            double total = 0.0;
            for (int qpos : rescale->partition.query_positions)
                total += masked_row_sum(attn[h].row(static_cast<std::size_t>(qpos)),
                                        vis_mask.data(), n);
            const double sv =
                total / static_cast<double>(rescale->partition.query_positions.size());
            HeadLabel label = HeadLabel::unlabeled;
            if (layer_number <= rescale->boundaries.perc_last && sv >= rescale->thresholds.tau_perc)
                label = HeadLabel::perception;
            else if (layer_number >= rescale->boundaries.reas_first && sv <= rescale->thresholds.tau_reas)
                label = HeadLabel::reasoning;
            gain = label == HeadLabel::perception ? rescale->g_perc
                 : label == HeadLabel::reasoning  ? rescale->g_reas
                                                  : 1.0;
            gated = true;
            if (cap && cap->ratios) cap->ratios[h] = sv;
            if (cap && cap->labels) cap->labels[h] = label;
        }
        if (cap && cap->gains_used) cap->gains_used[h] = gain;

        const std::size_t col0 = h * d_v;
        const Matrix& o = outs[h];
        for (std::size_t i = 0; i < n; ++i) {
            const double* src = o.row(i);
            double* dst = concat.row(i) + col0;
            if (gated)
                for (std::size_t c = 0; c < d_v; ++c) dst[c] = gain * src[c];
            else
                for (std::size_t c = 0; c < d_v; ++c) dst[c] = src[c];
        }
    }

    Matrix attn_out = matmul(concat, lw.w_o);
    if (!all_finite(attn_out))
        throw numeric_error("attention sublayer output is non-finite", layer_index);

    Matrix y;
    LayerRecord* rec = cap ? cap->record : nullptr;
    if (cfg.use_mlp) {
        Matrix r1 = added(attn_out, x);
        Vec inv_rms;
        Matrix n1 = detail::rmsnorm_rows(r1, lw.norm_scale, cfg.norm_eps, rec ? &inv_rms : nullptr);
        Matrix h1 = matmul(n1, lw.ff_w1);
        for (std::size_t i = 0; i < h1.rows(); ++i) {
            double* row = h1.row(i);
            for (std::size_t j = 0; j < h1.cols(); ++j) row[j] += lw.ff_b1[j];
        }
        Matrix a1(h1.rows(), h1.cols());
        for (std::size_t i = 0; i < h1.size(); ++i) a1.data()[i] = detail::silu(h1.data()[i]);
        Matrix f = matmul(a1, lw.ff_w2);
        for (std::size_t i = 0; i < f.rows(); ++i) {
            double* row = f.row(i);
            for (std::size_t j = 0; j < f.cols(); ++j) row[j] += lw.ff_b2[j];
        }
        y = added(std::move(f), r1);
        if (rec) {
            rec->r1 = std::move(r1);
            rec->n1 = std::move(n1);
            rec->inv_rms = std::move(inv_rms);
            rec->h1 = std::move(h1);
            rec->a1 = std::move(a1);
        }
    } else {
        y = attn_out;
    }
    if (!all_finite(y))
        throw numeric_error("layer output is non-finite", layer_index);

    if (cap) {
        if (cap->attn_out) *cap->attn_out = attn_out;
        if (rec) {
            if (cap->attention) *cap->attention = attn;
            if (cap->head_outputs) *cap->head_outputs = outs;
            rec->x_in = x;
            rec->q = std::move(qs);
            rec->k = std::move(ks);
            rec->v = std::move(vs);
            rec->attn = std::move(attn);
            rec->head_out = std::move(outs);
            rec->concat_gated = std::move(concat);
            rec->attn_out = std::move(attn_out);
            rec->x_out = y;
        } else {
            if (cap->attention) *cap->attention = std::move(attn);
            if (cap->head_outputs) *cap->head_outputs = std::move(outs);
        }
    }
    return y;
}

inline Matrix embed_sequence(const Model& model, const TokenSequence& seq) {
    seq.validate(model.config.vocab_size, model.config.d_model);
    if (!seq.embeddings.empty()) return seq.embeddings;
    Matrix x(seq.size(), static_cast<std::size_t>(model.config.d_model));
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const double* src = model.embedding.row(static_cast<std::size_t>(seq.token_ids[i]));
        double* dst = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) dst[j] = src[j];
    }
    return x;
}

// Full pass: embed, run every block, unembed. Deterministic for fixed
// inputs; the trace holds every attention matrix and pre-gate head output.
// Weights and sequences are never mutated, so independent forwards may run
// concurrently; a single pass is sequential and holds no locks.
inline ForwardResult model_forward(const Model& model, const TokenSequence& seq,
                                   const ForwardOptions& opts = {}) {
    model.validate();
    const ModelConfig& cfg = model.config;
    const int L = cfg.num_layers;
    const int H = cfg.num_heads;
    if (opts.gates && opts.rescale)
        throw validation_error("forward: explicit gates and inline rescale are exclusive");
    if (opts.gates) {
        require_shape(opts.gates->gains, static_cast<std::size_t>(L), static_cast<std::size_t>(H),
                      "gate tensor");
        opts.gates->validate();
    }
    if ((opts.capture_ratios || opts.capture_labels) && !opts.rescale)
        throw validation_error("forward: ratio/label capture requires inline rescale");
    if (opts.rescale) opts.rescale->validate(L, seq.size());

    ForwardResult res;
    if (opts.capture_trace) {
        res.trace.attention.resize(L);
        res.trace.head_outputs.resize(L);
        res.trace.attn_outputs.resize(L);
        res.trace.layer_inputs.resize(L);
        res.trace.layer_outputs.resize(L);
        res.has_trace = true;
    }
    if (opts.capture_ratios) {
        res.ratios.visual_ratio = Matrix(L, H);
        res.has_ratios = true;
    }
    if (opts.capture_labels) {
        res.labels.label.assign(L, std::vector<HeadLabel>(H, HeadLabel::unlabeled));
        res.labels.boundaries = opts.rescale->boundaries;
        res.labels.thresholds = opts.rescale->thresholds;
        res.has_labels = true;
    }
    if (opts.workspace) {
        opts.workspace->layers.assign(L, LayerRecord{});
        opts.workspace->gains = Matrix(L, H, 1.0);
    }

    Matrix x = embed_sequence(model, seq);
    if (opts.workspace) opts.workspace->embedded = x;

    for (int l = 0; l < L; ++l) {
        LayerCapture cap;
        std::vector<double> gains_used(H, 1.0);
        if (opts.capture_trace) {
            cap.attention = &res.trace.attention[l];
            cap.head_outputs = &res.trace.head_outputs[l];
            cap.attn_out = &res.trace.attn_outputs[l];
            res.trace.layer_inputs[l] = x;
        }
        if (opts.capture_ratios) cap.ratios = res.ratios.visual_ratio.row(l);
        if (opts.capture_labels) cap.labels = res.labels.label[l].data();
        if (opts.workspace) cap.record = &opts.workspace->layers[l];
        cap.gains_used = gains_used.data();

        const double* gains = opts.gates ? opts.gates->gains.row(l) : nullptr;
        x = layer_forward(x, model.layers[l], cfg, l, gains, opts.rescale, &cap);

        if (opts.capture_trace) res.trace.layer_outputs[l] = x;
        if (opts.workspace)
            for (int h = 0; h < H; ++h) opts.workspace->gains(l, h) = gains_used[h];
    }

    res.logits = matmul(x, model.unembedding);
    if (!all_finite(res.logits)) throw numeric_error("logits are non-finite");
    if (opts.workspace) opts.workspace->logits = res.logits;
    return res;
}

inline ForwardResult model_forward_gated(const Model& model, const TokenSequence& seq,
                                         const GateTensor& gates, bool capture_trace = true) {
    ForwardOptions opts;
    opts.gates = &gates;
    opts.capture_trace = capture_trace;
    return model_forward(model, seq, opts);
}

inline ForwardResult model_forward_ungated(const Model& model, const TokenSequence& seq,
                                           bool capture_trace = true) {
    ForwardOptions opts;
    opts.capture_trace = capture_trace;
    return model_forward(model, seq, opts);
}

} // namespace headgate
