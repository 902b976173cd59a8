#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "headgate/forward.hpp"

namespace headgate {

// Cross-entropy for one position: -log P(t_star) under a numerically stable
// log-softmax of the logit row.
inline double token_loss(const Matrix& logits, std::size_t position, int target) {
    if (position >= logits.rows())
        throw validation_error("token_loss: position out of range");
    if (target < 0 || static_cast<std::size_t>(target) >= logits.cols())
        throw validation_error("token_loss: target out of vocab range");
    const double* row = logits.row(position);
    double mx = row[0];
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(row[j] - mx);
    return mx + std::log(sum) - row[static_cast<std::size_t>(target)];
}

// Signed sensitivity of the loss to each head's gate, evaluated at all-ones
// gates. Negative means amplifying the head lowers the loss.
struct GateGradient {
    Matrix signed_sensitivity; // L x H

    std::size_t num_layers() const { return signed_sensitivity.rows(); }
    std::size_t num_heads() const { return signed_sensitivity.cols(); }
};

namespace detail {

inline Matrix rmsnorm_backward(const Matrix& d_n1, const Matrix& r1, const Vec& scale,
                               const Vec& inv_rms) {
    Matrix d_r1(r1.rows(), r1.cols());
    const double inv_d = 1.0 / static_cast<double>(r1.cols());
    for (std::size_t i = 0; i < r1.rows(); ++i) {
        const double* dn = d_n1.row(i);
        const double* r = r1.row(i);
        double* dr = d_r1.row(i);
        const double inv = inv_rms[i];
        double dot = 0.0;
        for (std::size_t j = 0; j < r1.cols(); ++j) dot += dn[j] * scale[j] * r[j];
        const double coef = dot * inv * inv * inv * inv_d;
        for (std::size_t j = 0; j < r1.cols(); ++j) dr[j] = dn[j] * scale[j] * inv - r[j] * coef;
    }
    return d_r1;
}

// Softmax backward restricted to the realized (possibly masked) rows, then
// through the scaled QK^T bilinear form into the hidden states.
inline void attention_backward(const LayerRecord& rec, const LayerWeights& lw,
                               const ModelConfig& cfg, std::size_t head, const Matrix& d_out,
                               Matrix& d_x) {
    const Matrix& a = rec.attn[head];
    const Matrix& q = rec.q[head];
    const Matrix& k = rec.k[head];
    const Matrix& v = rec.v[head];

    Matrix d_a = matmul_bt(d_out, v); // N x N
    const Matrix d_v = matmul_at(a, d_out);

    Matrix d_z(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        const double* darow = d_a.row(i);
        double* dzrow = d_z.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) dot += darow[j] * arow[j];
        for (std::size_t j = 0; j < a.cols(); ++j) dzrow[j] = arow[j] * (darow[j] - dot);
    }
    scale_inplace(d_z, 1.0 / std::sqrt(static_cast<double>(cfg.d_k)));

    const Matrix d_q = matmul(d_z, k);
    const Matrix d_k = matmul_at(d_z, q);

    const HeadWeights& hw = lw.heads[head];
    add_inplace(d_x, matmul_bt(d_q, hw.w_q));
    add_inplace(d_x, matmul_bt(d_k, hw.w_k));
    add_inplace(d_x, matmul_bt(d_v, hw.w_v));
}

} // namespace detail

// Reverse-mode differentiation of token_loss with respect to the gate
// variables only; model weights stay frozen. The pass is hand-derived for
// this fixed architecture, so a finite-difference oracle stays independent.
// Each call owns its workspace; attribution over different inputs can run
// concurrently.
inline GateGradient gate_gradients(const Model& model, const TokenSequence& seq,
                                   std::size_t position, int target) {
    const ModelConfig& cfg = model.config;
    const int L = cfg.num_layers;
    const int H = cfg.num_heads;
    const std::size_t d_v = static_cast<std::size_t>(cfg.d_v);

    GateTensor ones = GateTensor::ones(L, H);
    ForwardWorkspace ws;
    ForwardOptions opts;
    opts.gates = &ones;
    opts.capture_trace = false;
    opts.workspace = &ws;
    model_forward(model, seq, opts);

    if (position >= seq.size()) throw validation_error("gate_gradients: position out of range");
    if (target < 0 || target >= cfg.vocab_size)
        throw validation_error("gate_gradients: target out of vocab range");

    // d loss / d logits, nonzero only at the queried position.
    const double* lrow = ws.logits.row(position);
    const std::size_t vocab = ws.logits.cols();
    double mx = lrow[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, lrow[j]);
    double sum = 0.0;
    std::vector<double> probs(vocab);
    for (std::size_t j = 0; j < vocab; ++j) {
        probs[j] = std::exp(lrow[j] - mx);
        sum += probs[j];
    }
    for (std::size_t j = 0; j < vocab; ++j) probs[j] /= sum;
    probs[static_cast<std::size_t>(target)] -= 1.0;

    // Into the final hidden states through the unembedding.
    Matrix d_x(seq.size(), static_cast<std::size_t>(cfg.d_model));
    {
        double* drow = d_x.row(position);
        for (std::size_t d = 0; d < d_x.cols(); ++d) {
            const double* urow = model.unembedding.row(d);
            double acc = 0.0;
            for (std::size_t j = 0; j < vocab; ++j) acc += probs[j] * urow[j];
            drow[d] = acc;
        }
    }

    GateGradient grad;
    grad.signed_sensitivity = Matrix(L, H);

    for (int l = L - 1; l >= 0; --l) {
        const LayerRecord& rec = ws.layers[l];
        const LayerWeights& lw = model.layers[l];

        Matrix d_attn_out;
        Matrix d_x_prev(d_x.rows(), d_x.cols());
        if (cfg.use_mlp) {
            // y = r1 + ff(rmsnorm(r1)); r1 = x + attn_out
            Matrix d_r1 = d_x;
            const Matrix d_a1 = matmul_bt(d_x, lw.ff_w2);
            Matrix d_h1(d_a1.rows(), d_a1.cols());
            for (std::size_t i = 0; i < d_h1.size(); ++i)
                d_h1.data()[i] = d_a1.data()[i] * detail::silu_grad(rec.h1.data()[i]);
            const Matrix d_n1 = matmul_bt(d_h1, lw.ff_w1);
            add_inplace(d_r1, detail::rmsnorm_backward(d_n1, rec.r1, lw.norm_scale, rec.inv_rms));
            d_attn_out = d_r1;
            d_x_prev = std::move(d_r1);
        } else {
            d_attn_out = d_x;
            // no residual without the MLP block; the input only feeds attention
        }

        const Matrix d_concat = matmul_bt(d_attn_out, lw.w_o);

        for (int h = 0; h < H; ++h) {
            const Matrix& o = rec.head_out[static_cast<std::size_t>(h)];
            const std::size_t col0 = static_cast<std::size_t>(h) * d_v;

            double s = 0.0;
            Matrix d_o(o.rows(), o.cols());
            const double gain = ws.gains(l, h);
            for (std::size_t i = 0; i < o.rows(); ++i) {
                const double* dc = d_concat.row(i) + col0;
                const double* orow = o.row(i);
                double* dorow = d_o.row(i);
                for (std::size_t c = 0; c < d_v; ++c) {
                    s += dc[c] * orow[c];
                    dorow[c] = gain * dc[c];
                }
            }
            if (!std::isfinite(s))
                throw numeric_error("gate gradient is non-finite", l, h);
            grad.signed_sensitivity(l, h) = s;

            detail::attention_backward(rec, lw, cfg, static_cast<std::size_t>(h), d_o, d_x_prev);
        }
        d_x = std::move(d_x_prev);
    }
    return grad;
}

enum class NormalizationMode { layer_wise, global };

struct ImportanceMap {
    Matrix raw;        // |S|
    Matrix normalized; // per mode
    NormalizationMode mode = NormalizationMode::layer_wise;
    std::vector<std::uint8_t> degenerate_layers; // layer-wise rows with zero sum
    bool degenerate_total = false;               // global mode, all-zero map
};

inline ImportanceMap importance_from_raw(const Matrix& raw, NormalizationMode mode) {
    ImportanceMap map;
    map.raw = raw;
    map.mode = mode;
    map.normalized = Matrix(raw.rows(), raw.cols());
    map.degenerate_layers.assign(raw.rows(), 0);
    if (mode == NormalizationMode::layer_wise) {
        for (std::size_t l = 0; l < raw.rows(); ++l) {
            double sum = 0.0;
            for (std::size_t h = 0; h < raw.cols(); ++h) sum += raw(l, h);
            if (sum > 0.0) {
                for (std::size_t h = 0; h < raw.cols(); ++h)
                    map.normalized(l, h) = raw(l, h) / sum;
            } else {
                map.degenerate_layers[l] = 1;
            }
        }
    } else {
        double total = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) total += raw.data()[i];
        if (total > 0.0) {
            for (std::size_t i = 0; i < raw.size(); ++i)
                map.normalized.data()[i] = raw.data()[i] / total;
        } else {
            map.degenerate_total = true;
        }
    }
    return map;
}

inline ImportanceMap importance(const GateGradient& gradient, NormalizationMode mode) {
    Matrix raw(gradient.signed_sensitivity.rows(), gradient.signed_sensitivity.cols());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw.data()[i] = std::abs(gradient.signed_sensitivity.data()[i]);
    return importance_from_raw(raw, mode);
}

// Aggregation over several attributed tokens: mean of the raw |S| maps,
// taken before any normalization.
inline Matrix mean_raw_importance(const std::vector<GateGradient>& gradients) {
    if (gradients.empty()) throw validation_error("mean_raw_importance: no gradients given");
    Matrix mean(gradients[0].signed_sensitivity.rows(), gradients[0].signed_sensitivity.cols());
    for (const auto& g : gradients) {
        if (!g.signed_sensitivity.same_shape(mean))
            throw validation_error("mean_raw_importance: gradient shapes differ");
        for (std::size_t i = 0; i < mean.size(); ++i)
            mean.data()[i] += std::abs(g.signed_sensitivity.data()[i]);
    }
    scale_inplace(mean, 1.0 / static_cast<double>(gradients.size()));
    return mean;
}

struct RankedHead {
    int layer = 0; // 0-based
    int head = 0;
    double value = 0.0;
};

// Descending stable sort of the normalized scores; ties resolve to
// (layer, head) ascending.
inline std::vector<RankedHead> rank_heads(const ImportanceMap& map) {
    std::vector<RankedHead> order;
    order.reserve(map.normalized.size());
    for (std::size_t l = 0; l < map.normalized.rows(); ++l)
        for (std::size_t h = 0; h < map.normalized.cols(); ++h)
            order.push_back({static_cast<int>(l), static_cast<int>(h), map.normalized(l, h)});
    std::stable_sort(order.begin(), order.end(),
                     [](const RankedHead& a, const RankedHead& b) { return a.value > b.value; });
    return order;
}

} // namespace headgate
