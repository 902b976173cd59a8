#pragma once

#include <vector>

#include "headgate/matrix.hpp"

namespace headgate {

// Per-(layer, head) multiplicative gains on head outputs. All ones is the
// identity intervention; the same tensor doubles as the differentiation
// variable for head attribution.
struct GateTensor {
    Matrix gains; // L x H

    static GateTensor ones(int layers, int heads) {
        GateTensor g;
        g.gains = Matrix(static_cast<std::size_t>(layers), static_cast<std::size_t>(heads), 1.0);
        return g;
    }

    double operator()(int layer, int head) const {
        return gains(static_cast<std::size_t>(layer), static_cast<std::size_t>(head));
    }
    double& operator()(int layer, int head) {
        return gains(static_cast<std::size_t>(layer), static_cast<std::size_t>(head));
    }

    void validate() const {
        for (std::size_t i = 0; i < gains.size(); ++i) {
            const double g = gains.data()[i];
            if (!std::isfinite(g) || !(g > 0.0))
                throw validation_error("gates: every gain must be finite and > 0");
        }
    }
};

// Everything one forward pass materializes: attention matrices, pre-gate
// head outputs, the pre-residual attention-sublayer output, and the
// per-layer input/output hidden states.
struct AttentionTrace {
    std::vector<std::vector<Matrix>> attention;    // [L][H], each N x N
    std::vector<std::vector<Matrix>> head_outputs; // [L][H], each N x d_v
    std::vector<Matrix> attn_outputs;              // [L], each N x d_model (pre-residual)
    std::vector<Matrix> layer_inputs;              // [L], each N x d_model
    std::vector<Matrix> layer_outputs;             // [L], each N x d_model

    std::size_t num_layers() const { return attention.size(); }
    std::size_t num_heads() const { return attention.empty() ? 0 : attention[0].size(); }

    bool complete() const {
        if (attention.empty() || attention.size() != head_outputs.size()) return false;
        for (std::size_t l = 0; l < attention.size(); ++l) {
            if (attention[l].size() != num_heads() || head_outputs[l].size() != num_heads())
                return false;
            for (const auto& a : attention[l])
                if (a.empty()) return false;
        }
        return true;
    }
};

} // namespace headgate
