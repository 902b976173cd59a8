#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headgate/matrix.hpp"
#include "headgate/rng.hpp"

namespace headgate {

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 4;
    int d_model = 32;
    int d_k = 8;
    int d_v = 8;
    int d_ff = 128;
    int vocab_size = 64;
    bool causal_mask = true;
    bool use_mlp = true;
    double norm_eps = 1e-6;

    void validate() const {
        if (num_layers < 1) throw validation_error("config: num_layers must be >= 1");
        if (num_heads < 1) throw validation_error("config: num_heads must be >= 1");
        if (d_model < 1 || vocab_size < 1) throw validation_error("config: dimensions must be positive");
        if (d_model % num_heads != 0)
            throw validation_error("config: num_heads must divide d_model");
        if (d_k != d_model / num_heads || d_v != d_model / num_heads)
            throw validation_error("config: d_k and d_v must equal d_model / num_heads");
        if (use_mlp && d_ff < 1) throw validation_error("config: d_ff must be positive");
        if (!(norm_eps > 0.0)) throw validation_error("config: norm_eps must be positive");
    }
};

inline ModelConfig make_config(int layers, int heads, int d_model, int vocab,
                               bool causal = true, bool use_mlp = true) {
    ModelConfig c;
    c.num_layers = layers;
    c.num_heads = heads;
    c.d_model = d_model;
    c.d_k = d_model / heads;
    c.d_v = d_model / heads;
    c.d_ff = 4 * d_model;
    c.vocab_size = vocab;
    c.causal_mask = causal;
    c.use_mlp = use_mlp;
    return c;
}

struct HeadWeights {
    Matrix w_q; // d_model x d_k
    Matrix w_k; // d_model x d_k
    Matrix w_v; // d_model x d_v
};

struct LayerWeights {
    std::vector<HeadWeights> heads;
    Matrix w_o;                 // d_model x d_model
    Matrix ff_w1;               // d_model x d_ff
    Vec ff_b1;                  // d_ff
    Matrix ff_w2;               // d_ff x d_model
    Vec ff_b2;                  // d_model
    Vec norm_scale;             // d_model
};

struct Model {
    ModelConfig config;
    Matrix embedding;   // vocab x d_model
    std::vector<LayerWeights> layers;
    Matrix unembedding; // d_model x vocab

    void validate() const {
        config.validate();
        require_shape(embedding, static_cast<std::size_t>(config.vocab_size),
                      static_cast<std::size_t>(config.d_model), "embedding");
        require_shape(unembedding, static_cast<std::size_t>(config.d_model),
                      static_cast<std::size_t>(config.vocab_size), "unembedding");
        if (static_cast<int>(layers.size()) != config.num_layers)
            throw validation_error("model: layer count differs from config");
        for (const auto& layer : layers) {
            if (static_cast<int>(layer.heads.size()) != config.num_heads)
                throw validation_error("model: head count differs from config");
            for (const auto& h : layer.heads) {
                require_shape(h.w_q, config.d_model, config.d_k, "w_q");
                require_shape(h.w_k, config.d_model, config.d_k, "w_k");
                require_shape(h.w_v, config.d_model, config.d_v, "w_v");
                if (!all_finite(h.w_q) || !all_finite(h.w_k) || !all_finite(h.w_v))
                    throw validation_error("model: non-finite projection weights");
            }
            require_shape(layer.w_o, config.d_model, config.d_model, "w_o");
            if (config.use_mlp) {
                require_shape(layer.ff_w1, config.d_model, config.d_ff, "ff_w1");
                require_shape(layer.ff_w2, config.d_ff, config.d_model, "ff_w2");
                if (layer.ff_b1.size() != static_cast<std::size_t>(config.d_ff) ||
                    layer.ff_b2.size() != static_cast<std::size_t>(config.d_model) ||
                    layer.norm_scale.size() != static_cast<std::size_t>(config.d_model))
                    throw validation_error("model: feed-forward vector sizes inconsistent");
            }
        }
    }
};

namespace detail {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.gaussian();
    return m;
}

} // namespace detail

// Fresh model with every weight drawn i.i.d. zero-mean, stddev 1/sqrt(d_model).
// Normalization scales are jittered around 1 so the norm path is exercised.
inline Model make_random_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    const double sd = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    Rng rng(Rng::derive(seed, 0x6d6f64656cULL));
    m.embedding = detail::random_matrix(config.vocab_size, config.d_model, sd, rng);
    m.layers.resize(config.num_layers);
    for (auto& layer : m.layers) {
        layer.heads.resize(config.num_heads);
        for (auto& h : layer.heads) {
            h.w_q = detail::random_matrix(config.d_model, config.d_k, sd, rng);
            h.w_k = detail::random_matrix(config.d_model, config.d_k, sd, rng);
            h.w_v = detail::random_matrix(config.d_model, config.d_v, sd, rng);
        }
        layer.w_o = detail::random_matrix(config.d_model, config.d_model, sd, rng);
        if (config.use_mlp) {
            layer.ff_w1 = detail::random_matrix(config.d_model, config.d_ff, sd, rng);
            layer.ff_w2 = detail::random_matrix(config.d_ff, config.d_model, sd, rng);
            layer.ff_b1.assign(config.d_ff, 0.0);
            layer.ff_b2.assign(config.d_model, 0.0);
            layer.norm_scale.resize(config.d_model);
            for (auto& g : layer.norm_scale) g = 1.0 + 0.1 * rng.gaussian();
        }
    }
    m.unembedding = detail::random_matrix(config.d_model, config.vocab_size, sd, rng);
    return m;
}

} // namespace headgate
