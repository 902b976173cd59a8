#pragma once

// Independent scalar-loop oracles for the numeric tests. These deliberately
// avoid the library's kernels: logits by explicit dot products, softmax by
// plain exp/normalize, products by triple loops.

#include <cmath>
#include <vector>

#include "headgate/matrix.hpp"
#include "headgate/model.hpp"
#include "headgate/rng.hpp"

namespace oracle {

using headgate::Matrix;
using headgate::Rng;

inline Matrix matmul_loops(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

inline Matrix attention_loops(const Matrix& x, const Matrix& w_q, const Matrix& w_k, bool causal) {
    const std::size_t n = x.rows();
    const std::size_t d_k = w_q.cols();
    const Matrix q = matmul_loops(x, w_q);
    const Matrix k = matmul_loops(x, w_k);
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t limit = causal ? i + 1 : n;
        double sum = 0.0;
        for (std::size_t j = 0; j < limit; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d_k; ++c) dot += q(i, c) * k(j, c);
            a(i, j) = std::exp(dot / std::sqrt(static_cast<double>(d_k)));
            sum += a(i, j);
        }
        for (std::size_t j = 0; j < limit; ++j) a(i, j) /= sum;
    }
    return a;
}

inline double token_loss_loops(const Matrix& logits, std::size_t pos, int target) {
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(pos, j));
    return std::log(sum) - logits(pos, static_cast<std::size_t>(target));
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.gaussian();
    return m;
}

inline Matrix random_row_stochastic(std::size_t n, Rng& rng) {
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            a(i, j) = rng.uniform() + 1e-3;
            sum += a(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) a(i, j) /= sum;
    }
    return a;
}

} // namespace oracle
