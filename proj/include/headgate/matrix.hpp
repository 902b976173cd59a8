#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "headgate/errors.hpp"

namespace headgate {

// Dense row-major matrix. Everything in this library runs in 64-bit floats;
// the template parameter exists so oracles/tests can instantiate the same
// kernels at other precisions.
template <class T = double>
class MatrixT {
public:
    MatrixT() = default;
    MatrixT(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static MatrixT identity(std::size_t n) {
        MatrixT m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    T* row(std::size_t i) { return data_.data() + i * cols_; }
    const T* row(std::size_t i) const { return data_.data() + i * cols_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool same_shape(const MatrixT& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const MatrixT& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = MatrixT<double>;
using Vec = std::vector<double>;

template <class T>
void require_shape(const MatrixT<T>& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw validation_error(std::string("shape mismatch in ") + what);
}

// C = A * B, cache-friendly ikj order.
template <class T>
MatrixT<T> matmul(const MatrixT<T>& a, const MatrixT<T>& b) {
    if (a.cols() != b.rows()) throw validation_error("matmul: inner dimensions differ");
    MatrixT<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        T* crow = c.row(i);
        const T* arow = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = arow[k];
            const T* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T (row dots row; used for attention logits).
template <class T>
MatrixT<T> matmul_bt(const MatrixT<T>& a, const MatrixT<T>& b) {
    if (a.cols() != b.cols()) throw validation_error("matmul_bt: inner dimensions differ");
    MatrixT<T> c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const T* arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const T* brow = b.row(j);
            T acc = T(0);
            for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
    return c;
}

// C = A^T * B.
template <class T>
MatrixT<T> matmul_at(const MatrixT<T>& a, const MatrixT<T>& b) {
    if (a.rows() != b.rows()) throw validation_error("matmul_at: inner dimensions differ");
    MatrixT<T> c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            T* crow = c.row(i);
            const T aki = arow[i];
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

template <class T>
MatrixT<T> transpose(const MatrixT<T>& a) {
    MatrixT<T> t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

template <class T>
void add_inplace(MatrixT<T>& a, const MatrixT<T>& b) {
    if (!a.same_shape(b)) throw validation_error("add: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

template <class T>
MatrixT<T> added(MatrixT<T> a, const MatrixT<T>& b) {
    add_inplace(a, b);
    return a;
}

template <class T>
MatrixT<T> subtracted(const MatrixT<T>& a, const MatrixT<T>& b) {
    if (!a.same_shape(b)) throw validation_error("sub: shape mismatch");
    MatrixT<T> c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
    return c;
}

template <class T>
void scale_inplace(MatrixT<T>& a, T s) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= s;
}

template <class T>
T max_abs(const MatrixT<T>& a) {
    T m = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i]));
    return m;
}

template <class T>
T max_abs_diff(const MatrixT<T>& a, const MatrixT<T>& b) {
    if (!a.same_shape(b)) throw validation_error("max_abs_diff: shape mismatch");
    T m = T(0);
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

template <class T>
T frobenius_norm(const MatrixT<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

template <class T>
bool all_finite(const MatrixT<T>& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(static_cast<double>(a.data()[i]))) return false;
    return true;
}

// In-place row softmax with per-row max subtraction. With `causal` set,
// row i is normalized over columns [0, i] and the rest are exact zeros.
template <class T>
void softmax_rows(MatrixT<T>& m, bool causal) {
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i) {
        T* r = m.row(i);
        const std::size_t limit = causal ? std::min(i + 1, m.cols()) : m.cols();
        T mx = r[0];
        for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, r[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < limit; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < limit; ++j) r[j] *= inv;
        for (std::size_t j = limit; j < m.cols(); ++j) r[j] = T(0);
    }
}

} // namespace headgate
