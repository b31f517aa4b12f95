#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "seqee/errors.hpp"

namespace seqee {

// All numerics run in float64: precision must not be a confound when two
// computation routes are compared bit-for-bit.
using Real = double;
using Index = Eigen::Index;

// Row-major so a matrix row is a contiguous token representation.
template <class Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixT<Real>;
using RowVector = RowVectorT<Real>;

// Itemized multiply-accumulate counters. One MAC = one multiply-add pair;
// kernels bump these with the shapes they actually multiply, so analytic
// cost formulas can be checked against instrumented counts.
struct MacCounts {
    std::uint64_t q_proj = 0;
    std::uint64_t kv_proj = 0;
    std::uint64_t o_proj = 0;
    std::uint64_t attn_scores = 0;
    std::uint64_t attn_apply = 0;
    std::uint64_t ffn = 0;
    std::uint64_t off_ramp = 0;
    std::uint64_t uncertainty = 0;

    std::uint64_t backbone() const {
        return q_proj + kv_proj + o_proj + attn_scores + attn_apply + ffn;
    }
    std::uint64_t total() const { return backbone() + off_ramp + uncertainty; }

    MacCounts& operator+=(const MacCounts& o) {
        q_proj += o.q_proj;
        kv_proj += o.kv_proj;
        o_proj += o.o_proj;
        attn_scores += o.attn_scores;
        attn_apply += o.attn_apply;
        ffn += o.ffn;
        off_ramp += o.off_ramp;
        uncertainty += o.uncertainty;
        return *this;
    }
    friend bool operator==(const MacCounts&, const MacCounts&) = default;
};

inline void ensure_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + " produced non-finite values");
}

// a * b with shape validation; counts a.rows*a.cols*b.cols MACs into *macs.
inline Matrix matmul(const Matrix& a, const Matrix& b, std::uint64_t* macs = nullptr) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    if (macs) *macs += static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols();
    Matrix out(a.rows(), b.cols());
    out.noalias() = a * b;
    ensure_finite(out, "matmul");
    return out;
}

// a * b^T (rows of b are the keys); same MAC count as the explicit product.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b, std::uint64_t* macs = nullptr) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
    if (macs) *macs += static_cast<std::uint64_t>(a.rows()) * a.cols() * b.rows();
    Matrix out(a.rows(), b.rows());
    out.noalias() = a * b.transpose();
    ensure_finite(out, "matmul_nt");
    return out;
}

// Row-wise softmax with per-row max subtraction. Rows sum to 1 within 1e-12.
inline Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
        const Real mx = m.row(r).maxCoeff();
        out.row(r) = (m.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    ensure_finite(out, "softmax_rows");
    return out;
}

// Per-row normalization to mean 0 / unit variance (population), then gain and
// bias. eps sits under the square root so constant rows map to the bias.
inline Matrix layer_norm(const Matrix& m, const RowVector& gain, const RowVector& bias, Real eps) {
    if (gain.size() != m.cols() || bias.size() != m.cols())
        throw ShapeError("layer_norm gain/bias length " + std::to_string(gain.size()) + "," +
                         std::to_string(bias.size()) + " vs cols " + std::to_string(m.cols()));
    Matrix out(m.rows(), m.cols());
    const Real n = static_cast<Real>(m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
        const Real mean = m.row(r).mean();
        const Real var = (m.row(r).array() - mean).square().sum() / n;
        const Real inv_std = Real(1) / std::sqrt(var + eps);
        out.row(r) =
            (((m.row(r).array() - mean) * inv_std) * gain.array() + bias.array()).matrix();
    }
    ensure_finite(out, "layer_norm");
    return out;
}

inline Real gelu_scalar(Real x) {
    return Real(0.5) * x * (Real(1) + std::erf(x * Real(M_SQRT1_2)));
}

inline Matrix gelu(const Matrix& m) {
    return m.unaryExpr([](Real x) { return gelu_scalar(x); });
}

inline Index argmax_row(const Matrix& m, Index r) {
    Index best = 0;
    m.row(r).maxCoeff(&best);
    return best;
}

}  // namespace seqee
