#pragma once

#include "sparse_eq/types.hpp"

#include <unsupported/Eigen/FFT>

#include <functional>
#include <vector>

namespace sparse_eq {

namespace detail {

// Forward DFT is unnormalized, inverse carries 1/M (Eigen's default scaling).
inline Eigen::FFT<double>& fft_plan() {
    thread_local Eigen::FFT<double> plan;
    return plan;
}

inline std::vector<cplx> dft(const std::vector<cplx>& x) {
    if (x.size() <= 1) return x;
    std::vector<cplx> out;
    fft_plan().fwd(out, x);
    return out;
}

inline std::vector<cplx> idft(const std::vector<cplx>& x) {
    if (x.size() <= 1) return x;
    std::vector<cplx> out;
    fft_plan().inv(out, x);
    return out;
}

}  // namespace detail

/// Block-circulant operator with N blocks of size p x q. Block (a, b) equals
/// g_{(a-b) mod N}; the operator is stored by its per-frequency spectrum
/// G(k) = sum_m g_m e^{-j 2 pi k m / N} and applied with FFTs.
/// Vectors are stacked block-major: entry (b, j) lives at index q*b + j.
class BlockCirculant {
public:
    BlockCirculant() = default;

    BlockCirculant(int N, int p, int q, std::vector<CMatrix> spectrum)
        : N_(N), p_(p), q_(q), spec_(std::move(spectrum)) {
        if (N_ < 1 || p_ < 1 || q_ < 1 || static_cast<int>(spec_.size()) != N_)
            throw std::invalid_argument("BlockCirculant: inconsistent dimensions");
        for (const auto& s : spec_)
            if (s.rows() != p_ || s.cols() != q_)
                throw std::invalid_argument("BlockCirculant: spectrum block has wrong shape");
    }

    static BlockCirculant from_blocks(const std::vector<CMatrix>& g) {
        if (g.empty()) throw std::invalid_argument("BlockCirculant: no blocks");
        const int N = static_cast<int>(g.size());
        const int p = static_cast<int>(g[0].rows());
        const int q = static_cast<int>(g[0].cols());
        std::vector<CMatrix> spec(N, CMatrix::Zero(p, q));
        std::vector<cplx> seq(N);
        for (int r = 0; r < p; ++r)
            for (int c = 0; c < q; ++c) {
                for (int m = 0; m < N; ++m) seq[m] = g[m](r, c);
                const auto s = detail::dft(seq);
                for (int k = 0; k < N; ++k) spec[k](r, c) = s[k];
            }
        return BlockCirculant(N, p, q, std::move(spec));
    }

    int blocks() const { return N_; }
    int block_rows() const { return p_; }
    int block_cols() const { return q_; }
    Index rows() const { return Index(N_) * p_; }
    Index cols() const { return Index(N_) * q_; }
    const std::vector<CMatrix>& spectrum() const { return spec_; }
    const CMatrix& spectrum(int k) const { return spec_[k]; }

    /// Per-frequency transform of the spectrum into a new block circulant.
    BlockCirculant map(const std::function<CMatrix(const CMatrix&)>& f) const {
        std::vector<CMatrix> s;
        s.reserve(N_);
        for (const auto& blk : spec_) s.push_back(f(blk));
        const int p = static_cast<int>(s[0].rows());
        const int q = static_cast<int>(s[0].cols());
        return BlockCirculant(N_, p, q, std::move(s));
    }

    BlockCirculant adjoint() const {
        return map([](const CMatrix& m) { return CMatrix(m.adjoint()); });
    }

    BlockCirculant operator*(const BlockCirculant& rhs) const {
        if (rhs.N_ != N_ || rhs.p_ != q_) throw std::invalid_argument("BlockCirculant: product shape mismatch");
        std::vector<CMatrix> s(N_);
        for (int k = 0; k < N_; ++k) s[k] = spec_[k] * rhs.spec_[k];
        return BlockCirculant(N_, p_, rhs.q_, std::move(s));
    }

    CVector apply(const CVector& x) const { return apply_impl(x, false); }
    CVector apply_adjoint(const CVector& x) const { return apply_impl(x, true); }

    /// Block g_m recovered from the spectrum.
    std::vector<CMatrix> blocks_time() const {
        std::vector<CMatrix> g(N_, CMatrix::Zero(p_, q_));
        std::vector<cplx> seq(N_);
        for (int r = 0; r < p_; ++r)
            for (int c = 0; c < q_; ++c) {
                for (int k = 0; k < N_; ++k) seq[k] = spec_[k](r, c);
                const auto t = detail::idft(seq);
                for (int m = 0; m < N_; ++m) g[m](r, c) = t[m];
            }
        return g;
    }

    /// Dense materialization; intended for verification and small problems.
    CMatrix dense() const {
        const auto g = blocks_time();
        CMatrix out(rows(), cols());
        for (int a = 0; a < N_; ++a)
            for (int b = 0; b < N_; ++b)
                out.block(Index(a) * p_, Index(b) * q_, p_, q_) = g[((a - b) % N_ + N_) % N_];
        return out;
    }

private:
    CVector apply_impl(const CVector& x, bool adj) const {
        const int in_dim = adj ? p_ : q_;
        const int out_dim = adj ? q_ : p_;
        if (x.size() != Index(N_) * in_dim) throw std::invalid_argument("BlockCirculant: vector length mismatch");

        std::vector<CVector> X(N_, CVector::Zero(in_dim));
        std::vector<cplx> seq(N_);
        for (int j = 0; j < in_dim; ++j) {
            for (int b = 0; b < N_; ++b) seq[b] = x(Index(b) * in_dim + j);
            const auto s = detail::dft(seq);
            for (int k = 0; k < N_; ++k) X[k](j) = s[k];
        }
        CVector y(Index(N_) * out_dim);
        std::vector<CVector> Y(N_);
        for (int k = 0; k < N_; ++k) Y[k] = adj ? CVector(spec_[k].adjoint() * X[k]) : CVector(spec_[k] * X[k]);
        for (int j = 0; j < out_dim; ++j) {
            for (int k = 0; k < N_; ++k) seq[k] = Y[k](j);
            const auto t = detail::idft(seq);
            for (int b = 0; b < N_; ++b) y(Index(b) * out_dim + j) = t[b];
        }
        return y;
    }

    int N_ = 0;
    int p_ = 0;
    int q_ = 0;
    std::vector<CMatrix> spec_;
};

/// Hermitian PSD square root of a small Hermitian matrix.
inline CMatrix hermitian_sqrt(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
    RVector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace sparse_eq
