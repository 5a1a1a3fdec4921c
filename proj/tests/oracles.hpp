#pragma once

// Reference computations written directly from the definitions, sharing no
// code paths with the library beyond the basic matrix types.

#include "sparse_eq.hpp"

#include <numbers>
#include <random>

namespace oracle {

using sparse_eq::CMatrix;
using sparse_eq::cplx;
using sparse_eq::CVector;
using sparse_eq::Index;

inline CMatrix random_hpd(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMatrix X(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) X(i, j) = cplx(g(rng), g(rng));
    CMatrix R = X * X.adjoint() / double(n) + 0.5 * CMatrix::Identity(n, n);
    return (R + R.adjoint()) / 2.0;
}

inline CVector random_vector(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CVector x(n);
    for (Index i = 0; i < n; ++i) x(i) = cplx(g(rng), g(rng));
    return x;
}

/// y_{k-a}[r] = sum_l sum_i H_l(r, i) x_{k-a-l}[i], entry by entry.
inline CMatrix channel_matrix(const sparse_eq::ChannelRealization& ch, int N_f) {
    CMatrix H = CMatrix::Zero(Index(ch.n_o) * N_f, Index(ch.n_i) * (N_f + ch.v));
    for (int a = 0; a < N_f; ++a)
        for (int r = 0; r < ch.n_o; ++r)
            for (int t = 0; t < N_f + ch.v; ++t)
                for (int i = 0; i < ch.n_i; ++i) {
                    const int l = t - a;
                    if (l >= 0 && l <= ch.v) H(Index(ch.n_o) * a + r, Index(ch.n_i) * t + i) = ch.taps[std::size_t(l)](r, i);
                }
    return H;
}

inline CMatrix ryy(const CMatrix& H, double snr_db) {
    return H * H.adjoint() + std::pow(10.0, -snr_db / 10.0) * CMatrix::Identity(H.rows(), H.rows());
}

inline CMatrix rperp(const CMatrix& H, double snr_db) {
    const double snr = std::pow(10.0, snr_db / 10.0);
    const CMatrix P = CMatrix::Identity(H.cols(), H.cols()) + snr * H.adjoint() * H;
    return P.inverse();
}

/// Block (a, b) = g[(a - b) mod N].
inline CMatrix block_circulant(const std::vector<CMatrix>& g) {
    const int N = int(g.size());
    const Index p = g[0].rows(), q = g[0].cols();
    CMatrix C(N * p, N * q);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) C.block(a * p, b * q, p, q) = g[std::size_t(((a - b) % N + N) % N)];
    return C;
}

/// X_k = sum_n x_n exp(-2 pi i k n / N).
inline std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
    const std::size_t N = x.size();
    std::vector<cplx> out(N);
    for (std::size_t k = 0; k < N; ++k) {
        cplx s = 0.0;
        for (std::size_t n = 0; n < N; ++n) s += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * n) / double(N));
        out[k] = s;
    }
    return out;
}

/// MSE of the LE output w^H y against x_{k-delta}[i].
inline double le_mse(const CVector& w, const CMatrix& H, double snr_db, int delta, int i, int n_i) {
    const CMatrix R = ryy(H, snr_db);
    const CVector r = H.col(Index(n_i) * delta + i);
    return 1.0 - 2.0 * w.dot(r).real() + w.dot(R * w).real();
}

/// Smallest MSE reachable on support S: 1 - r_S^H R_SS^{-1} r_S.
inline double le_support_mse(const std::vector<Index>& S, const CMatrix& R, const CVector& r) {
    if (S.empty()) return 1.0;
    const Index s = Index(S.size());
    CMatrix Rs(s, s);
    CVector rs(s);
    for (Index a = 0; a < s; ++a) {
        rs(a) = r(S[std::size_t(a)]);
        for (Index b = 0; b < s; ++b) Rs(a, b) = R(S[std::size_t(a)], S[std::size_t(b)]);
    }
    const CVector z = Rs.ldlt().solve(rs);
    return 1.0 - rs.dot(z).real();
}

/// Exhaustive search: smallest support size whose best MSE is <= bound.
inline int min_support_size(const CMatrix& R, const CVector& r, double mse_bound) {
    const Index n = R.rows();
    int best = int(n) + 1;
    for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
        const int size = __builtin_popcountll(mask);
        if (size >= best) continue;
        std::vector<Index> S;
        for (Index j = 0; j < n; ++j)
            if (mask >> j & 1) S.push_back(j);
        if (le_support_mse(S, R, r) <= mse_bound) best = size;
    }
    return best;
}

/// Quadratic form (w - w_opt)^H R (w - w_opt).
inline double excess(const CVector& w, const CVector& w_opt, const CMatrix& R) {
    const CVector e = w - w_opt;
    return e.dot(R * e).real();
}

/// Largest |<phi_i, phi_j>| / (|phi_i| |phi_j|), i != j, straight from the columns.
inline double coherence(const CMatrix& Phi) {
    double mu = 0.0;
    for (Index i = 0; i < Phi.cols(); ++i)
        for (Index j = i + 1; j < Phi.cols(); ++j)
            mu = std::max(mu, std::abs(Phi.col(i).dot(Phi.col(j))) / (Phi.col(i).norm() * Phi.col(j).norm()));
    return mu;
}

inline double rel(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle
