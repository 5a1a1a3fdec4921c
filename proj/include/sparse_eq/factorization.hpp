#pragma once

#include "sparse_eq/block_circulant.hpp"
#include "sparse_eq/channel_model.hpp"

#include <string>

namespace sparse_eq {

enum class FactorKind { CholeskyLL, UnitLDL, Eigen, CirculantFFT };
enum class FactorSource { Ryy, Rperp };

inline std::string to_string(FactorKind k) {
    switch (k) {
        case FactorKind::CholeskyLL: return "cholesky";
        case FactorKind::UnitLDL: return "unit_ldl";
        case FactorKind::Eigen: return "eigen";
        case FactorKind::CirculantFFT: return "circulant_fft";
    }
    return "?";
}

/// Square-root factor R = A A^H of an exact (dense) correlation matrix.
///   CholeskyLL: A = L (lower triangular), companion = L, diag empty.
///   UnitLDL:    A = P diag(sigma)^{1/2}, companion = P (unit lower), diag = sigma.
///   Eigen:      A = U diag(lambda)^{1/2}, companion = U (unitary), diag = lambda.
struct FactorPair {
    FactorKind kind = FactorKind::CholeskyLL;
    FactorSource source = FactorSource::Ryy;
    CMatrix A;
    RVector diag;
    CMatrix companion;

    Index size() const { return A.rows(); }

    /// A^{-1} x without forming an inverse.
    CVector solve(const CVector& x) const {
        switch (kind) {
            case FactorKind::CholeskyLL: return A.triangularView<Eigen::Lower>().solve(x);
            case FactorKind::UnitLDL: {
                CVector y = companion.triangularView<Eigen::UnitLower>().solve(x);
                return y.cwiseQuotient(diag.cwiseSqrt().cast<cplx>());
            }
            case FactorKind::Eigen: {
                CVector y = companion.adjoint() * x;
                for (Index j = 0; j < y.size(); ++j) {
                    if (diag(j) <= 0.0) throw NumericDegeneracy("FactorPair::solve: zero eigenvalue", j);
                    y(j) /= std::sqrt(diag(j));
                }
                return y;
            }
            case FactorKind::CirculantFFT: break;
        }
        throw std::logic_error("FactorPair::solve: unsupported kind");
    }

    CMatrix solve(const CMatrix& X) const {
        CMatrix out(X.rows(), X.cols());
        for (Index c = 0; c < X.cols(); ++c) out.col(c) = solve(CVector(X.col(c)));
        return out;
    }

    /// A^{-H} x.
    CVector solve_adjoint(const CVector& x) const {
        switch (kind) {
            case FactorKind::CholeskyLL: return A.adjoint().triangularView<Eigen::Upper>().solve(x);
            case FactorKind::UnitLDL: {
                CVector y = x.cwiseQuotient(diag.cwiseSqrt().cast<cplx>());
                return companion.adjoint().triangularView<Eigen::UnitUpper>().solve(y);
            }
            case FactorKind::Eigen: {
                CVector y = x;
                for (Index j = 0; j < y.size(); ++j) {
                    if (diag(j) <= 0.0) throw NumericDegeneracy("FactorPair::solve_adjoint: zero eigenvalue", j);
                    y(j) /= std::sqrt(diag(j));
                }
                return companion * y;
            }
            case FactorKind::CirculantFFT: break;
        }
        throw std::logic_error("FactorPair::solve_adjoint: unsupported kind");
    }

    /// R^{-1} x = A^{-H} A^{-1} x.
    CVector solve_r(const CVector& x) const { return solve_adjoint(solve(x)); }
};

namespace detail {

inline void check_hermitian(const CMatrix& R, const char* who) {
    if (R.rows() != R.cols() || R.rows() == 0) throw std::invalid_argument(std::string(who) + ": matrix must be square and nonempty");
    const double scale = std::max(R.norm(), 1.0);
    if ((R - R.adjoint()).norm() > 1e-10 * scale) throw std::invalid_argument(std::string(who) + ": matrix is not Hermitian");
}

// Column-oriented Cholesky that reports the failing pivot.
inline CMatrix cholesky_lower(const CMatrix& R) {
    const Index n = R.rows();
    const double tol = 1e-13 * R.diagonal().real().sum();
    CMatrix L = CMatrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        const double pivot = R(j, j).real() - L.row(j).head(j).squaredNorm();
        if (!(pivot > tol)) throw NumericDegeneracy("factor_exact: non-positive pivot", j);
        const double ljj = std::sqrt(pivot);
        L(j, j) = ljj;
        const Index m = n - j - 1;
        if (m > 0) {
            L.col(j).tail(m) = (R.col(j).tail(m) - L.block(j + 1, 0, m, j) * L.row(j).head(j).adjoint()) / ljj;
        }
    }
    return L;
}

}  // namespace detail

inline FactorPair factor_exact(const CMatrix& R, FactorKind kind, FactorSource source = FactorSource::Ryy) {
    detail::check_hermitian(R, "factor_exact");
    FactorPair f;
    f.kind = kind;
    f.source = source;
    const Index n = R.rows();

    switch (kind) {
        case FactorKind::CholeskyLL:
            f.A = detail::cholesky_lower(R);
            f.companion = f.A;
            break;
        case FactorKind::UnitLDL: {
            const CMatrix L = detail::cholesky_lower(R);
            RVector ljj = L.diagonal().real();
            f.companion = L * ljj.cwiseInverse().cast<cplx>().asDiagonal();
            for (Index j = 0; j < n; ++j) f.companion(j, j) = 1.0;
            f.diag = ljj.cwiseAbs2();
            f.A = f.companion * ljj.cast<cplx>().asDiagonal();
            break;
        }
        case FactorKind::Eigen: {
            Eigen::SelfAdjointEigenSolver<CMatrix> es(R);
            if (es.info() != Eigen::Success) throw NumericDegeneracy("factor_exact: eigensolver failed", 0);
            RVector lam = es.eigenvalues();
            const double lmax = std::max(lam.cwiseAbs().maxCoeff(), 0.0);
            const double tol = 1e-13 * R.diagonal().real().sum();
            for (Index j = 0; j < n; ++j) {
                if (lam(j) < 0.0) {
                    if (-lam(j) > 1e-12 * lmax) throw NumericDegeneracy("factor_exact: negative eigenvalue", j);
                    lam(j) = 0.0;
                }
                if (lam(j) <= tol) throw NumericDegeneracy("factor_exact: eigenvalue below degeneracy tolerance", j);
            }
            f.diag = lam;
            f.companion = es.eigenvectors();
            f.A = f.companion * lam.cwiseSqrt().cast<cplx>().asDiagonal();
            break;
        }
        case FactorKind::CirculantFFT:
            throw std::invalid_argument("factor_exact: circulant factors come from factor_circulant_*");
    }
    return f;
}

/// Circulant approximants of R_yy or R_perp and their Hermitian square roots.
///
/// R_yy source: channel circulant over N = N_f blocks (n_o x n_i), spectrum
/// S(k) = G(k) G(k)^H + sigma^2 I. R_perp source: channel circulant over
/// N = N_f + v blocks, spectrum (I + SNR G(k)^H G(k))^{-1}.
/// `root` is Sigma (Q for SISO) or Theta (Gamma for SISO); it is Hermitian.
struct CirculantFactorSet {
    FactorSource source = FactorSource::Ryy;
    int n_i = 1;
    int n_o = 1;
    int N_f = 0;
    int v = 0;
    double sigma_n_sq = 1.0;

    BlockCirculant channel;
    BlockCirculant approx;
    BlockCirculant root;
    BlockCirculant root_inverse;
    BlockCirculant inverse;

    /// R_yy source: rho(k) = L * trace S(k), L = n_o N_f.
    RVector rho;
    /// R_perp source: theta(k) = N * (||G(k)||_F^2 + n_i sigma^2), N = n_i (N_f + v).
    RVector theta;

    bool siso() const { return n_i == 1 && n_o == 1; }
    Index size() const { return approx.rows(); }
};

namespace detail {

inline BlockCirculant channel_circulant(const ChannelRealization& ch, int N) {
    std::vector<CMatrix> g(N, CMatrix::Zero(ch.n_o, ch.n_i));
    g[0] = ch.taps[0];
    for (int l = 1; l <= ch.v; ++l) g[N - l] = ch.taps[l];
    return BlockCirculant::from_blocks(g);
}

inline CMatrix hermitian_inverse(const CMatrix& m) {
    Eigen::LLT<CMatrix> llt(m);
    if (llt.info() != Eigen::Success) throw NumericDegeneracy("circulant factor: spectrum block not positive definite", 0);
    CMatrix out = llt.solve(CMatrix::Identity(m.rows(), m.cols()));
    make_hermitian(out);
    return out;
}

inline void check_circulant_pre(const ChannelRealization& ch, int N_f, double snr_db) {
    check_channel(ch);
    if (N_f < ch.v + 1) throw std::invalid_argument("circulant factorization: N_f must be >= v + 1");
    if (!std::isfinite(snr_db)) throw std::invalid_argument("circulant factorization: snr_db must be finite");
}

}  // namespace detail

inline CirculantFactorSet factor_circulant_ryy(const ChannelRealization& ch, int N_f, double snr_db) {
    detail::check_circulant_pre(ch, N_f, snr_db);
    CirculantFactorSet f;
    f.source = FactorSource::Ryy;
    f.n_i = ch.n_i;
    f.n_o = ch.n_o;
    f.N_f = N_f;
    f.v = ch.v;
    f.sigma_n_sq = 1.0 / db_to_linear(snr_db);
    const double s2 = f.sigma_n_sq;

    f.channel = detail::channel_circulant(ch, N_f);
    const CMatrix I_o = CMatrix::Identity(ch.n_o, ch.n_o);
    const CMatrix I_i = CMatrix::Identity(ch.n_i, ch.n_i);
    f.approx = f.channel.map([&](const CMatrix& G) {
        CMatrix S = G * G.adjoint() + s2 * I_o;
        make_hermitian(S);
        return S;
    });
    f.root = f.approx.map([](const CMatrix& S) { return hermitian_sqrt(S); });
    f.root_inverse = f.root.map([](const CMatrix& S) { return detail::hermitian_inverse(S); });
    // (G G^H + s2 I)^{-1} = (I - G (s2 I + G^H G)^{-1} G^H) / s2
    f.inverse = f.channel.map([&](const CMatrix& G) {
        const CMatrix inner = detail::hermitian_inverse(s2 * I_i + G.adjoint() * G);
        CMatrix out = (I_o - G * inner * G.adjoint()) / s2;
        make_hermitian(out);
        return out;
    });

    const double L = double(ch.n_o) * N_f;
    f.rho.resize(N_f);
    for (int k = 0; k < N_f; ++k) f.rho(k) = L * f.approx.spectrum(k).trace().real();
    return f;
}

inline CirculantFactorSet factor_circulant_rperp(const ChannelRealization& ch, int N_f, double snr_db) {
    detail::check_circulant_pre(ch, N_f, snr_db);
    CirculantFactorSet f;
    f.source = FactorSource::Rperp;
    f.n_i = ch.n_i;
    f.n_o = ch.n_o;
    f.N_f = N_f;
    f.v = ch.v;
    f.sigma_n_sq = 1.0 / db_to_linear(snr_db);
    const double snr = db_to_linear(snr_db);
    const int M = N_f + ch.v;

    f.channel = detail::channel_circulant(ch, M);
    const CMatrix I_i = CMatrix::Identity(ch.n_i, ch.n_i);
    f.inverse = f.channel.map([&](const CMatrix& G) {
        CMatrix P = I_i + snr * (G.adjoint() * G);
        make_hermitian(P);
        return P;
    });
    f.approx = f.inverse.map([](const CMatrix& P) { return detail::hermitian_inverse(P); });
    f.root = f.approx.map([](const CMatrix& S) { return hermitian_sqrt(S); });
    f.root_inverse = f.inverse.map([](const CMatrix& P) { return hermitian_sqrt(P); });

    const double N = double(ch.n_i) * M;
    f.theta.resize(M);
    for (int k = 0; k < M; ++k)
        f.theta(k) = N * (f.channel.spectrum(k).squaredNorm() + ch.n_i * f.sigma_n_sq);
    return f;
}

/// Inverse of the circulant approximant applied to rhs, using only FFTs and
/// per-frequency operations.
inline CVector circulant_inverse_apply(const CirculantFactorSet& cfs, const CVector& rhs) {
    if (rhs.size() != cfs.size()) throw std::invalid_argument("circulant_inverse_apply: length mismatch");
    return cfs.inverse.apply(rhs);
}

}  // namespace sparse_eq
