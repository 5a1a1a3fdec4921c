#pragma once

#include "sparse_eq/channel_model.hpp"

namespace sparse_eq {

enum class EqualizerKind { LE, DFE };

/// Second-order statistics for unit-energy white inputs and white noise of
/// variance 1/SNR.
struct CorrelationSet {
    CMatrix R_yy;
    CMatrix R_yx;
    CMatrix R_perp;
    double sigma_n_sq = 1.0;
    double snr_db = 0.0;
    int N_f = 0;
    int n_i = 1;
    int n_o = 1;
    int v = 0;

    /// Total number of input symbols in the window, N_f + v.
    int span() const { return N_f + v; }
};

inline CorrelationSet build_correlations(const BlockToeplitzChannel& H, double snr_db) {
    if (!std::isfinite(snr_db)) throw std::invalid_argument("build_correlations: snr_db must be finite");
    CorrelationSet c;
    c.snr_db = snr_db;
    const double snr = db_to_linear(snr_db);
    c.sigma_n_sq = 1.0 / snr;
    c.N_f = H.N_f;
    c.n_i = H.n_i;
    c.n_o = H.n_o;
    c.v = H.v;

    c.R_yx = H.matrix;
    c.R_yy = H.matrix * H.matrix.adjoint();
    c.R_yy.diagonal().array() += c.sigma_n_sq;
    make_hermitian(c.R_yy);

    const Index n = H.matrix.cols();
    CMatrix G = snr * (H.matrix.adjoint() * H.matrix);
    G.diagonal().array() += 1.0;
    make_hermitian(G);
    Eigen::LLT<CMatrix> llt(G);
    if (llt.info() != Eigen::Success) throw NumericDegeneracy("build_correlations: I + SNR*H^H H not positive definite", 0);
    c.R_perp = llt.solve(CMatrix::Identity(n, n));
    make_hermitian(c.R_perp);
    return c;
}

/// Column n_i*delta + i (both 0-based) of R_yx.
inline CVector cross_column(const CorrelationSet& corr, int delta, int i) {
    if (delta < 0 || delta > corr.span() - 1) throw std::invalid_argument("cross_column: delta out of range");
    if (i < 0 || i >= corr.n_i) throw std::invalid_argument("cross_column: stream index out of range");
    return corr.R_yx.col(Index(corr.n_i) * delta + i);
}

/// LE: floor((N_f + v)/2). DFE: N_f - 1.
inline int default_delay(EqualizerKind kind, int N_f, int v) {
    return kind == EqualizerKind::LE ? (N_f + v) / 2 : N_f - 1;
}

/// Delay satisfying delta + N_b + 1 = N_f + v.
inline int dfe_delay(int N_f, int v, int N_b) {
    const int d = N_f + v - N_b - 1;
    if (N_b < 1 || d < 0) throw std::invalid_argument("dfe_delay: N_b out of range");
    return d;
}

}  // namespace sparse_eq
