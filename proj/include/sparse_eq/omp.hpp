#pragma once

#include "sparse_eq/dictionary.hpp"

#include <vector>

namespace sparse_eq {

enum class StopReason { pre_met, budget_hit, stagnation };

inline std::string to_string(StopReason s) {
    switch (s) {
        case StopReason::pre_met: return "pre_met";
        case StopReason::budget_hit: return "budget_hit";
        case StopReason::stagnation: return "stagnation";
    }
    return "?";
}

struct SparseSolution {
    std::vector<Index> support;
    CVector weights;
    double pre_sq = 0.0;
    Index iterations = 0;
    StopReason stop_reason = StopReason::pre_met;

    /// Dense coefficient vector of length n.
    CVector dense(Index n) const {
        CVector z = CVector::Zero(n);
        for (std::size_t k = 0; k < support.size(); ++k) z(support[k]) = weights(Index(k));
        return z;
    }
};

/// Least squares on the columns of Phi_eff listed in `support`, via
/// column-pivoted Householder QR.
inline CVector restricted_ls(const CMatrix& Phi_eff, const CVector& d_eff, const std::vector<Index>& support) {
    if (support.empty()) throw std::invalid_argument("restricted_ls: empty support");
    CMatrix sub(Phi_eff.rows(), Index(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) {
        if (support[k] < 0 || support[k] >= Phi_eff.cols()) throw std::invalid_argument("restricted_ls: support index out of range");
        sub.col(Index(k)) = Phi_eff.col(support[k]);
    }
    Eigen::ColPivHouseholderQR<CMatrix> qr(sub);
    qr.setThreshold(1e-12);
    if (qr.rank() < sub.cols()) {
        const Index bad = qr.colsPermutation().indices()(qr.rank());
        throw NumericDegeneracy("restricted_ls: dependent columns", support[bad]);
    }
    return qr.solve(d_eff);
}

/// OMP on an explicit effective system (Phi_hat, d_hat).
inline SparseSolution omp_effective(const CMatrix& Phi, const CVector& d, double epsilon, Index max_taps,
                                    double stagnation_tol = 1e-14) {
    if (max_taps < 1) throw std::invalid_argument("omp: max_taps must be >= 1");
    if (Phi.rows() != d.size()) throw std::invalid_argument("omp: dictionary/target size mismatch");
    const Index M = Phi.rows();
    const Index N = Phi.cols();
    const Index budget = std::min(max_taps, N);

    RVector norms(N);
    for (Index j = 0; j < N; ++j) {
        norms(j) = Phi.col(j).norm();
        if (!(norms(j) > 0.0)) throw NumericDegeneracy("omp: zero dictionary column", j);
    }

    SparseSolution sol;
    const double d_sq = d.squaredNorm();
    const double floor = stagnation_tol * d_sq;
    // Residuals at rounding level count as an exact fit.
    const double target = std::max(epsilon, 1e-24 * d_sq);
    CVector r = d;
    double r_sq = d_sq;

    CMatrix Q(M, budget);
    CMatrix R = CMatrix::Zero(budget, budget);
    CVector qd(budget);
    std::vector<char> used(N, 0);

    auto finish = [&](StopReason why) {
        const Index s = Index(sol.support.size());
        sol.stop_reason = why;
        if (s == 0) {
            sol.weights = CVector();
            sol.pre_sq = d_sq;
            return sol;
        }
        sol.weights = R.topLeftCorner(s, s).triangularView<Eigen::Upper>().solve(qd.head(s));
        CVector res = d;
        for (Index k = 0; k < s; ++k) res -= sol.weights(k) * Phi.col(sol.support[k]);
        sol.pre_sq = res.squaredNorm();
        return sol;
    };

    if (r_sq <= target) return finish(StopReason::pre_met);

    while (true) {
        const CVector corr = Phi.adjoint() * r;
        Index best = -1;
        double best_score = -1.0;
        for (Index j = 0; j < N; ++j) {
            if (used[j]) continue;
            const double score = std::abs(corr(j)) / norms(j);
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        if (best < 0) return finish(StopReason::budget_hit);

        // Classical Gram-Schmidt with one re-orthogonalization pass.
        const Index s = Index(sol.support.size());
        CVector a = Phi.col(best);
        CVector coeff = CVector::Zero(s);
        if (s > 0) {
            CVector c1 = Q.leftCols(s).adjoint() * a;
            a -= Q.leftCols(s) * c1;
            CVector c2 = Q.leftCols(s).adjoint() * a;
            a -= Q.leftCols(s) * c2;
            coeff = c1 + c2;
        }
        const double rjj = a.norm();
        if (!(rjj > 1e-12 * norms(best))) throw NumericDegeneracy("omp: selected atom is dependent on the support", best);
        const CVector q = a / rjj;

        const cplx proj = q.dot(r);
        CVector r_next = r - proj * q;
        const double r_next_sq = r_next.squaredNorm();
        if (r_sq - r_next_sq < floor) {
            ++sol.iterations;
            return finish(StopReason::stagnation);
        }

        Q.col(s) = q;
        R.col(s).head(s) = coeff;
        R(s, s) = rjj;
        qd(s) = q.dot(d);
        used[best] = 1;
        sol.support.push_back(best);
        ++sol.iterations;
        r = std::move(r_next);
        r_sq = r_next_sq;

        if (r_sq <= target) return finish(StopReason::pre_met);
        if (Index(sol.support.size()) >= budget) return finish(StopReason::budget_hit);
    }
}

/// OMP with PRE stopping on the K-projected system (K Phi, K d).
inline SparseSolution omp(const SparseDesignProblem& problem, Index max_taps) {
    const auto [phi, d] = problem.effective();
    return omp_effective(phi, d, problem.epsilon, max_taps);
}

}  // namespace sparse_eq
