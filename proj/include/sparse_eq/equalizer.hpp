#pragma once

#include "sparse_eq/omp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <optional>

namespace sparse_eq {

/// Wall-clock seconds per design stage. Kept apart from numerical results.
struct StageTimes {
    double factorization = 0.0;
    double omp = 0.0;
    double evaluation = 0.0;

    StageTimes& operator+=(const StageTimes& o) {
        factorization += o.factorization;
        omp += o.omp;
        evaluation += o.evaluation;
        return *this;
    }
};

class ScopedTimer {
public:
    explicit ScopedTimer(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
    ~ScopedTimer() { sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }
    ScopedTimer(const ScopedTimer&) = delete;
    ScopedTimer& operator=(const ScopedTimer&) = delete;

private:
    double& sink_;
    std::chrono::steady_clock::time_point start_;
};

/// One (channel, N_f, SNR) operating point with lazily computed, cached
/// factorizations. Not thread-safe; use one context per worker.
class DesignContext {
public:
    DesignContext(ChannelRealization ch, int N_f, double snr_db)
        : ch_(std::move(ch)), N_f_(N_f), snr_db_(snr_db), H_(build_block_toeplitz(ch_, N_f)), corr_(build_correlations(H_, snr_db)) {}

    const ChannelRealization& channel() const { return ch_; }
    const BlockToeplitzChannel& H() const { return H_; }
    const CorrelationSet& corr() const { return corr_; }
    int N_f() const { return N_f_; }
    double snr_db() const { return snr_db_; }
    StageTimes& times() { return times_; }

    std::shared_ptr<const FactorPair> factor(FactorKind kind, FactorSource source) {
        const auto key = std::make_pair(int(kind), int(source));
        auto it = exact_.find(key);
        if (it != exact_.end()) return it->second;
        ScopedTimer t(times_.factorization);
        auto f = std::make_shared<const FactorPair>(
            factor_exact(source == FactorSource::Ryy ? corr_.R_yy : corr_.R_perp, kind, source));
        exact_.emplace(key, f);
        return f;
    }

    std::shared_ptr<const CirculantFactorSet> circulant(FactorSource source) {
        auto& slot = source == FactorSource::Ryy ? circ_ryy_ : circ_rperp_;
        if (!slot) {
            ScopedTimer t(times_.factorization);
            slot = std::make_shared<const CirculantFactorSet>(source == FactorSource::Ryy
                                                                  ? factor_circulant_ryy(ch_, N_f_, snr_db_)
                                                                  : factor_circulant_rperp(ch_, N_f_, snr_db_));
        }
        return slot;
    }

    /// Exact Cholesky factor of R_yy, used for evaluation.
    std::shared_ptr<const FactorPair> ryy_chol() { return factor(FactorKind::CholeskyLL, FactorSource::Ryy); }

private:
    ChannelRealization ch_;
    int N_f_;
    double snr_db_;
    BlockToeplitzChannel H_;
    CorrelationSet corr_;
    std::map<std::pair<int, int>, std::shared_ptr<const FactorPair>> exact_;
    std::shared_ptr<const CirculantFactorSet> circ_ryy_;
    std::shared_ptr<const CirculantFactorSet> circ_rperp_;
    StageTimes times_;
};

enum class BudgetMode { EtaMax, SparsityPct };

/// Exactly one budget per design: an SNR-loss bound in dB, or a tap percentage.
struct Budget {
    BudgetMode mode = BudgetMode::EtaMax;
    double value = 0.0;

    static Budget eta(double db) { return {BudgetMode::EtaMax, db}; }
    static Budget sparsity(double pct) { return {BudgetMode::SparsityPct, pct}; }

    Index max_taps(Index span) const {
        if (mode == BudgetMode::EtaMax) return span;
        if (value < 0.0 || value > 100.0) throw std::invalid_argument("Budget: sparsity_pct must lie in [0, 100]");
        return std::clamp<Index>(Index(std::llround(value * double(span) / 100.0)), 0, span);
    }
};

inline std::string to_string(const Budget& b) {
    return (b.mode == BudgetMode::EtaMax ? "eta_max_db=" : "sparsity_pct=") + nlohmann::json(b.value).dump();
}

struct EqualizerDesign {
    EqualizerKind kind = EqualizerKind::LE;
    int n_i = 1;
    int n_o = 1;
    int N_f = 0;
    int v = 0;
    int delta = 0;
    int N_b = 0;
    /// LE taps (one column per stream) or FFF matrix, n_o N_f x n_i.
    CMatrix W;
    /// DFE feedback matrix n_i (N_f + v) x n_i with identity block at block row delta.
    CMatrix B;
    std::vector<double> xi_m;
    std::vector<double> xi_ex;
    /// LE taps or FFF taps, percent of n_o N_f per stream.
    std::vector<double> active_tap_pct;
    /// FBF taps excluding the fixed unity entry, percent of n_i N_b per stream.
    std::vector<double> fbf_active_tap_pct;
    nlohmann::json flags = nlohmann::json::object();

    double mean_active_tap_pct() const {
        return active_tap_pct.empty() ? 0.0
                                      : std::accumulate(active_tap_pct.begin(), active_tap_pct.end(), 0.0) / double(active_tap_pct.size());
    }

    /// Feedback taps B_t, t = 1..N_b, as an n_i x n_i block (row t of the FBF).
    CMatrix feedback_block(int t) const { return B.block(Index(n_i) * (delta + t), 0, n_i, n_i); }
};

namespace detail {

inline double nonzero_pct(const CVector& w) {
    if (w.size() == 0) return 0.0;
    Index nz = 0;
    for (Index k = 0; k < w.size(); ++k) nz += (w(k) != cplx(0.0, 0.0)) ? 1 : 0;
    return 100.0 * double(nz) / double(w.size());
}

inline std::vector<Index> fbf_span_indices(const EqualizerDesign& d) {
    return fbf_columns(d.n_i, d.delta, d.N_b);
}

inline void refresh_tap_stats(EqualizerDesign& d) {
    d.active_tap_pct.clear();
    d.fbf_active_tap_pct.clear();
    for (int i = 0; i < d.n_i; ++i) {
        d.active_tap_pct.push_back(nonzero_pct(d.W.col(i)));
        if (d.kind == EqualizerKind::DFE) {
            const auto idx = fbf_span_indices(d);
            CVector b(Index(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k) b(Index(k)) = d.B(idx[k], i);
            d.fbf_active_tap_pct.push_back(nonzero_pct(b));
        }
    }
}

// (w - w_opt)^H R (w - w_opt) via the Cholesky factor of R.
inline double excess_mse(const FactorPair& chol, const CVector& w, const CVector& w_opt) {
    return (chol.A.adjoint() * (w - w_opt)).squaredNorm();
}

// R^{-1} X from a Cholesky factor of R.
inline CMatrix ryy_solve(const FactorPair& chol, const CMatrix& X) {
    return chol.A.adjoint().triangularView<Eigen::Upper>().solve(chol.A.triangularView<Eigen::Lower>().solve(X));
}

inline double le_xi_m(const FactorPair& chol, const CVector& r) { return 1.0 - chol.solve(r).squaredNorm(); }

inline SparseSolution solve_with_budget(const SparseDesignProblem& p, Index max_taps) {
    if (max_taps == 0) {
        SparseSolution s;
        s.weights = CVector();
        s.pre_sq = p.residual_sq(CVector::Zero(p.unknowns()));
        s.stop_reason = StopReason::budget_hit;
        return s;
    }
    return omp(p, max_taps);
}

inline int resolve_dfe_delay(const DesignContext& ctx, int N_b, std::optional<int> delta) {
    const auto& c = ctx.corr();
    if (N_b < 1 || N_b > c.span() - 1) throw std::invalid_argument("design_sparse_dfe: N_b out of range");
    if (delta) {
        if (*delta < 0 || *delta + N_b + 1 > c.span()) throw std::invalid_argument("design_sparse_dfe: delta + N_b + 1 exceeds N_f + v");
        return *delta;
    }
    return N_b == c.v ? default_delay(EqualizerKind::DFE, c.N_f, c.v) : dfe_delay(c.N_f, c.v, N_b);
}

inline std::string stage_error(const std::string& stage, int stream, const std::exception& e) {
    return stage + " (stream " + std::to_string(stream) + "): " + e.what();
}

}  // namespace detail

/// Dense MMSE LE, w_i = R_yy^{-1} r_{delta,i}.
inline EqualizerDesign design_mmse_le(DesignContext& ctx, std::optional<int> delta = std::nullopt) {
    const auto& c = ctx.corr();
    EqualizerDesign d;
    d.kind = EqualizerKind::LE;
    d.n_i = c.n_i;
    d.n_o = c.n_o;
    d.N_f = c.N_f;
    d.v = c.v;
    d.delta = delta.value_or(default_delay(EqualizerKind::LE, c.N_f, c.v));
    d.W = CMatrix::Zero(c.R_yy.rows(), c.n_i);
    auto chol = ctx.ryy_chol();
    for (int i = 0; i < c.n_i; ++i) {
        const CVector r = cross_column(c, d.delta, i);
        d.W.col(i) = chol->solve_r(r);
        d.xi_m.push_back(detail::le_xi_m(*chol, r));
        d.xi_ex.push_back(0.0);
    }
    d.flags["design"] = "mmse_le";
    detail::refresh_tap_stats(d);
    return d;
}

/// Sparse LE per stream via OMP on the chosen dictionary.
inline EqualizerDesign design_sparse_le(DesignContext& ctx, DictKind dict, const Budget& budget,
                                        std::optional<int> delta = std::nullopt) {
    const auto& c = ctx.corr();
    if (dict_source(dict) != FactorSource::Ryy || dict == DictKind::Rperp)
        throw std::invalid_argument("design_sparse_le: dictionary " + to_string(dict) + " is not an R_yy dictionary");
    if (dict == DictKind::Q_H && !(c.n_i == 1 && c.n_o == 1)) throw std::invalid_argument("design_sparse_le: Q_H requires a SISO channel");

    EqualizerDesign d;
    d.kind = EqualizerKind::LE;
    d.n_i = c.n_i;
    d.n_o = c.n_o;
    d.N_f = c.N_f;
    d.v = c.v;
    d.delta = delta.value_or(default_delay(EqualizerKind::LE, c.N_f, c.v));
    d.W = CMatrix::Zero(c.R_yy.rows(), c.n_i);
    const Index span = c.R_yy.rows();
    auto chol = ctx.ryy_chol();
    nlohmann::json stops = nlohmann::json::array();

    for (int i = 0; i < c.n_i; ++i) {
        try {
            const CVector r = cross_column(c, d.delta, i);
            const double xi_m_exact = detail::le_xi_m(*chol, r);
            SparseDesignProblem p;
            double xi_m_design = xi_m_exact;
            if (is_circulant(dict)) {
                auto cs = ctx.circulant(FactorSource::Ryy);
                xi_m_design = 1.0 - r.dot(circulant_inverse_apply(*cs, r)).real();
                p = build_le_problem(c, cs, d.delta, i, 0.0);
            } else {
                p = build_le_problem(c, ctx.factor(dict_factor_kind(dict), FactorSource::Ryy), d.delta, i, 0.0, is_raw_ryy(dict));
            }
            if (budget.mode == BudgetMode::EtaMax) p.epsilon = epsilon_from_eta(budget.value, xi_m_design);
            SparseSolution sol;
            {
                ScopedTimer t(ctx.times().omp);
                sol = detail::solve_with_budget(p, budget.max_taps(span));
            }
            d.W.col(i) = p.offset.expand(sol.dense(p.unknowns()));
            ScopedTimer t(ctx.times().evaluation);
            d.xi_m.push_back(xi_m_exact);
            d.xi_ex.push_back(detail::excess_mse(*chol, d.W.col(i), chol->solve_r(r)));
            stops.push_back(to_string(sol.stop_reason));
        } catch (const NumericDegeneracy& e) {
            throw NumericDegeneracy(detail::stage_error("sparse LE", i, e), e.index());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(detail::stage_error("sparse LE", i, e));
        }
    }
    d.flags["design"] = "sparse_le";
    d.flags["dict"] = to_string(dict);
    d.flags["budget"] = to_string(budget);
    d.flags["stop_reasons"] = stops;
    detail::refresh_tap_stats(d);
    return d;
}

/// Fills xi_m / xi_ex for a DFE whose B is set, given its FFF matrix W.
inline void finalize_dfe_metrics(DesignContext& ctx, EqualizerDesign& d) {
    ScopedTimer t(ctx.times().evaluation);
    const auto& c = ctx.corr();
    auto chol = ctx.ryy_chol();
    d.xi_m.clear();
    d.xi_ex.clear();
    for (int i = 0; i < c.n_i; ++i) {
        const CVector b = d.B.col(i);
        const CVector w_opt = chol->solve_r(c.R_yx * b);
        d.xi_m.push_back((b.adjoint() * c.R_perp * b)(0, 0).real());
        d.xi_ex.push_back(detail::excess_mse(*chol, d.W.col(i), w_opt));
    }
    detail::refresh_tap_stats(d);
}

/// Unconstrained FBF optimum for stream i (dense least squares on the FBF problem).
inline CVector dense_fbf_column(DesignContext& ctx, int delta, int i, int N_b, double* xi_dfe = nullptr) {
    const auto& c = ctx.corr();
    auto f = ctx.factor(FactorKind::CholeskyLL, FactorSource::Rperp);
    SparseDesignProblem p = build_fbf_problem(c, f, delta, i, N_b, 0.0);
    const auto [phi, dd] = p.effective();
    std::vector<Index> all(std::size_t(phi.cols()));
    std::iota(all.begin(), all.end(), Index(0));
    const CVector z = restricted_ls(phi, dd, all);
    if (xi_dfe) *xi_dfe = (phi * z - dd).squaredNorm();
    return p.offset.expand(z);
}

/// Dense MMSE-DFE: unconstrained FBF, W = W_opt.
inline EqualizerDesign design_mmse_dfe(DesignContext& ctx, int N_b, std::optional<int> delta = std::nullopt) {
    const auto& c = ctx.corr();
    EqualizerDesign d;
    d.kind = EqualizerKind::DFE;
    d.n_i = c.n_i;
    d.n_o = c.n_o;
    d.N_f = c.N_f;
    d.v = c.v;
    d.N_b = N_b;
    d.delta = detail::resolve_dfe_delay(ctx, N_b, delta);
    d.B = CMatrix::Zero(c.R_perp.rows(), c.n_i);
    for (int i = 0; i < c.n_i; ++i) d.B.col(i) = dense_fbf_column(ctx, d.delta, i, N_b);
    d.W = detail::ryy_solve(*ctx.ryy_chol(), c.R_yx * d.B);
    d.flags["design"] = "mmse_dfe";
    finalize_dfe_metrics(ctx, d);
    return d;
}

/// Sparse DFE: stage 1 designs each FBF column by OMP (identity tap fixed),
/// stage 2 computes W_opt = R_yy^{-1} R_yx B_s or a joint sparse FFF.
/// An empty `fbf_dict` selects the unconstrained FBF; an empty `fff_dict`
/// selects the dense W_opt.
inline EqualizerDesign design_sparse_dfe(DesignContext& ctx, int N_b, std::optional<DictKind> fbf_dict, std::optional<DictKind> fff_dict,
                                         const Budget& fbf_budget, const Budget& fff_budget,
                                         std::optional<int> delta = std::nullopt) {
    const auto& c = ctx.corr();
    if (fbf_dict && (dict_source(*fbf_dict) != FactorSource::Rperp || *fbf_dict == DictKind::Rperp))
        throw std::invalid_argument("design_sparse_dfe: " + to_string(*fbf_dict) + " is not an FBF dictionary");
    if (fff_dict && (dict_source(*fff_dict) != FactorSource::Ryy))
        throw std::invalid_argument("design_sparse_dfe: " + to_string(*fff_dict) + " is not an FFF dictionary");
    const bool siso = c.n_i == 1 && c.n_o == 1;
    if ((fbf_dict == DictKind::Gamma_H || (fff_dict && *fff_dict == DictKind::Q_H)) && !siso)
        throw std::invalid_argument("design_sparse_dfe: Gamma_H and Q_H require a SISO channel");

    EqualizerDesign d;
    d.kind = EqualizerKind::DFE;
    d.n_i = c.n_i;
    d.n_o = c.n_o;
    d.N_f = c.N_f;
    d.v = c.v;
    d.N_b = N_b;
    d.delta = detail::resolve_dfe_delay(ctx, N_b, delta);
    d.B = CMatrix::Zero(c.R_perp.rows(), c.n_i);
    nlohmann::json stops = nlohmann::json::array();

    // Stage 1: feedback filter, one column per stream.
    for (int i = 0; i < c.n_i; ++i) {
        try {
            if (!fbf_dict) {
                d.B.col(i) = dense_fbf_column(ctx, d.delta, i, N_b);
                continue;
            }
            SparseDesignProblem p = is_circulant(*fbf_dict)
                                        ? build_fbf_problem(c, ctx.circulant(FactorSource::Rperp), d.delta, i, N_b, 0.0)
                                        : build_fbf_problem(c, ctx.factor(dict_factor_kind(*fbf_dict), FactorSource::Rperp), d.delta, i, N_b, 0.0);
            if (fbf_budget.mode == BudgetMode::EtaMax) {
                double xi_dfe = 0.0;
                dense_fbf_column(ctx, d.delta, i, N_b, &xi_dfe);
                p.epsilon = xi_dfe * db_to_linear(fbf_budget.value);
            }
            SparseSolution sol;
            {
                ScopedTimer t(ctx.times().omp);
                sol = detail::solve_with_budget(p, fbf_budget.max_taps(p.unknowns()));
            }
            d.B.col(i) = p.offset.expand(sol.dense(p.unknowns()));
            stops.push_back(to_string(sol.stop_reason));
        } catch (const NumericDegeneracy& e) {
            throw NumericDegeneracy(detail::stage_error("FBF stage", i, e), e.index());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(detail::stage_error("FBF stage", i, e));
        }
    }

    // Stage 2: feedforward filter.
    auto chol = ctx.ryy_chol();
    const CMatrix beta = c.R_yx * d.B;
    if (!fff_dict) {
        d.W = detail::ryy_solve(*chol, beta);
    } else {
        try {
            double xi_m_total = 0.0;
            for (int i = 0; i < c.n_i; ++i) xi_m_total += (d.B.col(i).adjoint() * c.R_perp * d.B.col(i))(0, 0).real();
            SparseDesignProblem p = is_circulant(*fff_dict)
                                        ? build_fff_problem(c, ctx.circulant(FactorSource::Ryy), d.B, 0.0)
                                        : build_fff_problem(c, ctx.factor(dict_factor_kind(*fff_dict), FactorSource::Ryy), d.B, 0.0,
                                                            is_raw_ryy(*fff_dict));
            if (fff_budget.mode == BudgetMode::EtaMax) p.epsilon = epsilon_from_eta(fff_budget.value, xi_m_total);
            SparseSolution sol;
            {
                ScopedTimer t(ctx.times().omp);
                sol = detail::solve_with_budget(p, fff_budget.max_taps(p.unknowns()));
            }
            const CVector z = sol.dense(p.unknowns());
            d.W = Eigen::Map<const CMatrix>(z.data(), c.R_yy.rows(), c.n_i);
            stops.push_back(to_string(sol.stop_reason));
        } catch (const NumericDegeneracy& e) {
            throw NumericDegeneracy(std::string("FFF stage: ") + e.what(), e.index());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string("FFF stage: ") + e.what());
        }
    }

    d.flags["design"] = "sparse_dfe";
    d.flags["fbf_dict"] = fbf_dict ? to_string(*fbf_dict) : std::string("dense");
    d.flags["fff_dict"] = fff_dict ? to_string(*fff_dict) : std::string("dense");
    d.flags["fbf_budget"] = fbf_dict ? to_string(fbf_budget) : std::string("none");
    d.flags["fff_budget"] = fff_dict ? to_string(fff_budget) : std::string("none");
    d.flags["stop_reasons"] = stops;
    finalize_dfe_metrics(ctx, d);
    return d;
}

namespace detail {

// Indices of the nu largest-magnitude entries; ties go to the smaller index.
inline std::vector<Index> largest_entries(const CVector& w, Index nu) {
    std::vector<Index> idx(std::size_t(w.size()));
    std::iota(idx.begin(), idx.end(), Index(0));
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return std::abs(w(a)) > std::abs(w(b)); });
    idx.resize(std::size_t(nu));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace detail

/// Significant-taps baseline: keep the nu largest-magnitude taps of the dense
/// MMSE filter (LE taps, or FBF taps for a DFE with W = W_opt), optionally
/// re-fitting them by restricted least squares.
inline EqualizerDesign significant_taps_baseline(DesignContext& ctx, Index nu, EqualizerKind kind, bool refit = true,
                                                 std::optional<int> delta = std::nullopt, int N_b = 0) {
    const auto& c = ctx.corr();
    auto chol = ctx.ryy_chol();
    if (kind == EqualizerKind::LE) {
        EqualizerDesign d = design_mmse_le(ctx, delta);
        const Index span = c.R_yy.rows();
        if (nu < 1 || nu > span) throw std::invalid_argument("significant_taps_baseline: nu out of range");
        for (int i = 0; i < c.n_i; ++i) {
            const CVector w_opt = d.W.col(i);
            const auto keep = detail::largest_entries(w_opt, nu);
            CVector w = CVector::Zero(span);
            if (refit) {
                SparseDesignProblem p = build_le_problem(c, chol, d.delta, i, 0.0);
                const auto [phi, dd] = p.effective();
                const CVector z = restricted_ls(phi, dd, keep);
                for (std::size_t k = 0; k < keep.size(); ++k) w(keep[k]) = z(Index(k));
            } else {
                for (Index k : keep) w(k) = w_opt(k);
            }
            d.W.col(i) = w;
            d.xi_ex[std::size_t(i)] = detail::excess_mse(*chol, w, w_opt);
        }
        d.flags["design"] = "significant_taps_le";
        d.flags["nu"] = nu;
        d.flags["refit"] = refit;
        detail::refresh_tap_stats(d);
        return d;
    }

    if (N_b < 1) throw std::invalid_argument("significant_taps_baseline: FBF baseline needs N_b >= 1");
    EqualizerDesign d = design_mmse_dfe(ctx, N_b, delta);
    auto f = ctx.factor(FactorKind::CholeskyLL, FactorSource::Rperp);
    for (int i = 0; i < c.n_i; ++i) {
        SparseDesignProblem p = build_fbf_problem(c, f, d.delta, i, N_b, 0.0);
        if (nu < 1 || nu > p.unknowns()) throw std::invalid_argument("significant_taps_baseline: nu out of range");
        const CVector b_opt = p.offset.extract(d.B.col(i));
        const auto keep = detail::largest_entries(b_opt, nu);
        CVector z = CVector::Zero(p.unknowns());
        if (refit) {
            const auto [phi, dd] = p.effective();
            const CVector zs = restricted_ls(phi, dd, keep);
            for (std::size_t k = 0; k < keep.size(); ++k) z(keep[k]) = zs(Index(k));
        } else {
            for (Index k : keep) z(k) = b_opt(k);
        }
        d.B.col(i) = p.offset.expand(z);
    }
    d.W = detail::ryy_solve(*chol, c.R_yx * d.B);
    d.flags["design"] = "significant_taps_fbf";
    d.flags["nu"] = nu;
    d.flags["refit"] = refit;
    finalize_dfe_metrics(ctx, d);
    return d;
}

struct StreamMetrics {
    double xi_m = 0.0;
    double xi_ex = 0.0;
    double eta_db = 0.0;
    double output_snr_db = 0.0;
};

/// MSE diagnostics against the given (exact) statistics. LE: floor
/// 1 - r^H R_yy^{-1} r plus the excess quadratic form. DFE: floor
/// b^H R_perp b per feedback column plus the excess of W over W_opt.
inline std::vector<StreamMetrics> evaluate_mse(const EqualizerDesign& d, const CorrelationSet& corr) {
    if (d.n_i != corr.n_i || d.W.rows() != corr.R_yy.rows() || d.W.cols() != corr.n_i)
        throw std::invalid_argument("evaluate_mse: design and statistics are inconsistent");
    if (d.kind == EqualizerKind::DFE && (d.B.rows() != corr.R_perp.rows() || d.B.cols() != corr.n_i))
        throw std::invalid_argument("evaluate_mse: FBF shape mismatch");
    const FactorPair chol = factor_exact(corr.R_yy, FactorKind::CholeskyLL);
    std::vector<StreamMetrics> out;
    for (int i = 0; i < corr.n_i; ++i) {
        StreamMetrics m;
        CVector w_opt;
        if (d.kind == EqualizerKind::LE) {
            const CVector r = cross_column(corr, d.delta, i);
            w_opt = chol.solve_r(r);
            m.xi_m = detail::le_xi_m(chol, r);
        } else {
            const CVector b = d.B.col(i);
            w_opt = chol.solve_r(corr.R_yx * b);
            m.xi_m = (b.adjoint() * corr.R_perp * b)(0, 0).real();
        }
        m.xi_ex = detail::excess_mse(chol, d.W.col(i), w_opt);
        m.eta_db = 10.0 * std::log10((m.xi_m + m.xi_ex) / m.xi_m);
        m.output_snr_db = -10.0 * std::log10(m.xi_m + m.xi_ex);
        out.push_back(m);
    }
    return out;
}

// JSON: {kind, n_i, n_o, N_f, v, delta, N_b, streams: [{support, weights,
// fbf_support, fbf_weights, xi_m, xi_ex}], flags}. Supports index each
// stream's own filter column; weights are [re, im] pairs.

inline nlohmann::json design_to_json(const EqualizerDesign& d) {
    nlohmann::json streams = nlohmann::json::array();
    for (int i = 0; i < d.n_i; ++i) {
        nlohmann::json s;
        std::vector<Index> sup;
        nlohmann::json wts = nlohmann::json::array();
        for (Index k = 0; k < d.W.rows(); ++k)
            if (d.W(k, i) != cplx(0.0, 0.0)) {
                sup.push_back(k);
                wts.push_back({d.W(k, i).real(), d.W(k, i).imag()});
            }
        s["support"] = sup;
        s["weights"] = wts;
        if (d.kind == EqualizerKind::DFE) {
            std::vector<Index> bsup;
            nlohmann::json bw = nlohmann::json::array();
            for (Index k : detail::fbf_columns(d.n_i, d.delta, d.N_b))
                if (d.B(k, i) != cplx(0.0, 0.0)) {
                    bsup.push_back(k);
                    bw.push_back({d.B(k, i).real(), d.B(k, i).imag()});
                }
            s["fbf_support"] = bsup;
            s["fbf_weights"] = bw;
        }
        s["xi_m"] = i < int(d.xi_m.size()) ? d.xi_m[std::size_t(i)] : 0.0;
        s["xi_ex"] = i < int(d.xi_ex.size()) ? d.xi_ex[std::size_t(i)] : 0.0;
        streams.push_back(std::move(s));
    }
    return {{"kind", d.kind == EqualizerKind::LE ? "LE" : "DFE"},
            {"n_i", d.n_i},
            {"n_o", d.n_o},
            {"N_f", d.N_f},
            {"v", d.v},
            {"delta", d.delta},
            {"N_b", d.N_b},
            {"streams", std::move(streams)},
            {"flags", d.flags}};
}

inline EqualizerDesign design_from_json(const nlohmann::json& j) {
    EqualizerDesign d;
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "LE" && kind != "DFE") throw std::invalid_argument("design json: unknown kind " + kind);
    d.kind = kind == "LE" ? EqualizerKind::LE : EqualizerKind::DFE;
    d.n_i = j.at("n_i").get<int>();
    d.n_o = j.at("n_o").get<int>();
    d.N_f = j.at("N_f").get<int>();
    d.v = j.at("v").get<int>();
    d.delta = j.at("delta").get<int>();
    d.N_b = j.at("N_b").get<int>();
    d.flags = j.value("flags", nlohmann::json::object());
    d.W = CMatrix::Zero(Index(d.n_o) * d.N_f, d.n_i);
    if (d.kind == EqualizerKind::DFE) {
        d.B = CMatrix::Zero(Index(d.n_i) * (d.N_f + d.v), d.n_i);
        d.B.block(Index(d.n_i) * d.delta, 0, d.n_i, d.n_i).setIdentity();
    }
    const auto& streams = j.at("streams");
    if (streams.size() != std::size_t(d.n_i)) throw std::invalid_argument("design json: stream count mismatch");
    for (int i = 0; i < d.n_i; ++i) {
        const auto& s = streams[std::size_t(i)];
        const auto sup = s.at("support").get<std::vector<Index>>();
        const CVector w = vector_from_json(s.at("weights"));
        if (Index(sup.size()) != w.size()) throw std::invalid_argument("design json: support/weights mismatch");
        for (std::size_t k = 0; k < sup.size(); ++k) d.W(sup[k], i) = w(Index(k));
        if (d.kind == EqualizerKind::DFE) {
            const auto bsup = s.at("fbf_support").get<std::vector<Index>>();
            const CVector bw = vector_from_json(s.at("fbf_weights"));
            for (std::size_t k = 0; k < bsup.size(); ++k) d.B(bsup[k], i) = bw(Index(k));
        }
        d.xi_m.push_back(s.at("xi_m").get<double>());
        d.xi_ex.push_back(s.at("xi_ex").get<double>());
    }
    detail::refresh_tap_stats(d);
    return d;
}

}  // namespace sparse_eq
