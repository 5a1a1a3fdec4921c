// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>

using namespace sparse_eq;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double time_limit_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::size_t column(const Table& t, const std::string& name) {
    const auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) throw std::logic_error("missing column " + name);
    return std::size_t(it - t.columns.begin());
}

const std::vector<DictKind> kLeExact{DictKind::Ly_H, DictKind::Dy_Uy_H, DictKind::Lambda_Py_H, DictKind::Ryy_Ly, DictKind::Ryy_DyUy};
const std::vector<DictKind> kFbfExact{DictKind::Lperp_H, DictKind::Omega_perp_H, DictKind::Dperp_Uperp_H};

std::shared_ptr<const FactorPair> factor_for(DesignContext& ctx, DictKind k) { return ctx.factor(dict_factor_kind(k), dict_source(k)); }

// ------------------------------------------------------------------ 1
Outcome factorization_identities() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(8, 160);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        const CMatrix R = oracle::random_hpd(dim(rng), rng);
        for (auto kind : {FactorKind::CholeskyLL, FactorKind::UnitLDL, FactorKind::Eigen}) {
            const auto f = factor_exact(R, kind);
            worst = std::max(worst, oracle::rel(CMatrix(f.A * f.A.adjoint()), R));
        }
    }
    return {worst <= 1e-10, fmt("worst ||AA^H-R||/||R|| = %.2e", worst)};
}

// ------------------------------------------------------------------ 2
Outcome closed_form_eigenpairs() {
    double worst_val = 0.0, worst_vec = 0.0;
    bool mode_ok = true;
    for (int v = 1; v <= 64; ++v) {
        const int n = v + 1;
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
        for (int j = 0; j + 1 < n; ++j) T(j, j + 1) = T(j + 1, j) = 1.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        // ascending eigenvalues correspond to s = n, n-1, ..., 1
        for (int k = 0; k < n; ++k) {
            const int s = n - k;
            const double lam = 2.0 * std::cos(std::numbers::pi * s / (v + 2));
            worst_val = std::max(worst_val, std::abs(es.eigenvalues()(k) - lam));
            Eigen::VectorXd u(n);
            for (int j = 1; j <= n; ++j) u(j - 1) = std::sqrt(2.0 / (v + 2)) * std::sin(j * std::numbers::pi * s / (v + 2));
            const Eigen::VectorXd num = es.eigenvectors().col(k);
            worst_vec = std::max(worst_vec, std::min((num - u).norm(), (num + u).norm()));
        }
        const auto ch = worst_case_cir(v);
        CVector h(n);
        for (int l = 0; l < n; ++l) h(l) = ch.taps[std::size_t(l)](0, 0);
        const double lam = 2.0 * std::cos(std::numbers::pi * worst_case_mode(v) / (v + 2));
        mode_ok = mode_ok && (T.cast<cplx>() * h - lam * h).norm() < 1e-9 && std::abs(lam) >= es.eigenvalues().cwiseAbs().maxCoeff() - 1e-12;
    }
    return {worst_val <= 1e-9 && worst_vec <= 1e-9 && mode_ok,
            fmt("max |lambda err| = %.2e, max vector err = %.2e, worst-case CIR is top mode: %s", worst_val, worst_vec, mode_ok ? "yes" : "no")};
}

// ------------------------------------------------------------------ 3
Outcome full_budget_exactness() {
    double worst = 0.0;
    int cases = 0;
    for (int n : {1, 2})
        for (int v : {2, 5, 8})
            for (std::uint64_t s = 1; s <= 4; ++s) {
                DesignContext ctx(generate_updp_channel(n, n, v, 300 + s), 4 * v + 4, 5.0 + 5.0 * double(s));
                const auto mmse = design_mmse_le(ctx);
                for (auto k : kLeExact) {
                    const auto d = design_sparse_le(ctx, k, Budget::eta(0.0));
                    worst = std::max(worst, relative_error(CMatrix(d.W), CMatrix(mmse.W)));
                    ++cases;
                }
            }
    ExperimentConfig cfg;
    cfg.experiment = "ser-sweep";
    cfg.seed = 77;
    cfg.channel = {2, 2, 5, "updp"};
    cfg.N_f = 24;
    cfg.snr_db = {10.0, 16.0, 22.0};
    cfg.designs = {parse_design_spec("mmse_le"), parse_design_spec("sparse_le:Ly_H"), parse_design_spec("sparse_le:Dy_Uy_H")};
    cfg.budget_values = {0.0};
    cfg.realizations = 40;
    cfg.symbols_per_burst = 1000;
    const auto res = run_ser_experiment(cfg);
    const auto ce = column(res.table, "errors");
    bool same = true;
    long long total_errors = 0;
    for (std::size_t r = 0; r < res.table.rows.size(); r += 3) {
        total_errors += res.table.rows[r][ce].get<long long>();
        same = same && res.table.rows[r][ce] == res.table.rows[r + 1][ce] && res.table.rows[r][ce] == res.table.rows[r + 2][ce];
    }
    return {worst <= 1e-8 && same, fmt("%d designs, worst tap rel. error %.2e; SER identical on shared seeds: %s (%lld errors per curve total)",
                                       cases, worst, same ? "yes" : "no", total_errors)};
}

// ------------------------------------------------------------------ 4
// Measured loss uses MSEs recomputed from the channel matrix directly.
Outcome construction_guarantee() {
    std::mt19937_64 rng(404);
    const double etas[] = {0.1, 0.25, 0.5, 1.0};
    double worst_margin = -1e300;
    int le_cases = 0, dfe_cases = 0, sparse = 0;
    for (int c = 0; c < 200; ++c) {
        const int n = int(rng() % 2) + 1;
        const int v = int(rng() % 7) + 2;
        const int N_f = 2 * v + int(rng() % 12) + 4;
        const double snr = double(rng() % 31);
        const double eta = etas[c % 4];
        const auto ch = generate_updp_channel(n, n, v, 4000 + std::uint64_t(c));
        DesignContext ctx(ch, N_f, snr);
        const CMatrix H = oracle::channel_matrix(ch, N_f);
        const CMatrix R = oracle::ryy(H, snr);
        if (c % 5 != 4) {
            const auto k = kLeExact[std::size_t(c) % kLeExact.size()];
            const auto d = design_sparse_le(ctx, k, Budget::eta(eta));
            const auto dense = design_mmse_le(ctx, d.delta);
            for (int i = 0; i < n; ++i) {
                const double xi = oracle::le_mse(d.W.col(i), H, snr, d.delta, i, n);
                const double xi_m = oracle::le_mse(dense.W.col(i), H, snr, d.delta, i, n);
                worst_margin = std::max(worst_margin, linear_to_db(xi / xi_m) - eta);
            }
            sparse += d.mean_active_tap_pct() < 100.0;
            ++le_cases;
        } else {
            const auto fbf = kFbfExact[std::size_t(c / 5) % kFbfExact.size()];
            const auto fff = kLeExact[std::size_t(c / 5) % kLeExact.size()];
            const auto d = design_sparse_dfe(ctx, v, fbf, fff, Budget::eta(eta), Budget::eta(eta));
            // Floor: the MMSE FFF for the chosen FBF; loss is aggregate over streams.
            const CMatrix W_opt = R.ldlt().solve(H * d.B);
            double xi = 0.0, xi_m = 0.0;
            for (int i = 0; i < n; ++i) {
                const CVector b = d.B.col(i);
                const CVector w = d.W.col(i), wo = W_opt.col(i);
                xi += b.squaredNorm() - 2.0 * w.dot(H * b).real() + w.dot(R * w).real();
                xi_m += b.squaredNorm() - 2.0 * wo.dot(H * b).real() + wo.dot(R * wo).real();
            }
            worst_margin = std::max(worst_margin, linear_to_db(xi / xi_m) - eta);
            sparse += d.mean_active_tap_pct() < 100.0;
            ++dfe_cases;
        }
    }
    return {worst_margin <= 1e-9, fmt("%d LE + %d DFE cases (%d sparse), worst eta - eta_max = %.3e dB", le_cases, dfe_cases, sparse, worst_margin)};
}

// ------------------------------------------------------------------ 5
Outcome active_taps_scaled() {
    ExperimentConfig cfg;
    cfg.experiment = "taps-vs-loss";
    cfg.seed = 5;
    cfg.channel = {2, 2, 8, "updp"};
    cfg.N_f = 80;
    cfg.snr_db = {10.0, 30.0};
    cfg.dictionaries = {"Ly_H"};
    cfg.budget_values = {0.25};
    cfg.realizations = 500;
    const auto res = run_taps_vs_loss_experiment(cfg);
    const auto m = column(res.table, "active_tap_pct_mean"), sd = column(res.table, "active_tap_pct_std");
    const double a10 = res.table.rows[0][m], a30 = res.table.rows[1][m];
    const double s10 = res.table.rows[0][sd], s30 = res.table.rows[1][sd];
    const bool ok = a10 >= 23.0 && a10 <= 43.0 && a30 >= 50.0 && a30 <= 70.0;
    return {ok, fmt("active taps %.1f%% (sd %.1f) at 10 dB [23,43], %.1f%% (sd %.1f) at 30 dB [50,70]", a10, s10, a30, s30)};
}

// ------------------------------------------------------------------ 6
Outcome circulant_gap_trend() {
    ExperimentConfig cfg;
    cfg.experiment = "circulant-gap";
    cfg.seed = 6;
    cfg.channel = {1, 1, 8, "updp"};
    cfg.snr_db = {30.0};
    cfg.N_f_grid = {16, 32, 64, 128};
    cfg.realizations = 100;
    const auto res = run_circulant_gap_experiment(cfg);
    const auto g = column(res.table, "gap_db_mean");
    std::vector<double> gaps;
    for (const auto& row : res.table.rows) gaps.push_back(row[g]);
    bool monotone = true;
    for (std::size_t k = 1; k < gaps.size(); ++k) monotone = monotone && gaps[k] <= gaps[k - 1];
    return {monotone && gaps[1] < 0.25, fmt("gap dB at N_f=16/32/64/128: %.3f / %.3f / %.3f / %.3f; non-increasing: %s; <0.25 at 32: %s", gaps[0],
                                            gaps[1], gaps[2], gaps[3], monotone ? "yes" : "no", gaps[1] < 0.25 ? "yes" : "no")};
}

// ------------------------------------------------------------------ 7
Outcome ser_ordering() {
    ExperimentConfig cfg;
    cfg.experiment = "ser-sweep";
    cfg.seed = 7;
    cfg.channel = {2, 2, 5, "updp"};
    cfg.N_f = 40;
    cfg.snr_db = {15.0, 20.0, 25.0};
    cfg.designs = {parse_design_spec("sparse_le:Ly_H"), parse_design_spec("sparse_le:Dy_Uy_H"), parse_design_spec("sparse_le:Ryy_Ly"),
                   parse_design_spec("sigtaps_le")};
    cfg.budget_mode = BudgetMode::SparsityPct;
    cfg.budget_values = {25.0, 35.0};
    cfg.realizations = 1000;
    cfg.symbols_per_burst = 1000;
    const auto res = run_ser_experiment(cfg);
    const auto cs = column(res.table, "snr_db"), cd = column(res.table, "design"), cb = column(res.table, "budget"),
               ce = column(res.table, "errors");
    std::map<std::tuple<double, std::string, std::string>, long long> err;
    for (const auto& row : res.table.rows) err[{row[cs].get<double>(), row[cb].get<std::string>(), row[cd].get<std::string>()}] = row[ce];
    bool ok = true;
    std::string detail;
    for (double snr : cfg.snr_db)
        for (const std::string b : {"sparsity_pct=25.0", "sparsity_pct=35.0"}) {
            const long long ly = err.at({snr, b, "sparse_le:Ly_H"}), dy = err.at({snr, b, "sparse_le:Dy_Uy_H"}),
                            ry = err.at({snr, b, "sparse_le:Ryy_Ly"}), st = err.at({snr, b, "sigtaps_le"});
            const bool here = ly <= st && dy <= st && ry >= std::min(ly, dy) && ry <= st;
            ok = ok && here;
            detail += fmt("%s%g dB %s: Ly %lld, Dy %lld, Ryy %lld, sigtaps %lld", detail.empty() ? "" : "; ", snr, b.c_str() + 13, ly, dy, ry, st);
        }
    return {ok, "errors " + detail};
}

// ------------------------------------------------------------------ 8
Outcome small_instance_oracle() {
    int within = 0, exact = 0;
    const int seeds = 200;
    for (int s = 1; s <= seeds; ++s) {
        const auto ch = generate_updp_channel(1, 1, 2, 8000 + std::uint64_t(s));
        const double snr = 5.0 + double(s % 6) * 5.0;
        DesignContext ctx(ch, 6, snr);
        const auto d = design_sparse_le(ctx, DictKind::Ly_H, Budget::eta(0.5));
        const int omp_size = int((d.W.col(0).array() != cplx(0.0, 0.0)).count());
        const CMatrix H = oracle::channel_matrix(ch, 6);
        const CMatrix R = oracle::ryy(H, snr);
        const CVector r = H.col(d.delta);
        const double xi_m = 1.0 - r.dot(R.ldlt().solve(r)).real();
        const int best = oracle::min_support_size(R, r, xi_m * std::pow(10.0, 0.05) * (1.0 + 1e-12));
        within += omp_size <= best + 2;
        exact += omp_size == best;
    }
    return {within >= seeds * 9 / 10, fmt("OMP within oracle+2 in %d/%d cases (%d exactly minimal)", within, seeds, exact)};
}

// ------------------------------------------------------------------ 9
Outcome coherence_properties() {
    ExperimentConfig cfg;
    cfg.experiment = "coherence-sweep";
    cfg.seed = 9;
    cfg.channel = {1, 1, 8, "updp"};
    cfg.N_f = 80;
    cfg.snr_db = {-10.0, 0.0, 10.0, 20.0, 30.0};
    cfg.dictionaries = {"Ly_H", "Dy_Uy_H", "Ryy_Ly", "Lperp_H", "Omega_perp_H", "Dperp_Uperp_H", "Rperp", "Q_H", "Gamma_H"};
    cfg.realizations = 10;
    const auto res = run_coherence_sweep(cfg);
    const auto cs = column(res.table, "snr_db"), ck = column(res.table, "dict_kind"), cm = column(res.table, "coherence_mean");
    bool in_range = true, perp_low = true;
    double worst_perp = 0.0;
    const std::set<std::string> perp{"Lperp_H", "Omega_perp_H", "Dperp_Uperp_H", "Rperp", "Gamma_H"};
    for (const auto& row : res.table.rows) {
        const double mu = row[cm];
        in_range = in_range && mu >= 0.0 && mu <= 1.0;
        if (row[cs].get<double>() == -10.0 && perp.count(row[ck].get<std::string>())) {
            worst_perp = std::max(worst_perp, mu);
            perp_low = perp_low && mu < 0.1;
        }
    }
    double worst_ryy = 0.0;
    int worst_v = 0;
    for (int v = 1; v <= 32; ++v) {
        DesignContext ctx(worst_case_cir(v), std::max(4 * v, 8), 30.0);
        const double mu = coherence(ctx.corr().R_yy);
        in_range = in_range && mu >= 0.0 && mu <= 1.0;
        if (mu > worst_ryy) worst_ryy = mu, worst_v = v;
    }
    const bool ryy_ok = worst_ryy < 0.95;
    return {in_range && perp_low && ryy_ok,
            fmt("mu in [0,1]: %s; max mu of R_perp dictionaries at -10 dB = %.4f (<0.1: %s); worst-case CIR max mu(R_yy) = %.4f at v=%d (<0.95: %s)",
                in_range ? "yes" : "no", worst_perp, perp_low ? "yes" : "no", worst_ryy, worst_v, ryy_ok ? "yes" : "no")};
}

// ------------------------------------------------------------------ 10
Outcome quadratic_form_equivalence() {
    std::mt19937_64 rng(1010);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        const int n = int(rng() % 2) + 1;
        const int v = int(rng() % 6) + 2;
        const int N_f = 2 * v + int(rng() % 10) + 2;
        const double snr = double(rng() % 31);
        const auto ch = generate_updp_channel(n, n, v, 10000 + std::uint64_t(c));
        DesignContext ctx(ch, N_f, snr);
        const auto& corr = ctx.corr();
        const CMatrix H = oracle::channel_matrix(ch, N_f);
        const CMatrix R = oracle::ryy(H, snr);
        switch (c % 3) {
            case 0: {  // LE
                const int delta = default_delay(EqualizerKind::LE, N_f, v);
                const int i = int(rng() % std::uint64_t(n));
                const CVector w_opt = R.ldlt().solve(CVector(H.col(Index(n) * delta + i)));
                const CVector w = oracle::random_vector(R.rows(), rng);
                const double want = oracle::excess(w, w_opt, R);
                for (auto k : kLeExact) {
                    const auto p = build_le_problem(corr, factor_for(ctx, k), delta, i, 0.0, is_raw_ryy(k));
                    worst = std::max(worst, std::abs(p.residual_sq(w) / want - 1.0));
                }
                break;
            }
            case 1: {  // FBF
                const int N_b = v;
                const int delta = dfe_delay(N_f, v, N_b);
                const CMatrix Rp = oracle::rperp(H, snr);
                const CVector z = oracle::random_vector(Index(n) * N_b + n - 1, rng);
                const int i = int(rng() % std::uint64_t(n));
                std::vector<double> vals;
                for (auto k : kFbfExact) {
                    const auto p = build_fbf_problem(corr, factor_for(ctx, k), delta, i, N_b, 0.0);
                    const CVector zz = z.head(p.unknowns());
                    const CVector b = p.offset.expand(zz);
                    vals.push_back(p.residual_sq(zz));
                    worst = std::max(worst, std::abs(vals.back() / b.dot(Rp * b).real() - 1.0));
                }
                for (double x : vals) worst = std::max(worst, std::abs(x / vals[0] - 1.0));
                break;
            }
            default: {  // FFF
                const auto mmse = design_mmse_dfe(ctx, v);
                const CMatrix W_opt = R.ldlt().solve(H * mmse.B);
                CMatrix W(R.rows(), n);
                for (int s = 0; s < n; ++s) W.col(s) = oracle::random_vector(R.rows(), rng);
                double want = 0.0;
                for (int s = 0; s < n; ++s) want += oracle::excess(W.col(s), W_opt.col(s), R);
                const CVector vec_w = Eigen::Map<const CVector>(W.data(), W.size());
                for (auto k : kLeExact) {
                    const auto p = build_fff_problem(corr, factor_for(ctx, k), mmse.B, 0.0, is_raw_ryy(k));
                    worst = std::max(worst, std::abs(p.residual_sq(vec_w) / want - 1.0));
                }
            }
        }
    }
    return {worst <= 1e-8, fmt("worst relative disagreement of excess MSE across dictionaries: %.2e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "factorization identities", 30, factorization_identities},
        {2, "closed-form eigenpairs", 5, closed_form_eigenpairs},
        {3, "full-budget exactness", 60, full_budget_exactness},
        {4, "construction guarantee", 120, construction_guarantee},
        {5, "active taps, 2x2 v=8 N_f=80, 0.25 dB", 900, active_taps_scaled},
        {6, "circulant gap trend", 600, circulant_gap_trend},
        {7, "SER ordering at matched sparsity", 1800, ser_ordering},
        {8, "small-instance oracle", 300, small_instance_oracle},
        {9, "coherence properties", 120, coherence_properties},
        {10, "quadratic-form equivalence", 60, quadratic_form_equivalence},
    };
    std::set<int> selected;
    for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));

    int failures = 0;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.time_limit_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("%s criterion %d: %s -- %s [%.1f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs,
                    c.time_limit_s, in_time ? "" : ", exceeded");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
