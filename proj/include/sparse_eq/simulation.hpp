#pragma once

#include "sparse_eq/equalizer.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace sparse_eq {

// ---------------------------------------------------------------- RNG

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Independent stream seed for (master, a, b).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(master) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

// ---------------------------------------------------------------- 16-QAM

/// Gray-mapped 16-QAM with unit average energy: levels {-3,-1,1,3}/sqrt(10).
/// Symbol index bits b3 b2 select the in-phase level, b1 b0 the quadrature level.
class Qam16 {
public:
    static constexpr int size = 16;

    static cplx symbol(int idx) { return table()[std::size_t(idx)]; }

    static int slice(cplx z) {
        const double s = std::sqrt(10.0);
        return (level_bits(z.real() * s) << 2) | level_bits(z.imag() * s);
    }

private:
    static int level_bits(double x) {
        // Gray order along the axis: -3 -> 00, -1 -> 01, +1 -> 11, +3 -> 10
        if (x < -2.0) return 0b00;
        if (x < 0.0) return 0b01;
        if (x < 2.0) return 0b11;
        return 0b10;
    }

    static double bits_level(int b) {
        switch (b) {
            case 0b00: return -3.0;
            case 0b01: return -1.0;
            case 0b11: return 1.0;
            default: return 3.0;
        }
    }

    static const std::array<cplx, 16>& table() {
        static const std::array<cplx, 16> t = [] {
            std::array<cplx, 16> out{};
            const double s = 1.0 / std::sqrt(10.0);
            for (int k = 0; k < 16; ++k) out[std::size_t(k)] = cplx(bits_level(k >> 2) * s, bits_level(k & 3) * s);
            return out;
        }();
        return t;
    }
};

// ---------------------------------------------------------------- config

struct ChannelSpec {
    int n_i = 1;
    int n_o = 1;
    int v = 8;
    std::string model = "updp";  // updp | worst-case
};

enum class DesignType { MmseLe, SparseLe, SigTapsLe, MmseDfe, SparseDfe, SigTapsFbf };

/// One curve of an SER sweep. Text form: "mmse_le", "sparse_le:<dict>",
/// "sigtaps_le", "mmse_dfe", "sparse_dfe:<fbf>/<fff>" (either side may be
/// "dense"), "sigtaps_fbf".
struct DesignSpec {
    DesignType type = DesignType::MmseLe;
    std::optional<DictKind> dict;      // LE dictionary or FBF dictionary
    std::optional<DictKind> fff_dict;  // DFE only
    std::string label;

    bool uses_budget() const { return type != DesignType::MmseLe && type != DesignType::MmseDfe; }
    bool is_dfe() const { return type == DesignType::MmseDfe || type == DesignType::SparseDfe || type == DesignType::SigTapsFbf; }
};

inline DesignSpec parse_design_spec(const std::string& text) {
    DesignSpec d;
    d.label = text;
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto dict = [&](const std::string& name) -> std::optional<DictKind> {
        if (name == "dense") return std::nullopt;
        auto k = parse_dict_kind(name);
        if (!k) throw std::invalid_argument("unknown dictionary '" + name + "' in design '" + text + "'");
        return k;
    };
    auto no_tail = [&] {
        if (!tail.empty()) throw std::invalid_argument("design '" + text + "' takes no dictionary");
    };
    if (head == "mmse_le") {
        no_tail();
        d.type = DesignType::MmseLe;
    } else if (head == "sigtaps_le") {
        no_tail();
        d.type = DesignType::SigTapsLe;
    } else if (head == "mmse_dfe") {
        no_tail();
        d.type = DesignType::MmseDfe;
    } else if (head == "sigtaps_fbf") {
        no_tail();
        d.type = DesignType::SigTapsFbf;
    } else if (head == "sparse_le") {
        d.type = DesignType::SparseLe;
        d.dict = dict(tail);
        if (!d.dict) throw std::invalid_argument("design '" + text + "' needs a dictionary");
    } else if (head == "sparse_dfe") {
        d.type = DesignType::SparseDfe;
        const auto slash = tail.find('/');
        if (slash == std::string::npos) throw std::invalid_argument("design '" + text + "' must name <fbf>/<fff> dictionaries");
        d.dict = dict(tail.substr(0, slash));
        d.fff_dict = dict(tail.substr(slash + 1));
    } else {
        throw std::invalid_argument("unknown design '" + text + "'");
    }
    auto require = [&](const std::optional<DictKind>& k, FactorSource want, const char* role) {
        if (k && dict_source(*k) != want)
            throw std::invalid_argument("dictionary '" + to_string(*k) + "' cannot serve as " + role + " in design '" + text + "'");
    };
    require(d.dict, d.type == DesignType::SparseDfe ? FactorSource::Rperp : FactorSource::Ryy,
            d.type == DesignType::SparseDfe ? "a feedback dictionary" : "a linear-equalizer dictionary");
    require(d.fff_dict, FactorSource::Ryy, "a feedforward dictionary");
    return d;
}

struct ExperimentConfig {
    std::string experiment;  // coherence-sweep | taps-vs-loss | ser-sweep | circulant-gap | design-dump
    std::uint64_t seed = 0;
    ChannelSpec channel;
    int N_f = 80;
    int N_b = 0;
    std::optional<int> delta;
    std::string equalizer = "LE";  // LE | DFE (taps-vs-loss, circulant-gap)
    std::vector<double> snr_db;
    std::vector<std::string> dictionaries;
    std::vector<DesignSpec> designs;
    BudgetMode budget_mode = BudgetMode::EtaMax;
    std::vector<double> budget_values;
    std::vector<int> N_f_grid;
    bool refit = true;
    int realizations = 500;
    int symbols_per_burst = 2000;
    int threads = 1;
    std::string out_dir = ".";
    std::string prefix;
};

// ---------------------------------------------------------------- tables

/// Result table: header plus rows of JSON scalars. CSV schema is versioned.
struct Table {
    static constexpr int schema_version = 1;
    std::vector<std::string> columns;
    std::vector<nlohmann::json> rows;

    void add(nlohmann::json row) {
        if (row.size() != columns.size()) throw std::logic_error("Table: row width mismatch");
        rows.push_back(std::move(row));
    }

    std::string to_csv() const {
        std::string out;
        for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
        out += "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out += ",";
                out += row[c].is_string() ? row[c].get<std::string>() : row[c].dump();
            }
            out += "\n";
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& row : rows) {
            nlohmann::json o;
            for (std::size_t c = 0; c < columns.size(); ++c) o[columns[c]] = row[c];
            arr.push_back(std::move(o));
        }
        return arr;
    }
};

/// Running mean / standard deviation (population) in insertion order.
struct Stat {
    double sum = 0.0;
    double sum_sq = 0.0;
    long long n = 0;

    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / double(n) : 0.0; }
    double stddev() const {
        if (n < 2) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(sum_sq / double(n) - m * m, 0.0));
    }
};

struct MonteCarloResult {
    Table table;
    StageTimes times;
    double simulation_seconds = 0.0;
    long long realizations = 0;
    long long warmup_symbols = 0;
    nlohmann::json extra = nlohmann::json::object();
};

// ---------------------------------------------------------------- helpers

namespace detail {

/// Runs work(r) for r in [0, count) on up to `threads` workers; results are
/// stored by index so aggregation order never depends on scheduling.
template <typename Result, typename Work>
std::vector<Result> parallel_indexed(int count, int threads, Work&& work) {
    std::vector<Result> out(std::size_t(std::max(count, 0)));
    const int nt = std::max(1, std::min(threads, count));
    if (nt <= 1) {
        for (int r = 0; r < count; ++r) out[std::size_t(r)] = work(r);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
        pool.emplace_back([&] {
            while (true) {
                const int r = next.fetch_add(1);
                if (r >= count) return;
                try {
                    out[std::size_t(r)] = work(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!failure) failure = std::current_exception();
                    next.store(count);
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

inline ChannelRealization make_channel(const ChannelSpec& spec, std::uint64_t master, int realization) {
    if (spec.model == "worst-case") {
        if (spec.n_i != 1 || spec.n_o != 1) throw std::invalid_argument("worst-case channel model is SISO only");
        return worst_case_cir(spec.v);
    }
    if (spec.model != "updp") throw std::invalid_argument("unknown channel model '" + spec.model + "'");
    return generate_updp_channel(spec.n_i, spec.n_o, spec.v, derive_seed(master, std::uint64_t(realization), 0xC4A77E1ULL));
}

inline bool all_finite(const EqualizerDesign& d) {
    return d.W.allFinite() && (d.kind == EqualizerKind::LE || d.B.allFinite());
}

/// Output-stream samples and transmitted symbols for one burst.
struct Burst {
    std::vector<std::vector<int>> symbols;  // [stream][time]
    std::vector<CVector> y;                 // y[k] has n_o entries
    int first = 0;                          // first k with a full window
    int total = 0;
};

inline Burst transmit(const ChannelRealization& ch, int N_f, int length, double snr_db, std::mt19937_64& rng) {
    Burst b;
    b.total = length;
    b.first = N_f + ch.v - 1;
    std::uniform_int_distribution<int> pick(0, Qam16::size - 1);
    b.symbols.assign(std::size_t(ch.n_i), std::vector<int>(std::size_t(length)));
    for (int k = 0; k < length; ++k)
        for (int i = 0; i < ch.n_i; ++i) b.symbols[std::size_t(i)][std::size_t(k)] = pick(rng);
    const double sd = std::sqrt(0.5 / db_to_linear(snr_db));
    std::normal_distribution<double> noise(0.0, sd);
    b.y.assign(std::size_t(length), CVector::Zero(ch.n_o));
    for (int k = 0; k < length; ++k) {
        CVector yk = CVector::Zero(ch.n_o);
        for (int l = 0; l <= ch.v && l <= k; ++l)
            for (int i = 0; i < ch.n_i; ++i) yk += ch.taps[std::size_t(l)].col(i) * Qam16::symbol(b.symbols[std::size_t(i)][std::size_t(k - l)]);
        for (int r = 0; r < ch.n_o; ++r) {
            const double re = noise(rng);
            const double im = noise(rng);
            yk(r) += cplx(re, im);
        }
        b.y[std::size_t(k)] = yk;
    }
    return b;
}

struct Tap {
    int lag;  // a: uses y_{k-a}
    int out;  // r
    cplx conj_w;
};

inline std::vector<Tap> sparse_taps(const CVector& w, int n_o) {
    std::vector<Tap> taps;
    for (Index k = 0; k < w.size(); ++k)
        if (w(k) != cplx(0.0, 0.0)) taps.push_back({int(k / n_o), int(k % n_o), std::conj(w(k))});
    return taps;
}

struct ErrorCount {
    long long errors = 0;
    long long symbols = 0;
};

/// Equalizes one burst. Decisions for symbol k - delta are made at every k
/// with a full window; the first `warmup` decisions are not counted. The DFE
/// feedback history starts from the true symbols and is then overwritten by
/// sliced decisions.
inline ErrorCount equalize_burst(const EqualizerDesign& d, const Burst& b, int warmup) {
    const int n_i = d.n_i;
    std::vector<std::vector<Tap>> ff(static_cast<std::size_t>(n_i));
    for (int i = 0; i < n_i; ++i) ff[std::size_t(i)] = sparse_taps(d.W.col(i), d.n_o);

    struct Fb {
        int t, j;
        cplx conj_b;
    };
    std::vector<std::vector<Fb>> fb(static_cast<std::size_t>(n_i));
    if (d.kind == EqualizerKind::DFE)
        for (int i = 0; i < n_i; ++i)
            for (int t = 1; t <= d.N_b; ++t)
                for (int j = 0; j < n_i; ++j) {
                    const cplx bv = d.B(Index(n_i) * (d.delta + t) + j, i);
                    if (bv != cplx(0.0, 0.0)) fb[std::size_t(i)].push_back({t, j, std::conj(bv)});
                }

    std::vector<std::vector<int>> decided = b.symbols;
    ErrorCount ec;
    for (int k = b.first; k < b.total; ++k) {
        const int m = k - d.delta;
        const bool counted = (k - b.first) >= warmup;
        for (int i = 0; i < n_i; ++i) {
            cplx z = 0.0;
            for (const auto& tap : ff[std::size_t(i)]) z += tap.conj_w * b.y[std::size_t(k - tap.lag)](tap.out);
            for (const auto& f : fb[std::size_t(i)]) z -= f.conj_b * Qam16::symbol(decided[std::size_t(f.j)][std::size_t(m - f.t)]);
            const int s = Qam16::slice(z);
            if (d.kind == EqualizerKind::DFE) decided[std::size_t(i)][std::size_t(m)] = s;
            if (counted) {
                ++ec.symbols;
                if (s != b.symbols[std::size_t(i)][std::size_t(m)]) ++ec.errors;
            }
        }
    }
    return ec;
}

inline Index le_span(const CorrelationSet& c) { return c.R_yy.rows(); }

/// Smallest nu whose significant-taps LE (per stream, re-fitted) meets eta_max.
/// Re-fitted losses are non-increasing along the nested magnitude-ordered
/// supports, so a bisection per stream suffices.
inline EqualizerDesign significant_taps_le_for_eta(DesignContext& ctx, double eta_max_db, std::optional<int> delta, bool refit) {
    const auto& c = ctx.corr();
    const Index span = le_span(c);
    EqualizerDesign best;
    std::vector<Index> nus;
    for (int i = 0; i < c.n_i; ++i) {
        Index lo = 1, hi = span;
        while (lo < hi) {
            const Index mid = (lo + hi) / 2;
            const auto des = significant_taps_baseline(ctx, mid, EqualizerKind::LE, refit, delta);
            const double eta = 10.0 * std::log10((des.xi_m[std::size_t(i)] + des.xi_ex[std::size_t(i)]) / des.xi_m[std::size_t(i)]);
            if (eta <= eta_max_db)
                hi = mid;
            else
                lo = mid + 1;
        }
        nus.push_back(lo);
    }
    for (int i = 0; i < c.n_i; ++i) {
        auto des = significant_taps_baseline(ctx, nus[std::size_t(i)], EqualizerKind::LE, refit, delta);
        if (i == 0) best = des;
        best.W.col(i) = des.W.col(i);
        best.xi_ex[std::size_t(i)] = des.xi_ex[std::size_t(i)];
    }
    best.flags["nu"] = nus;
    refresh_tap_stats(best);
    return best;
}

/// Builds the design of `spec` for one budget at the context's operating point.
inline EqualizerDesign build_design(DesignContext& ctx, const DesignSpec& spec, const Budget& budget, const ExperimentConfig& cfg) {
    const auto& c = ctx.corr();
    switch (spec.type) {
        case DesignType::MmseLe: return design_mmse_le(ctx, cfg.delta);
        case DesignType::SparseLe: return design_sparse_le(ctx, *spec.dict, budget, cfg.delta);
        case DesignType::SigTapsLe:
            if (budget.mode == BudgetMode::SparsityPct)
                return significant_taps_baseline(ctx, std::max<Index>(1, budget.max_taps(le_span(c))), EqualizerKind::LE, cfg.refit, cfg.delta);
            return significant_taps_le_for_eta(ctx, budget.value, cfg.delta, cfg.refit);
        case DesignType::MmseDfe: return design_mmse_dfe(ctx, cfg.N_b, cfg.delta);
        case DesignType::SparseDfe: return design_sparse_dfe(ctx, cfg.N_b, spec.dict, spec.fff_dict, budget, budget, cfg.delta);
        case DesignType::SigTapsFbf: {
            const Index span = Index(c.n_i) * cfg.N_b;
            Index nu = budget.mode == BudgetMode::SparsityPct ? std::max<Index>(1, budget.max_taps(span)) : span;
            return significant_taps_baseline(ctx, nu, EqualizerKind::DFE, cfg.refit, cfg.delta, cfg.N_b);
        }
    }
    throw std::logic_error("build_design: unknown design type");
}

inline std::vector<Budget> budgets_of(const ExperimentConfig& cfg) {
    std::vector<Budget> out;
    for (double v : cfg.budget_values) out.push_back({cfg.budget_mode, v});
    return out;
}

inline std::string budget_column(const DesignSpec& spec, const Budget& b) {
    return spec.uses_budget() ? to_string(b) : std::string("none");
}

}  // namespace detail

// ---------------------------------------------------------------- experiments

/// SER versus SNR for every (design, budget) curve. Per realization a channel
/// is drawn, then for each SNR point the designs are computed once and all
/// curves equalize the same transmitted burst (same data, same noise).
inline MonteCarloResult run_ser_experiment(const ExperimentConfig& cfg) {
    if (cfg.designs.empty() || cfg.snr_db.empty()) throw std::invalid_argument("ser-sweep: designs and snr_db must be nonempty");
    const auto budgets = detail::budgets_of(cfg);
    struct Curve {
        std::size_t design;
        Budget budget;
    };
    std::vector<Curve> curves;
    for (std::size_t d = 0; d < cfg.designs.size(); ++d) {
        if (cfg.designs[d].uses_budget()) {
            for (const auto& b : budgets) curves.push_back({d, b});
        } else {
            curves.push_back({d, Budget{}});
        }
    }
    bool any_dfe = false;
    for (const auto& d : cfg.designs) any_dfe = any_dfe || d.is_dfe();
    if (any_dfe && cfg.N_b < 1) throw std::invalid_argument("ser-sweep: DFE designs need N_b >= 1");

    struct Cell {
        long long errors = 0;
        long long symbols = 0;
        double active = 0.0;
        double out_snr = 0.0;
    };
    struct Record {
        std::vector<Cell> cells;  // [snr][curve]
        StageTimes times;
        double sim_seconds = 0.0;
        long long warmup = 0;
    };

    const std::size_t n_snr = cfg.snr_db.size();
    auto records = detail::parallel_indexed<Record>(cfg.realizations, cfg.threads, [&](int r) {
        Record rec;
        rec.cells.resize(n_snr * curves.size());
        const auto ch = detail::make_channel(cfg.channel, cfg.seed, r);
        for (std::size_t s = 0; s < n_snr; ++s) {
            DesignContext ctx(ch, cfg.N_f, cfg.snr_db[s]);
            std::mt19937_64 rng(derive_seed(cfg.seed, std::uint64_t(r), std::uint64_t(s) + 1));
            const int max_delay = ctx.corr().span() - 1;
            const int warmup_max = max_delay + cfg.N_b;
            const int length = (cfg.N_f + cfg.channel.v - 1) + warmup_max + cfg.symbols_per_burst;
            detail::Burst burst;
            {
                ScopedTimer t(rec.sim_seconds);
                burst = detail::transmit(ch, cfg.N_f, length, cfg.snr_db[s], rng);
            }
            for (std::size_t cv = 0; cv < curves.size(); ++cv) {
                const auto& spec = cfg.designs[curves[cv].design];
                const auto design = detail::build_design(ctx, spec, curves[cv].budget, cfg);
                if (!detail::all_finite(design)) throw NumericDegeneracy("non-finite filter in design " + spec.label, Index(r));
                std::vector<StreamMetrics> metrics;
                {
                    ScopedTimer t(ctx.times().evaluation);
                    metrics = evaluate_mse(design, ctx.corr());
                }
                // Every curve skips the largest possible warmup so all count the same number of decisions.
                detail::ErrorCount ec;
                {
                    ScopedTimer t(rec.sim_seconds);
                    ec = detail::equalize_burst(design, burst, warmup_max);
                }
                auto& cell = rec.cells[s * curves.size() + cv];
                cell.errors = ec.errors;
                cell.symbols = ec.symbols;
                cell.active = design.mean_active_tap_pct();
                double snr_sum = 0.0;
                for (const auto& m : metrics) snr_sum += m.output_snr_db;
                cell.out_snr = snr_sum / double(metrics.size());
                rec.warmup = warmup_max;
            }
            rec.times += ctx.times();
        }
        return rec;
    });

    MonteCarloResult res;
    res.realizations = cfg.realizations;
    res.table.columns = {"snr_db", "design", "budget", "ser", "errors", "symbols_sent", "ser_std", "active_tap_pct_mean",
                         "active_tap_pct_std", "output_snr_db_mean", "output_snr_db_std"};
    for (const auto& rec : records) {
        res.times += rec.times;
        res.simulation_seconds += rec.sim_seconds;
    }
    res.warmup_symbols = records.empty() ? 0 : records[0].warmup;
    for (std::size_t s = 0; s < n_snr; ++s)
        for (std::size_t cv = 0; cv < curves.size(); ++cv) {
            long long errors = 0, symbols = 0;
            Stat ser, act, osnr;
            for (const auto& rec : records) {
                const auto& cell = rec.cells[s * curves.size() + cv];
                errors += cell.errors;
                symbols += cell.symbols;
                ser.add(cell.symbols ? double(cell.errors) / double(cell.symbols) : 0.0);
                act.add(cell.active);
                osnr.add(cell.out_snr);
            }
            const auto& spec = cfg.designs[curves[cv].design];
            res.table.add({cfg.snr_db[s], spec.label, detail::budget_column(spec, curves[cv].budget),
                           symbols ? double(errors) / double(symbols) : 0.0, errors, symbols, ser.stddev(), act.mean(),
                           act.stddev(), osnr.mean(), osnr.stddev()});
        }
    return res;
}

/// Output SNR of exact-factor versus circulant-factor designs, both evaluated
/// against the exact statistics, over a grid of N_f. LE uses Sigma_H/Q_H with
/// a full budget; DFE uses Gamma_H/Theta_H for the FBF and dense W_opt built
/// from the circulant inverse.
inline MonteCarloResult run_circulant_gap_experiment(const ExperimentConfig& cfg) {
    if (cfg.N_f_grid.empty() || cfg.snr_db.empty()) throw std::invalid_argument("circulant-gap: N_f_grid and snr_db must be nonempty");
    const bool dfe = cfg.equalizer == "DFE";
    if (dfe && cfg.N_b < 1) throw std::invalid_argument("circulant-gap: DFE needs N_b >= 1");
    struct Cell {
        double exact = 0.0;
        double circ = 0.0;
    };
    struct Record {
        std::vector<Cell> cells;
        StageTimes times;
    };
    auto records = detail::parallel_indexed<Record>(cfg.realizations, cfg.threads, [&](int r) {
        Record rec;
        const auto ch = detail::make_channel(cfg.channel, cfg.seed, r);
        for (double snr : cfg.snr_db)
            for (int N_f : cfg.N_f_grid) {
                DesignContext ctx(ch, N_f, snr);
                EqualizerDesign ex, ci;
                if (!dfe) {
                    ex = design_mmse_le(ctx, cfg.delta);
                    ci = design_sparse_le(ctx, ch.is_siso() ? DictKind::Q_H : DictKind::Sigma_H, Budget::eta(0.0), cfg.delta);
                } else {
                    ex = design_mmse_dfe(ctx, cfg.N_b, cfg.delta);
                    ci = design_sparse_dfe(ctx, cfg.N_b, ch.is_siso() ? DictKind::Gamma_H : DictKind::Theta_H,
                                           ch.is_siso() ? DictKind::Q_H : DictKind::Sigma_H, Budget::eta(0.0), Budget::eta(0.0), cfg.delta);
                }
                ScopedTimer t(ctx.times().evaluation);
                const auto me = evaluate_mse(ex, ctx.corr());
                const auto mc = evaluate_mse(ci, ctx.corr());
                Cell cell;
                for (std::size_t i = 0; i < me.size(); ++i) {
                    cell.exact += me[i].output_snr_db / double(me.size());
                    cell.circ += mc[i].output_snr_db / double(mc.size());
                }
                rec.cells.push_back(cell);
                rec.times += ctx.times();
            }
        return rec;
    });

    MonteCarloResult res;
    res.realizations = cfg.realizations;
    res.table.columns = {"snr_db", "N_f", "output_snr_exact_db", "output_snr_circulant_db", "gap_db_mean", "gap_db_std"};
    for (const auto& rec : records) res.times += rec.times;
    std::size_t idx = 0;
    for (double snr : cfg.snr_db)
        for (int N_f : cfg.N_f_grid) {
            Stat ex, ci, gap;
            for (const auto& rec : records) {
                const auto& c = rec.cells[idx];
                ex.add(c.exact);
                ci.add(c.circ);
                gap.add(c.exact - c.circ);
            }
            res.table.add({snr, N_f, ex.mean(), ci.mean(), gap.mean(), gap.stddev()});
            ++idx;
        }
    return res;
}

/// Active-tap percentage versus eta_max. LE: one curve per dictionary, plus
/// "significant_taps". DFE: active FFF taps with the FBF from `fbf` (the first
/// entry of `dictionaries` naming an R_perp dictionary, or dense).
inline MonteCarloResult run_taps_vs_loss_experiment(const ExperimentConfig& cfg) {
    if (cfg.budget_mode != BudgetMode::EtaMax) throw std::invalid_argument("taps-vs-loss: budget must be eta_max");
    if (cfg.dictionaries.empty() || cfg.snr_db.empty() || cfg.budget_values.empty())
        throw std::invalid_argument("taps-vs-loss: dictionaries, snr_db and eta_max must be nonempty");
    const bool dfe = cfg.equalizer == "DFE";
    if (dfe && cfg.N_b < 1) throw std::invalid_argument("taps-vs-loss: DFE needs N_b >= 1");

    std::optional<DictKind> fbf;
    std::vector<std::string> curves;
    for (const auto& name : cfg.dictionaries) {
        if (name == "significant_taps") {
            if (dfe) throw std::invalid_argument("taps-vs-loss: significant_taps curve is LE only");
            curves.push_back(name);
            continue;
        }
        const auto k = parse_dict_kind(name);
        if (!k) throw std::invalid_argument("taps-vs-loss: unknown dictionary '" + name + "'");
        if (dfe && dict_source(*k) == FactorSource::Rperp) {
            fbf = *k;
            continue;
        }
        curves.push_back(name);
    }
    if (curves.empty()) throw std::invalid_argument("taps-vs-loss: no feedforward/LE dictionary given");

    struct Cell {
        double active = 0.0;
        double eta = 0.0;
    };
    struct Record {
        std::vector<Cell> cells;
        StageTimes times;
    };
    auto records = detail::parallel_indexed<Record>(cfg.realizations, cfg.threads, [&](int r) {
        Record rec;
        const auto ch = detail::make_channel(cfg.channel, cfg.seed, r);
        for (double snr : cfg.snr_db) {
            DesignContext ctx(ch, cfg.N_f, snr);
            for (double eta : cfg.budget_values)
                for (const auto& name : curves) {
                    EqualizerDesign d;
                    if (name == "significant_taps") {
                        d = detail::significant_taps_le_for_eta(ctx, eta, cfg.delta, cfg.refit);
                    } else if (!dfe) {
                        d = design_sparse_le(ctx, *parse_dict_kind(name), Budget::eta(eta), cfg.delta);
                    } else {
                        d = design_sparse_dfe(ctx, cfg.N_b, fbf, *parse_dict_kind(name), Budget::eta(eta), Budget::eta(eta), cfg.delta);
                    }
                    Cell c;
                    c.active = d.mean_active_tap_pct();
                    const auto m = evaluate_mse(d, ctx.corr());
                    for (const auto& s : m) c.eta += s.eta_db / double(m.size());
                    rec.cells.push_back(c);
                }
            rec.times += ctx.times();
        }
        return rec;
    });

    MonteCarloResult res;
    res.realizations = cfg.realizations;
    res.table.columns = {"snr_db", "eta_max_db", "dict_kind", "active_tap_pct_mean", "active_tap_pct_std", "eta_db_mean"};
    for (const auto& rec : records) res.times += rec.times;
    std::size_t idx = 0;
    for (double snr : cfg.snr_db)
        for (double eta : cfg.budget_values)
            for (const auto& name : curves) {
                Stat act, e;
                for (const auto& rec : records) {
                    act.add(rec.cells[idx].active);
                    e.add(rec.cells[idx].eta);
                }
                res.table.add({snr, eta, name, act.mean(), act.stddev(), e.mean()});
                ++idx;
            }
    res.extra["fbf"] = fbf ? to_string(*fbf) : std::string(dfe ? "dense" : "n/a");
    return res;
}

/// Dictionary matrix whose coherence is reported for `kind`. R_yy-derived
/// kinds use the full factor (or R_yy itself for the raw kinds); R_perp-derived
/// factor kinds use the full factor with the unity-tap column removed.
inline CMatrix coherence_dictionary(DesignContext& ctx, DictKind kind, int delta) {
    const auto& c = ctx.corr();
    const Index fixed = Index(c.n_i) * delta;
    auto drop = [fixed](const CMatrix& m) {
        CMatrix out(m.rows(), m.cols() - 1);
        out << m.leftCols(fixed), m.rightCols(m.cols() - fixed - 1);
        return out;
    };
    switch (kind) {
        case DictKind::Ryy_Ly:
        case DictKind::Ryy_DyUy: return c.R_yy;
        case DictKind::Rperp: return c.R_perp;
        case DictKind::Sigma_H:
        case DictKind::Q_H: return ctx.circulant(FactorSource::Ryy)->root.adjoint().dense();
        case DictKind::Gamma_H:
        case DictKind::Theta_H: return drop(ctx.circulant(FactorSource::Rperp)->root.adjoint().dense());
        default: break;
    }
    const auto f = ctx.factor(dict_factor_kind(kind), dict_source(kind));
    const CMatrix AH = f->A.adjoint();
    return dict_source(kind) == FactorSource::Rperp ? drop(AH) : AH;
}

inline MonteCarloResult run_coherence_sweep(const ExperimentConfig& cfg) {
    if (cfg.dictionaries.empty() || cfg.snr_db.empty()) throw std::invalid_argument("coherence-sweep: dictionaries and snr_db must be nonempty");
    std::vector<DictKind> kinds;
    for (const auto& name : cfg.dictionaries) {
        const auto k = parse_dict_kind(name);
        if (!k) throw std::invalid_argument("coherence-sweep: unknown dictionary '" + name + "'");
        kinds.push_back(*k);
    }
    struct Record {
        std::vector<double> mu;
        StageTimes times;
    };
    auto records = detail::parallel_indexed<Record>(cfg.realizations, cfg.threads, [&](int r) {
        Record rec;
        const auto ch = detail::make_channel(cfg.channel, cfg.seed, r);
        for (double snr : cfg.snr_db) {
            DesignContext ctx(ch, cfg.N_f, snr);
            const int delta = cfg.delta.value_or(cfg.N_b >= 1 ? dfe_delay(cfg.N_f, ch.v, cfg.N_b)
                                                              : default_delay(EqualizerKind::DFE, cfg.N_f, ch.v));
            for (auto k : kinds) {
                const CMatrix phi = coherence_dictionary(ctx, k, delta);
                ScopedTimer t(ctx.times().evaluation);
                rec.mu.push_back(coherence(phi));
            }
            rec.times += ctx.times();
        }
        return rec;
    });
    MonteCarloResult res;
    res.realizations = cfg.realizations;
    res.table.columns = {"snr_db", "dict_kind", "coherence_mean", "coherence_std"};
    for (const auto& rec : records) res.times += rec.times;
    std::size_t idx = 0;
    for (double snr : cfg.snr_db)
        for (auto k : kinds) {
            Stat mu;
            for (const auto& rec : records) mu.add(rec.mu[idx]);
            res.table.add({snr, to_string(k), mu.mean(), mu.stddev()});
            ++idx;
        }
    return res;
}

/// Designs for realization 0 at the first SNR point, as round-trippable JSON.
inline nlohmann::json run_design_dump(const ExperimentConfig& cfg, StageTimes* times = nullptr) {
    if (cfg.designs.empty() || cfg.snr_db.empty()) throw std::invalid_argument("design-dump: designs and snr_db must be nonempty");
    const auto ch = detail::make_channel(cfg.channel, cfg.seed, 0);
    DesignContext ctx(ch, cfg.N_f, cfg.snr_db.front());
    nlohmann::json designs = nlohmann::json::array();
    const auto budgets = detail::budgets_of(cfg);
    for (const auto& spec : cfg.designs) {
        const std::vector<Budget> bs = spec.uses_budget() ? budgets : std::vector<Budget>{Budget{}};
        for (const auto& b : bs) {
            const auto d = detail::build_design(ctx, spec, b, cfg);
            auto j = design_to_json(d);
            j["label"] = spec.label;
            j["budget"] = detail::budget_column(spec, b);
            designs.push_back(std::move(j));
        }
    }
    if (times) *times += ctx.times();
    nlohmann::json ch_json = ch;
    return {{"channel", ch_json}, {"N_f", cfg.N_f}, {"snr_db", cfg.snr_db.front()}, {"designs", designs}};
}

}  // namespace sparse_eq
