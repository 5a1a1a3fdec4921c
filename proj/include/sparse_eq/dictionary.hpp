#pragma once

#include "sparse_eq/correlation.hpp"
#include "sparse_eq/linear_map.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string_view>

namespace sparse_eq {

/// Sparsifying dictionaries. LE/FFF: Ly_H .. Lambda_Py_H and Sigma_H/Q_H.
/// FBF: Lperp_H .. Dperp_Uperp_H and Gamma_H/Theta_H. Rperp is the raw
/// R_perp matrix, used only for coherence reports.
enum class DictKind {
    Ly_H,
    Dy_Uy_H,
    Ryy_Ly,
    Ryy_DyUy,
    Lambda_Py_H,
    Lperp_H,
    Omega_perp_H,
    Dperp_Uperp_H,
    Sigma_H,
    Q_H,
    Gamma_H,
    Theta_H,
    Rperp,
};

inline constexpr std::array<std::pair<DictKind, std::string_view>, 13> kDictNames{{
    {DictKind::Ly_H, "Ly_H"},
    {DictKind::Dy_Uy_H, "Dy_Uy_H"},
    {DictKind::Ryy_Ly, "Ryy_Ly"},
    {DictKind::Ryy_DyUy, "Ryy_DyUy"},
    {DictKind::Lambda_Py_H, "Lambda_Py_H"},
    {DictKind::Lperp_H, "Lperp_H"},
    {DictKind::Omega_perp_H, "Omega_perp_H"},
    {DictKind::Dperp_Uperp_H, "Dperp_Uperp_H"},
    {DictKind::Sigma_H, "Sigma_H"},
    {DictKind::Q_H, "Q_H"},
    {DictKind::Gamma_H, "Gamma_H"},
    {DictKind::Theta_H, "Theta_H"},
    {DictKind::Rperp, "Rperp"},
}};

inline std::string to_string(DictKind k) {
    for (const auto& [kind, name] : kDictNames)
        if (kind == k) return std::string(name);
    return "?";
}

inline std::optional<DictKind> parse_dict_kind(std::string_view s) {
    for (const auto& [kind, name] : kDictNames)
        if (name == s) return kind;
    return std::nullopt;
}

inline bool is_circulant(DictKind k) {
    return k == DictKind::Sigma_H || k == DictKind::Q_H || k == DictKind::Gamma_H || k == DictKind::Theta_H;
}

inline bool is_raw_ryy(DictKind k) { return k == DictKind::Ryy_Ly || k == DictKind::Ryy_DyUy; }

/// Factor source the dictionary is derived from.
inline FactorSource dict_source(DictKind k) {
    switch (k) {
        case DictKind::Lperp_H:
        case DictKind::Omega_perp_H:
        case DictKind::Dperp_Uperp_H:
        case DictKind::Gamma_H:
        case DictKind::Theta_H:
        case DictKind::Rperp: return FactorSource::Rperp;
        default: return FactorSource::Ryy;
    }
}

inline FactorKind dict_factor_kind(DictKind k) {
    switch (k) {
        case DictKind::Ly_H:
        case DictKind::Ryy_Ly:
        case DictKind::Lperp_H:
        case DictKind::Rperp: return FactorKind::CholeskyLL;
        case DictKind::Dy_Uy_H:
        case DictKind::Ryy_DyUy:
        case DictKind::Dperp_Uperp_H: return FactorKind::Eigen;
        case DictKind::Lambda_Py_H:
        case DictKind::Omega_perp_H: return FactorKind::UnitLDL;
        default: return FactorKind::CirculantFFT;
    }
}

/// Re-expansion data: unknown z[j] maps to full-filter index kept[j]; when
/// fixed_index >= 0 that entry is pinned to one.
struct ProblemOffset {
    std::vector<Index> kept;
    Index fixed_index = -1;
    Index full_length = 0;

    bool trivial() const { return fixed_index < 0 && kept.empty(); }

    CVector expand(const CVector& z) const {
        if (trivial()) return z;
        if (z.size() != Index(kept.size())) throw std::invalid_argument("ProblemOffset::expand: length mismatch");
        CVector full = CVector::Zero(full_length);
        for (std::size_t j = 0; j < kept.size(); ++j) full(kept[j]) = z(Index(j));
        if (fixed_index >= 0) full(fixed_index) = 1.0;
        return full;
    }

    CVector extract(const CVector& full) const {
        if (trivial()) return full;
        CVector z(Index(kept.size()));
        for (std::size_t j = 0; j < kept.size(); ++j) z(Index(j)) = full(kept[j]);
        return z;
    }
};

/// Unified sparse design problem: find sparse z with ||K (Phi z - d)||^2 <= epsilon.
struct SparseDesignProblem {
    LinearMap Phi;
    LinearMap K;
    CVector d;
    double epsilon = 0.0;
    DictKind dict_kind = DictKind::Ly_H;
    ProblemOffset offset;
    int stream = -1;  // -1 for joint (multi-stream) problems

    Index unknowns() const { return Phi.cols(); }

    /// ||K (Phi z - d)||^2.
    double residual_sq(const CVector& z) const {
        CVector r = Phi.apply(z) - d;
        return K.is_identity() ? r.squaredNorm() : K.apply(r).squaredNorm();
    }

    /// Effective system (K Phi, K d), dense.
    std::pair<CMatrix, CVector> effective() const {
        CMatrix phi = Phi.dense();
        if (K.is_identity()) return {std::move(phi), d};
        return {K.apply(phi), K.apply(d)};
    }
};

inline double epsilon_from_eta(double eta_max_db, double xi_m) {
    if (!(eta_max_db >= 0.0)) throw std::invalid_argument("epsilon_from_eta: eta_max_db must be >= 0");
    if (!(xi_m > 0.0)) throw std::invalid_argument("epsilon_from_eta: xi_m must be > 0");
    return xi_m * (std::pow(10.0, eta_max_db / 10.0) - 1.0);
}

namespace detail {

inline void check_factor(const FactorPair& f, FactorSource want, Index n, const char* who) {
    if (f.source != want) throw std::invalid_argument(std::string(who) + ": factor derived from the wrong matrix");
    if (f.size() != n) throw std::invalid_argument(std::string(who) + ": factor size mismatch");
}

inline void check_circulant(const CirculantFactorSet& c, FactorSource want, Index n, const char* who) {
    if (c.source != want) throw std::invalid_argument(std::string(who) + ": circulant set derived from the wrong matrix");
    if (c.size() != n) throw std::invalid_argument(std::string(who) + ": circulant size mismatch");
}

inline DictKind ryy_dict(FactorKind k, bool raw) {
    switch (k) {
        case FactorKind::CholeskyLL: return raw ? DictKind::Ryy_Ly : DictKind::Ly_H;
        case FactorKind::Eigen: return raw ? DictKind::Ryy_DyUy : DictKind::Dy_Uy_H;
        case FactorKind::UnitLDL:
            if (raw) throw std::invalid_argument("raw R_yy dictionary is defined for Cholesky and eigen weights only");
            return DictKind::Lambda_Py_H;
        default: throw std::invalid_argument("unexpected factor kind");
    }
}

inline DictKind rperp_dict(FactorKind k) {
    switch (k) {
        case FactorKind::CholeskyLL: return DictKind::Lperp_H;
        case FactorKind::UnitLDL: return DictKind::Omega_perp_H;
        case FactorKind::Eigen: return DictKind::Dperp_Uperp_H;
        default: throw std::invalid_argument("unexpected factor kind");
    }
}

inline std::vector<Index> fbf_columns(int n_i, int delta, int N_b) {
    std::vector<Index> kept;
    for (int t = delta + 1; t <= delta + N_b; ++t)
        for (int j = 0; j < n_i; ++j) kept.push_back(Index(n_i) * t + j);
    return kept;
}

inline CVector vec(const CMatrix& m) { return Eigen::Map<const CVector>(m.data(), m.size()); }

}  // namespace detail

/// LE problem for stream i at delay delta. Factor-based dictionaries use
/// Phi = A^H, d = A^{-1} r; with `raw_ryy`, Phi = R_yy, K = A^{-1}, d = r.
inline SparseDesignProblem build_le_problem(const CorrelationSet& corr, std::shared_ptr<const FactorPair> f, int delta,
                                            int i, double epsilon, bool raw_ryy = false) {
    detail::check_factor(*f, FactorSource::Ryy, corr.R_yy.rows(), "build_le_problem");
    if (epsilon < 0.0) throw std::invalid_argument("build_le_problem: epsilon must be >= 0");
    const CVector r = cross_column(corr, delta, i);
    SparseDesignProblem p;
    p.dict_kind = detail::ryy_dict(f->kind, raw_ryy);
    p.epsilon = epsilon;
    p.stream = i;
    if (raw_ryy) {
        p.Phi = LinearMap::dense(corr.R_yy, "R_yy");
        p.K = LinearMap::factor_inverse(f);
        p.d = r;
    } else {
        p.Phi = LinearMap::dense(f->A.adjoint(), to_string(p.dict_kind));
        p.K = LinearMap::identity(p.Phi.rows());
        p.d = f->solve(r);
    }
    return p;
}

/// Circulant LE problem: Phi = Sigma^H, d = Sigma^{-1} r = Sigma^H Rbar^{-1} r.
inline SparseDesignProblem build_le_problem(const CorrelationSet& corr, std::shared_ptr<const CirculantFactorSet> c,
                                            int delta, int i, double epsilon) {
    detail::check_circulant(*c, FactorSource::Ryy, corr.R_yy.rows(), "build_le_problem");
    if (epsilon < 0.0) throw std::invalid_argument("build_le_problem: epsilon must be >= 0");
    const CVector r = cross_column(corr, delta, i);
    SparseDesignProblem p;
    p.dict_kind = c->siso() ? DictKind::Q_H : DictKind::Sigma_H;
    p.epsilon = epsilon;
    p.stream = i;
    auto root_h = std::make_shared<const BlockCirculant>(c->root.adjoint());
    p.Phi = LinearMap::circulant(root_h, to_string(p.dict_kind));
    p.K = LinearMap::identity(p.Phi.rows());
    p.d = c->root.apply_adjoint(circulant_inverse_apply(*c, r));
    return p;
}

namespace detail {

inline SparseDesignProblem fbf_from_dictionary(const CorrelationSet& corr, const LinearMap& full, DictKind kind,
                                               int delta, int i, int N_b, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("build_fbf_problem: gamma must be >= 0");
    if (i < 0 || i >= corr.n_i) throw std::invalid_argument("build_fbf_problem: stream index out of range");
    if (N_b < 1 || delta < 0 || delta + N_b + 1 > corr.span())
        throw std::invalid_argument("build_fbf_problem: delta + N_b + 1 must not exceed N_f + v");
    SparseDesignProblem p;
    p.dict_kind = kind;
    p.epsilon = gamma;
    p.stream = i;
    p.offset.fixed_index = Index(corr.n_i) * delta + i;
    p.offset.full_length = full.cols();
    p.offset.kept = fbf_columns(corr.n_i, delta, N_b);
    p.Phi = LinearMap::select_columns(full, p.offset.kept);
    p.K = LinearMap::identity(p.Phi.rows());
    p.d = -full.column(p.offset.fixed_index);
    return p;
}

}  // namespace detail

/// FBF problem for stream i: Phi holds the columns of A_perp^H at the causal
/// feedback positions (block rows delta+1 .. delta+N_b); d is minus the column
/// at the unity (ITC) position. The constraint value is the total MSE
/// b^H R_perp b of the re-expanded feedback column.
inline SparseDesignProblem build_fbf_problem(const CorrelationSet& corr, std::shared_ptr<const FactorPair> f, int delta,
                                             int i, int N_b, double gamma) {
    detail::check_factor(*f, FactorSource::Rperp, corr.R_perp.rows(), "build_fbf_problem");
    const DictKind kind = detail::rperp_dict(f->kind);
    return detail::fbf_from_dictionary(corr, LinearMap::dense(f->A.adjoint(), to_string(kind)), kind, delta, i, N_b, gamma);
}

inline SparseDesignProblem build_fbf_problem(const CorrelationSet& corr, std::shared_ptr<const CirculantFactorSet> c,
                                             int delta, int i, int N_b, double gamma) {
    detail::check_circulant(*c, FactorSource::Rperp, corr.R_perp.rows(), "build_fbf_problem");
    const DictKind kind = c->siso() ? DictKind::Gamma_H : DictKind::Theta_H;
    auto root_h = std::make_shared<const BlockCirculant>(c->root.adjoint());
    return detail::fbf_from_dictionary(corr, LinearMap::circulant(root_h, to_string(kind)), kind, delta, i, N_b, gamma);
}

/// Joint FFF problem: Phi = I_{n_i} (x) A^H, d = vec(A^{-1} beta), beta = R_yx B_s.
/// With `raw_ryy`, Phi = I (x) R_yy, K = I (x) A^{-1}, d = vec(beta).
inline SparseDesignProblem build_fff_problem(const CorrelationSet& corr, std::shared_ptr<const FactorPair> f,
                                             const CMatrix& B_s, double gamma_bar, bool raw_ryy = false) {
    detail::check_factor(*f, FactorSource::Ryy, corr.R_yy.rows(), "build_fff_problem");
    if (B_s.rows() != corr.R_yx.cols() || B_s.cols() != corr.n_i) throw std::invalid_argument("build_fff_problem: B_s shape mismatch");
    if (gamma_bar < 0.0) throw std::invalid_argument("build_fff_problem: gamma_bar must be >= 0");
    const CMatrix beta = corr.R_yx * B_s;
    SparseDesignProblem p;
    p.dict_kind = detail::ryy_dict(f->kind, raw_ryy);
    p.epsilon = gamma_bar;
    if (raw_ryy) {
        p.Phi = LinearMap::block_diagonal(LinearMap::dense(corr.R_yy, "R_yy"), corr.n_i);
        p.K = LinearMap::block_diagonal(LinearMap::factor_inverse(f), corr.n_i);
        p.d = detail::vec(beta);
    } else {
        p.Phi = LinearMap::block_diagonal(LinearMap::dense(f->A.adjoint(), to_string(p.dict_kind)), corr.n_i);
        p.K = LinearMap::identity(p.Phi.rows());
        p.d = detail::vec(f->solve(beta));
    }
    return p;
}

inline SparseDesignProblem build_fff_problem(const CorrelationSet& corr, std::shared_ptr<const CirculantFactorSet> c,
                                             const CMatrix& B_s, double gamma_bar) {
    detail::check_circulant(*c, FactorSource::Ryy, corr.R_yy.rows(), "build_fff_problem");
    if (B_s.rows() != corr.R_yx.cols() || B_s.cols() != corr.n_i) throw std::invalid_argument("build_fff_problem: B_s shape mismatch");
    if (gamma_bar < 0.0) throw std::invalid_argument("build_fff_problem: gamma_bar must be >= 0");
    const CMatrix beta = corr.R_yx * B_s;
    SparseDesignProblem p;
    p.dict_kind = c->siso() ? DictKind::Q_H : DictKind::Sigma_H;
    p.epsilon = gamma_bar;
    auto root_h = std::make_shared<const BlockCirculant>(c->root.adjoint());
    p.Phi = LinearMap::block_diagonal(LinearMap::circulant(root_h, to_string(p.dict_kind)), corr.n_i);
    p.K = LinearMap::identity(p.Phi.rows());
    CMatrix d(beta.rows(), beta.cols());
    for (Index s = 0; s < beta.cols(); ++s)
        d.col(s) = c->root.apply_adjoint(circulant_inverse_apply(*c, CVector(beta.col(s))));
    p.d = detail::vec(d);
    return p;
}

/// Worst-case coherence max_{i != j} |<phi_i, phi_j>| / (||phi_i|| ||phi_j||).
inline double coherence(const CMatrix& Phi) {
    if (Phi.cols() < 2) throw std::invalid_argument("coherence: need at least two columns");
    CMatrix normed = Phi;
    for (Index j = 0; j < Phi.cols(); ++j) {
        const double n = Phi.col(j).norm();
        if (!(n > 0.0)) throw std::invalid_argument("coherence: zero column " + std::to_string(j));
        normed.col(j) /= n;
    }
    const CMatrix gram = normed.adjoint() * normed;
    double mu = 0.0;
    for (Index j = 0; j < gram.cols(); ++j)
        for (Index i = 0; i < j; ++i) mu = std::max(mu, std::abs(gram(i, j)));
    if (mu > 1.0 + 1e-12) throw std::logic_error("coherence: value exceeds one beyond rounding");
    return std::min(mu, 1.0);
}

inline double coherence(const LinearMap& Phi) { return coherence(Phi.dense()); }

// Problem dump: dense matrices as {rows, cols, data: [[re,im], ...]} row-major.

inline nlohmann::json matrix_to_json(const CMatrix& m) {
    nlohmann::json data = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) data.push_back({m(r, c).real(), m(r, c).imag()});
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline CMatrix matrix_from_json(const nlohmann::json& j) {
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (data.size() != static_cast<std::size_t>(rows * cols)) throw std::invalid_argument("matrix json: wrong entry count");
    CMatrix m(rows, cols);
    std::size_t k = 0;
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c, ++k) m(r, c) = cplx(data[k].at(0).get<double>(), data[k].at(1).get<double>());
    return m;
}

inline nlohmann::json vector_to_json(const CVector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Index k = 0; k < v.size(); ++k) out.push_back({v(k).real(), v(k).imag()});
    return out;
}

inline CVector vector_from_json(const nlohmann::json& j) {
    CVector v(Index(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v(Index(k)) = cplx(j[k].at(0).get<double>(), j[k].at(1).get<double>());
    return v;
}

inline nlohmann::json problem_to_json(const SparseDesignProblem& p) {
    nlohmann::json j;
    j["dict_kind"] = to_string(p.dict_kind);
    j["epsilon"] = p.epsilon;
    j["stream"] = p.stream;
    j["Phi"] = matrix_to_json(p.Phi.dense());
    j["K"] = p.K.is_identity() ? nlohmann::json("identity") : matrix_to_json(p.K.dense());
    j["d"] = vector_to_json(p.d);
    j["offset"] = {{"kept", p.offset.kept}, {"fixed_index", p.offset.fixed_index}, {"full_length", p.offset.full_length}};
    return j;
}

inline SparseDesignProblem problem_from_json(const nlohmann::json& j) {
    SparseDesignProblem p;
    const auto kind = parse_dict_kind(j.at("dict_kind").get<std::string>());
    if (!kind) throw std::invalid_argument("problem json: unknown dict_kind");
    p.dict_kind = *kind;
    p.epsilon = j.at("epsilon").get<double>();
    p.stream = j.at("stream").get<int>();
    p.Phi = LinearMap::dense(matrix_from_json(j.at("Phi")), to_string(p.dict_kind));
    if (j.at("K").is_string())
        p.K = LinearMap::identity(p.Phi.rows());
    else
        p.K = LinearMap::dense(matrix_from_json(j.at("K")), "K");
    p.d = vector_from_json(j.at("d"));
    const auto& off = j.at("offset");
    p.offset.kept = off.at("kept").get<std::vector<Index>>();
    p.offset.fixed_index = off.at("fixed_index").get<Index>();
    p.offset.full_length = off.at("full_length").get<Index>();
    return p;
}

}  // namespace sparse_eq
