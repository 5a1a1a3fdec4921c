#pragma once

#include "sparse_eq/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numbers>
#include <random>
#include <vector>

namespace sparse_eq {

/// MIMO FIR channel: v+1 matrix taps H_l, each n_o x n_i. Entry (r, i) of
/// H_l is tap l of the subchannel from input i to output r.
struct ChannelRealization {
    int n_i = 1;
    int n_o = 1;
    int v = 0;
    std::uint64_t seed = 0;
    std::vector<CMatrix> taps;

    /// Impulse response of the subchannel input i -> output r.
    CVector subchannel(int i, int r) const {
        CVector h(v + 1);
        for (int l = 0; l <= v; ++l) h(l) = taps[l](r, i);
        return h;
    }

    bool is_siso() const { return n_i == 1 && n_o == 1; }
};

/// Block-Toeplitz channel matrix mapping the stacked input window
/// x_{k:k-N_f-v+1} (time-major, n_i entries per instant) to the stacked
/// output window y_{k:k-N_f+1}.
struct BlockToeplitzChannel {
    CMatrix matrix;
    int N_f = 0;
    int n_i = 1;
    int n_o = 1;
    int v = 0;
};

inline void check_channel(const ChannelRealization& ch) {
    if (ch.n_i < 1 || ch.n_o < 1 || ch.v < 0)
        throw std::invalid_argument("channel: dimensions must be positive");
    if (static_cast<int>(ch.taps.size()) != ch.v + 1)
        throw std::invalid_argument("channel: expected v+1 taps");
    for (const auto& t : ch.taps)
        if (t.rows() != ch.n_o || t.cols() != ch.n_i)
            throw std::invalid_argument("channel: tap has wrong shape");
}

/// Uniform power-delay-profile channel: every tap of every subchannel is an
/// i.i.d. CN(0,1) draw, then each subchannel is scaled to unit energy.
inline ChannelRealization generate_updp_channel(int n_i, int n_o, int v, std::uint64_t seed) {
    if (n_i < 1 || n_o < 1 || v < 1)
        throw std::invalid_argument("generate_updp_channel: n_i, n_o and v must be >= 1");

    ChannelRealization ch{n_i, n_o, v, seed, {}};
    ch.taps.assign(v + 1, CMatrix::Zero(n_o, n_i));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> half(0.0, std::sqrt(0.5));
    for (int l = 0; l <= v; ++l)
        for (int r = 0; r < n_o; ++r)
            for (int i = 0; i < n_i; ++i) {
                const double re = half(rng);
                const double im = half(rng);
                ch.taps[l](r, i) = cplx(re, im);
            }

    for (int r = 0; r < n_o; ++r)
        for (int i = 0; i < n_i; ++i) {
            double energy = 0.0;
            for (int l = 0; l <= v; ++l) energy += std::norm(ch.taps[l](r, i));
            const double scale = 1.0 / std::sqrt(energy);
            for (int l = 0; l <= v; ++l) ch.taps[l](r, i) *= scale;
        }
    return ch;
}

/// Index s* in 1..v+1 maximizing |2 cos(pi s / (v+2))|; smaller s wins ties.
inline int worst_case_mode(int v) {
    int best = 1;
    double best_mag = -1.0;
    for (int s = 1; s <= v + 1; ++s) {
        const double mag = std::abs(2.0 * std::cos(std::numbers::pi * s / (v + 2)));
        if (mag > best_mag + 1e-15) {
            best_mag = mag;
            best = s;
        }
    }
    return best;
}

/// SISO CIR maximizing |h^H R h| over unit-norm h, R being the (v+1)x(v+1)
/// matrix with ones on its first super- and sub-diagonal. The maximizer is
/// the sine eigenvector of the largest-magnitude eigenvalue.
inline ChannelRealization worst_case_cir(int v) {
    if (v < 1) throw std::invalid_argument("worst_case_cir: v must be >= 1");
    const int s = worst_case_mode(v);
    CVector h(v + 1);
    const double amp = std::sqrt(2.0 / (v + 2));
    for (int j = 1; j <= v + 1; ++j)
        h(j - 1) = amp * std::sin(j * std::numbers::pi * s / (v + 2));
    h /= h.norm();

    ChannelRealization ch{1, 1, v, 0, {}};
    ch.taps.reserve(v + 1);
    for (int l = 0; l <= v; ++l) ch.taps.push_back(CMatrix::Constant(1, 1, h(l)));
    return ch;
}

/// First block row is [H_0 ... H_v 0 ... 0]; block row b is that row shifted
/// right by b block columns.
inline BlockToeplitzChannel build_block_toeplitz(const ChannelRealization& ch, int N_f) {
    if (N_f < 1) throw std::invalid_argument("build_block_toeplitz: N_f must be >= 1");
    check_channel(ch);
    BlockToeplitzChannel out;
    out.N_f = N_f;
    out.n_i = ch.n_i;
    out.n_o = ch.n_o;
    out.v = ch.v;
    out.matrix = CMatrix::Zero(Index(ch.n_o) * N_f, Index(ch.n_i) * (N_f + ch.v));
    for (int b = 0; b < N_f; ++b)
        for (int l = 0; l <= ch.v; ++l)
            out.matrix.block(Index(b) * ch.n_o, Index(b + l) * ch.n_i, ch.n_o, ch.n_i) = ch.taps[l];
    return out;
}

// JSON: {n_i, n_o, v, seed, taps: [[[re,im], ...], ...]}; one inner array per
// tap l, entries in row-major (r, i) order.

inline void to_json(nlohmann::json& j, const ChannelRealization& ch) {
    nlohmann::json taps = nlohmann::json::array();
    for (const auto& t : ch.taps) {
        nlohmann::json entries = nlohmann::json::array();
        for (Index r = 0; r < t.rows(); ++r)
            for (Index i = 0; i < t.cols(); ++i) entries.push_back({t(r, i).real(), t(r, i).imag()});
        taps.push_back(std::move(entries));
    }
    j = nlohmann::json{{"n_i", ch.n_i}, {"n_o", ch.n_o}, {"v", ch.v}, {"seed", ch.seed}, {"taps", taps}};
}

inline void from_json(const nlohmann::json& j, ChannelRealization& ch) {
    ch.n_i = j.at("n_i").get<int>();
    ch.n_o = j.at("n_o").get<int>();
    ch.v = j.at("v").get<int>();
    ch.seed = j.at("seed").get<std::uint64_t>();
    const auto& taps = j.at("taps");
    if (taps.size() != static_cast<std::size_t>(ch.v + 1))
        throw std::invalid_argument("channel json: expected v+1 taps");
    ch.taps.clear();
    for (const auto& entries : taps) {
        if (entries.size() != static_cast<std::size_t>(ch.n_o * ch.n_i))
            throw std::invalid_argument("channel json: tap has wrong entry count");
        CMatrix t(ch.n_o, ch.n_i);
        std::size_t k = 0;
        for (Index r = 0; r < ch.n_o; ++r)
            for (Index i = 0; i < ch.n_i; ++i, ++k)
                t(r, i) = cplx(entries[k].at(0).get<double>(), entries[k].at(1).get<double>());
        ch.taps.push_back(std::move(t));
    }
    check_channel(ch);
}

}  // namespace sparse_eq
