#pragma once

// Four-population tumor-immune model: tumor cells T, NK cells N, CD8+ T cells L
// and circulating lymphocytes C, driven by 15 elementary processes.
//
// Process indices are 1-based everywhere in the public API (rate(k), term(k),
// report files), matching the published rate table.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "tumorcsp/errors.hpp"
#include "tumorcsp/params.hpp"

namespace tumorcsp {

inline constexpr int kVariables = 4;
inline constexpr int kProcesses = 15;

using Vec4 = Eigen::Matrix<double, kVariables, 1>;
using Mat4 = Eigen::Matrix<double, kVariables, kVariables>;
using RowVec4 = Eigen::Matrix<double, 1, kVariables>;
using StoichMatrix = Eigen::Matrix<double, kVariables, kProcesses>;

/// Variable slots in state vectors.
enum Var : int { kT = 0, kN = 1, kL = 2, kC = 3 };

inline constexpr std::array<char, kVariables> kVariableNames{'T', 'N', 'L', 'C'};

/// Populations at one instant.
struct State {
    double t = 0.0;
    double T = 0.0;
    double N = 0.0;
    double L = 0.0;
    double C = 0.0;

    [[nodiscard]] Vec4 vec() const { return Vec4(T, N, L, C); }

    [[nodiscard]] static State from(const Vec4& y, double time = 0.0) {
        return State{time, y[kT], y[kN], y[kL], y[kC]};
    }

    [[nodiscard]] bool feasible() const {
        return std::isfinite(T) && std::isfinite(N) && std::isfinite(L) && std::isfinite(C) &&
               T > 0.0 && N >= 0.0 && L >= 0.0 && C >= 0.0;
    }
};

/// How the rate laws treat the boundary of the positive orthant.
///  - strict: T > 0 and N, L, C >= 0 are required, otherwise DomainError.
///  - limit:  rates are evaluated at max(y, 0) and T = 0 takes the T -> 0+
///            limit of the saturating kill term (D = d if L > 0, D = 0 if L = 0).
///            Used by the integrator, whose iterates may touch T = 0 near the TFE.
enum class Domain { strict, limit };

/// Constant stoichiometry of the 15 processes (rows T, N, L, C).
inline constexpr std::array<std::array<int, kProcesses>, kVariables> kStoichiometry{{
    //  1   2   3   4   5   6   7   8   9  10  11  12  13  14  15
    {{+1, 0, 0, 0, 0, 0, -1, -1, 0, 0, 0, 0, 0, 0, 0}},   // T
    {{0, +1, 0, -1, 0, 0, 0, 0, +1, 0, 0, 0, -1, 0, 0}},  // N
    {{0, 0, 0, 0, -1, 0, 0, 0, 0, +1, +1, +1, 0, -1, -1}}, // L
    {{0, 0, +1, 0, 0, -1, 0, 0, 0, 0, 0, 0, 0, 0, 0}},    // C
}};

[[nodiscard]] inline const StoichMatrix& stoichiometry() {
    static const StoichMatrix S = [] {
        StoichMatrix m;
        for (int i = 0; i < kVariables; ++i) {
            for (int k = 0; k < kProcesses; ++k) {
                m(i, k) = kStoichiometry[i][k];
            }
        }
        return m;
    }();
    return S;
}

/// Stoichiometric column S_k, k in 1..15.
[[nodiscard]] inline Vec4 stoichiometric_vector(int k) {
    if (k < 1 || k > kProcesses) {
        throw IndexError("process index " + std::to_string(k) + " outside 1..15");
    }
    return stoichiometry().col(k - 1);
}

/// Rates R^1..R^15 (cells/day), their gradients with respect to (T, N, L, C),
/// and the saturating kill coefficient D.
struct ProcessSet {
    std::array<double, kProcesses> rates{};
    std::array<RowVec4, kProcesses> gradients{};
    double D = 0.0;

    [[nodiscard]] double rate(int k) const { return rates.at(index(k)); }
    [[nodiscard]] const RowVec4& gradient(int k) const { return gradients.at(index(k)); }

    [[nodiscard]] Eigen::Matrix<double, kProcesses, 1> rate_vector() const {
        return Eigen::Map<const Eigen::Matrix<double, kProcesses, 1>>(rates.data());
    }

    /// 15x4 matrix whose row k-1 is grad R^k.
    [[nodiscard]] Eigen::Matrix<double, kProcesses, kVariables> gradient_matrix() const {
        Eigen::Matrix<double, kProcesses, kVariables> G;
        for (int k = 0; k < kProcesses; ++k) {
            G.row(k) = gradients[k];
        }
        return G;
    }

private:
    static std::size_t index(int k) {
        if (k < 1 || k > kProcesses) {
            throw IndexError("process index " + std::to_string(k) + " outside 1..15");
        }
        return static_cast<std::size_t>(k - 1);
    }
};

namespace detail {

struct Saturation {
    double D = 0.0;
    double dD_dT = 0.0;
    double dD_dL = 0.0;
};

// D = d x / (s + x) with x = (L/T)^l, written as d / (1 + z), z = s (T/L)^l,
// which stays finite as T -> 0 (z -> 0) and as L -> 0 (z -> inf).
inline Saturation saturation(double T, double L, const ParameterSet& ps) {
    Saturation out;
    if (L <= 0.0) {
        // D(L=0) = 0; dD/dL at L=0 vanishes for l > 1.
        if (ps.l > 1.0 || T <= 0.0) {
            out.dD_dL = 0.0;
        } else {
            out.dD_dL = ps.d * ps.l * std::pow(L, ps.l - 1.0) / (ps.s * std::pow(T, ps.l));
        }
        return out;
    }
    const double z = ps.s * std::pow(T / L, ps.l);
    const double one_z = 1.0 + z;
    out.D = ps.d / one_z;
    // z / (1+z)^2 evaluated without overflow for large z.
    const double shape = std::isinf(z) ? 0.0 : 1.0 / (one_z * (1.0 + 1.0 / z));
    if (T > 0.0) {
        out.dD_dT = -ps.d * ps.l * shape / T;
    } else {
        // z/T = s T^(l-1) / L^l -> 0 as T -> 0 for l > 1.
        out.dD_dT = ps.l > 1.0 ? 0.0 : -ps.d * ps.l * ps.s * std::pow(L, -ps.l);
    }
    out.dD_dL = ps.d * ps.l * shape / L;
    return out;
}

inline void check_domain(const Vec4& y, Domain domain) {
    if (!y.allFinite()) {
        throw DomainError("state contains non-finite populations");
    }
    if (domain == Domain::strict) {
        if (!(y[kT] > 0.0)) {
            throw DomainError("tumor population must be > 0 (T = 0 lies outside the model domain)");
        }
        if (y[kN] < 0.0 || y[kL] < 0.0 || y[kC] < 0.0) {
            throw DomainError("immune populations must be >= 0");
        }
    }
}

} // namespace detail

/// Saturating CD8+ kill coefficient D = d (L/T)^l / (s + (L/T)^l), dimensionless
/// fraction of d. Exactly 0 when L = 0.
[[nodiscard]] inline double d_saturation(const State& state, const ParameterSet& ps) {
    if (!(state.T > 0.0) || !std::isfinite(state.T)) {
        throw DomainError("d_saturation requires T > 0");
    }
    if (state.L < 0.0) {
        throw DomainError("d_saturation requires L >= 0");
    }
    return detail::saturation(state.T, state.L, ps).D;
}

[[nodiscard]] inline ProcessSet process_rates(const Vec4& y_in, const ParameterSet& ps,
                                              Domain domain = Domain::strict) {
    detail::check_domain(y_in, domain);
    const Vec4 y = y_in.cwiseMax(0.0);
    const double T = y[kT];
    const double N = y[kN];
    const double L = y[kL];
    const double C = y[kC];

    const auto sat = detail::saturation(T, L, ps);
    const double D = sat.D;

    ProcessSet out;
    out.D = D;
    auto& R = out.rates;
    auto& G = out.gradients;
    for (auto& g : G) {
        g.setZero();
    }

    // growth
    R[0] = ps.a * T * (1.0 - ps.b * T);
    G[0][kT] = ps.a * (1.0 - 2.0 * ps.b * T);
    R[1] = ps.e * C;
    G[1][kC] = ps.e;
    R[2] = ps.alpha;

    // death
    R[3] = ps.f * N;
    G[3][kN] = ps.f;
    R[4] = ps.m * L;
    G[4][kL] = ps.m;
    R[5] = ps.beta * C;
    G[5][kC] = ps.beta;

    // fractional cell kill
    R[6] = ps.c * N * T;
    G[6][kT] = ps.c * N;
    G[6][kN] = ps.c * T;
    R[7] = D * T;
    G[7][kT] = D + T * sat.dD_dT;
    G[7][kL] = T * sat.dD_dL;

    // recruitment
    const double T2 = T * T;
    const double hT = ps.h + T2;
    R[8] = ps.g * T2 / hT * N;
    G[8][kT] = ps.g * N * 2.0 * T * ps.h / (hT * hT);
    G[8][kN] = ps.g * T2 / hT;

    const double X = D * D * T2;
    const double kX = ps.k + X;
    const double dX_dT = 2.0 * D * T * (T * sat.dD_dT + D);
    const double dX_dL = 2.0 * D * T2 * sat.dD_dL;
    const double dphi = ps.k / (kX * kX);
    R[9] = ps.j * X / kX * L;
    G[9][kT] = ps.j * L * dphi * dX_dT;
    G[9][kL] = ps.j * X / kX + ps.j * L * dphi * dX_dL;

    R[10] = ps.r1 * N * T;
    G[10][kT] = ps.r1 * N;
    G[10][kN] = ps.r1 * T;
    R[11] = ps.r2 * C * T;
    G[11][kT] = ps.r2 * C;
    G[11][kC] = ps.r2 * T;

    // inactivation
    R[12] = ps.p * N * T;
    G[12][kT] = ps.p * N;
    G[12][kN] = ps.p * T;
    R[13] = ps.q * L * T;
    G[13][kT] = ps.q * L;
    G[13][kL] = ps.q * T;
    R[14] = ps.u * N * L * L;
    G[14][kN] = ps.u * L * L;
    G[14][kL] = 2.0 * ps.u * N * L;

    return out;
}

[[nodiscard]] inline ProcessSet process_rates(const State& state, const ParameterSet& ps) {
    return process_rates(state.vec(), ps, Domain::strict);
}

/// g(y) = S R(y).
[[nodiscard]] inline Vec4 rhs(const ProcessSet& rates) {
    return stoichiometry() * rates.rate_vector();
}

[[nodiscard]] inline Vec4 rhs(const Vec4& y, const ParameterSet& ps, Domain domain = Domain::strict) {
    return rhs(process_rates(y, ps, domain));
}

[[nodiscard]] inline Vec4 rhs(const State& state, const ParameterSet& ps) {
    return rhs(state.vec(), ps, Domain::strict);
}

/// Analytic Jacobian dg/dy = sum_k S_k (grad R^k).
[[nodiscard]] inline Mat4 jacobian(const ProcessSet& rates) {
    return stoichiometry() * rates.gradient_matrix();
}

[[nodiscard]] inline Mat4 jacobian(const Vec4& y, const ParameterSet& ps, Domain domain = Domain::strict) {
    return jacobian(process_rates(y, ps, domain));
}

[[nodiscard]] inline Mat4 jacobian(const State& state, const ParameterSet& ps) {
    return jacobian(state.vec(), ps, Domain::strict);
}

/// Contribution of process k to the Jacobian: S_k (outer) grad R^k.
[[nodiscard]] inline Mat4 rate_jacobian_term(int k, const ProcessSet& rates) {
    return stoichiometric_vector(k) * rates.gradient(k);
}

[[nodiscard]] inline Mat4 rate_jacobian_term(int k, const State& state, const ParameterSet& ps) {
    if (k < 1 || k > kProcesses) {
        throw IndexError("process index " + std::to_string(k) + " outside 1..15");
    }
    return rate_jacobian_term(k, process_rates(state, ps));
}

} // namespace tumorcsp
