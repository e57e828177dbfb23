#pragma once

// Shared oracles and generators for the unit suites. Nothing in here calls the
// analytic derivative code it is used to check.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "tumorcsp/kinetics.hpp"

namespace tumorcsp::testing {

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log10(lo), std::log10(hi));
    return std::pow(10.0, u(rng));
}

/// Feasible states with T spanning 1 .. 1e10 cells.
inline std::vector<State> random_states(std::size_t count, std::uint64_t seed = 20240917) {
    std::mt19937_64 rng(seed);
    std::vector<State> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        State s;
        s.T = log_uniform(rng, 1.0, 1e10);
        s.N = log_uniform(rng, 1.0, 1e6);
        s.L = log_uniform(rng, 1.0, 1e8);
        s.C = log_uniform(rng, 1e8, 1e11);
        out.push_back(s);
    }
    return out;
}

/// Brute-force vector field: sum over processes of S_k R^k, column by column.
inline Vec4 brute_force_rhs(const State& s, const ParameterSet& ps) {
    const auto pr = process_rates(s, ps);
    Vec4 g = Vec4::Zero();
    for (int k = 1; k <= kProcesses; ++k) {
        for (int i = 0; i < kVariables; ++i) {
            g[i] += kStoichiometry[i][k - 1] * pr.rate(k);
        }
    }
    return g;
}

/// Central differences of each rate law separately (relative step `rel`),
/// as a 15x4 matrix whose row k-1 approximates grad R^k. Differencing the
/// individual rates avoids the cancellation between large opposing terms that
/// differencing the summed vector field would suffer.
inline Eigen::Matrix<double, kProcesses, kVariables> fd_rate_gradients(const State& s, const ParameterSet& ps,
                                                                     double rel = 1e-6) {
    Eigen::Matrix<double, kProcesses, kVariables> G;
    const Vec4 y = s.vec();
    for (int j = 0; j < kVariables; ++j) {
        const double h = rel * std::max(std::abs(y[j]), 1.0);
        Vec4 yp = y;
        Vec4 ym = y;
        yp[j] += h;
        ym[j] -= h;
        const auto rp = process_rates(State::from(yp), ps);
        const auto rm = process_rates(State::from(ym), ps);
        for (int k = 1; k <= kProcesses; ++k) {
            G(k - 1, j) = (rp.rate(k) - rm.rate(k)) / (2.0 * h);
        }
    }
    return G;
}

struct FdJacobian {
    Mat4 J;      // finite-difference Jacobian
    Mat4 scale;  // sum_k |S_ik| |dR^k/dy_j|, the cancellation-free magnitude of each entry
    Mat4 noise;  // round-off bound of the central differences, sum_k |S_ik| 8 eps |R^k| / (2 h_j)
};

inline FdJacobian fd_jacobian(const State& s, const ParameterSet& ps, double rel = 1e-6) {
    const auto G = fd_rate_gradients(s, ps, rel);
    StoichMatrix S;
    for (int i = 0; i < kVariables; ++i) {
        for (int k = 0; k < kProcesses; ++k) {
            S(i, k) = kStoichiometry[i][k];
        }
    }
    const auto pr = process_rates(s, ps);
    const Vec4 y = s.vec();
    Mat4 noise;
    for (int j = 0; j < kVariables; ++j) {
        const double h = rel * std::max(std::abs(y[j]), 1.0);
        for (int i = 0; i < kVariables; ++i) {
            double acc = 0.0;
            for (int k = 0; k < kProcesses; ++k) {
                acc += std::abs(S(i, k)) * std::abs(pr.rates[k]);
            }
            noise(i, j) = 8.0 * std::numeric_limits<double>::epsilon() * acc / (2.0 * h);
        }
    }
    return FdJacobian{S * G, S.cwiseAbs() * G.cwiseAbs(), noise};
}

/// Largest entrywise (|J - J_fd| - noise)+ / scale over the 16 entries.
inline double fd_relative_error(const Mat4& J, const FdJacobian& fd) {
    double worst = 0.0;
    for (int i = 0; i < kVariables; ++i) {
        for (int j = 0; j < kVariables; ++j) {
            const double diff = std::max(std::abs(J(i, j) - fd.J(i, j)) - fd.noise(i, j), 0.0);
            const double scale = fd.scale(i, j);
            worst = std::max(worst, scale > 0.0 ? diff / scale : diff);
        }
    }
    return worst;
}

inline double relative_error(const Vec4& a, const Vec4& b) {
    const double scale = b.cwiseAbs().maxCoeff();
    return (a - b).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

} // namespace tumorcsp::testing
