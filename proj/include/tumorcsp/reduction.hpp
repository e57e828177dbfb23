#pragma once

// Slow-manifold constraints for N and L, and the reduced models built on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tumorcsp/errors.hpp"
#include "tumorcsp/integrator.hpp"
#include "tumorcsp/kinetics.hpp"
#include "tumorcsp/params.hpp"

namespace tumorcsp {

struct ConstraintValues {
    double N_hat = 0.0;
    double L_hat = 0.0;
};

/// N_hat = eC/(pT) from eC = pNT; L_hat = r2 C T/(qT + m) from r2 C T = qLT + mL.
[[nodiscard]] inline ConstraintValues constraint_values(double T, double C, const ParameterSet& ps) {
    if (!(T > 0.0)) {
        throw DomainError("constraints require T > 0");
    }
    return {ps.e * C / (ps.p * T), ps.r2 * C * T / (ps.q * T + ps.m)};
}

[[nodiscard]] inline ConstraintValues constraint_values(const State& s, const ParameterSet& ps) {
    return constraint_values(s.T, s.C, ps);
}

/// The parameters the leading-order reduced model depends on.
struct EffectiveParameters {
    double a = 0.0;
    double b = 0.0;
    double d = 0.0;
    double l = 0.0;
    double s = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double e_over_p = 0.0;
    double q_over_r2 = 0.0;
    double m_over_r2 = 0.0;

    static constexpr std::size_t count = 10;
    static constexpr std::array<std::string_view, count> names{
        "a", "b", "d", "l", "s", "alpha", "beta", "e/p", "q/r2", "m/r2"};

    [[nodiscard]] static EffectiveParameters from(const ParameterSet& ps) {
        return {ps.a, ps.b, ps.d, ps.l, ps.s, ps.alpha, ps.beta, ps.e / ps.p, ps.q / ps.r2, ps.m / ps.r2};
    }

    [[nodiscard]] std::array<double, count> values() const {
        return {a, b, d, l, s, alpha, beta, e_over_p, q_over_r2, m_over_r2};
    }

    [[nodiscard]] double N_hat(double T, double C) const { return e_over_p * C / T; }
    [[nodiscard]] double L_hat(double T, double C) const { return C * T / (q_over_r2 * T + m_over_r2); }
};

/// Raw parameters the leading-order model never touches.
inline constexpr std::array<std::string_view, 8> kEliminatedParameters{"c", "f", "g", "h", "j", "k", "r1", "u"};

namespace detail {

// Kill coefficient on the constraint: T/L_hat = (q/r2 T + m/r2)/C.
struct ReducedKill {
    double D = 0.0;
    double dD_dT = 0.0;
    double dD_dC = 0.0;
};

inline ReducedKill reduced_kill(double T, double C, const EffectiveParameters& ep) {
    ReducedKill k;
    if (!(C > 0.0)) {
        return k;  // L_hat = 0
    }
    const double x = (ep.q_over_r2 * std::max(T, 0.0) + ep.m_over_r2) / C;
    const double z = ep.s * std::pow(x, ep.l);
    const double one_z = 1.0 + z;
    k.D = ep.d / one_z;
    const double dD_dz = -ep.d / (one_z * one_z);
    k.dD_dT = dD_dz * ep.l * z / x * ep.q_over_r2 / C;
    k.dD_dC = dD_dz * (-ep.l * z / C);
    return k;
}

inline Eigen::Vector2d reduced_leading(const Eigen::Vector2d& y, const EffectiveParameters& ep) {
    const double T = std::max(y[0], 0.0);
    const double C = std::max(y[1], 0.0);
    const auto k = reduced_kill(T, C, ep);
    return {ep.a * T * (1.0 - ep.b * T) - k.D * T, ep.alpha - ep.beta * C};
}

inline Eigen::Matrix2d reduced_leading_jacobian(const Eigen::Vector2d& y, const EffectiveParameters& ep) {
    const double T = std::max(y[0], 0.0);
    const double C = std::max(y[1], 0.0);
    const auto k = reduced_kill(T, C, ep);
    Eigen::Matrix2d J;
    J << ep.a * (1.0 - 2.0 * ep.b * T) - k.D - T * k.dD_dT, -T * k.dD_dC, 0.0, -ep.beta;
    return J;
}

} // namespace detail

/// Leading-order slow system: (dT/dt, dC/dt) with D evaluated at L = L_hat(T, C).
[[nodiscard]] inline Eigen::Vector2d reduced_rhs_leading(double T, double C, const EffectiveParameters& ep) {
    if (!(T > 0.0) || !(C > 0.0)) {
        throw DomainError("reduced model requires T > 0 and C > 0");
    }
    return detail::reduced_leading({T, C}, ep);
}

[[nodiscard]] inline Eigen::Vector2d reduced_rhs_leading(double T, double C, const ParameterSet& ps) {
    return reduced_rhs_leading(T, C, EffectiveParameters::from(ps));
}

/// The four right-hand sides of the higher-order reduced model, bracketed
/// corrections included, with D at the instantaneous (L, T). Order (T, N, L, C).
[[nodiscard]] inline Vec4 reduced_rhs_higher(const State& s, const ParameterSet& ps) {
    if (!(s.T > 0.0) || s.N < 0.0 || s.L < 0.0 || s.C < 0.0) {
        throw DomainError("higher-order reduced model requires T > 0 and N, L, C >= 0");
    }
    const double D = d_saturation(s, ps);
    const double growth = ps.a * s.T * (1.0 - ps.b * s.T);
    const double kill = D * s.T;
    const double source = ps.alpha - ps.beta * s.C;
    const double cd8 = ps.r2 * s.C * s.T - ps.q * s.L * s.T;
    Vec4 out;
    out[kT] = growth - kill - cd8;
    out[kN] = -growth + kill + source + cd8;
    out[kL] = growth - kill + source + cd8;
    out[kC] = source;
    return out;
}

struct ReducedRun {
    Trajectory traj;  // (T, N_hat, L_hat, C); N_hat is +inf where T = 0
    EffectiveParameters effective;
};

/// Integrates the leading-order model from (T0, C0) at time t0 and lifts every
/// output point and dense evaluation to (T, N_hat, L_hat, C).
[[nodiscard]] inline ReducedRun simulate_reduced(double T0, double C0, const ParameterSet& ps,
                                                 const IntegratorConfig& config = {}, double t0 = 0.0) {
    config.validate();
    ps.validate();
    if (!(T0 > 0.0) || !(C0 > 0.0) || !std::isfinite(T0) || !std::isfinite(C0)) {
        throw DomainError("reduced model requires finite T0 > 0 and C0 > 0");
    }
    const auto ep = EffectiveParameters::from(ps);
    const auto grid = config.grid.build(t0, t0 + config.t_end);
    auto f = [&ep](const Eigen::Vector2d& v) { return detail::reduced_leading(v, ep); };
    auto jf = [&ep](const Eigen::Vector2d& v) { return detail::reduced_leading_jacobian(v, ep); };
    const Eigen::Vector2d atol(config.atol[kT], config.atol[kC]);
    auto res = detail::rosenbrock_solve<2>(f, jf, Eigen::Vector2d(T0, C0), grid, config.rtol, atol,
                                           config.max_step, config.initial_step, config.max_steps);

    auto lift = [ep](Vec4& v) {
        const double T = v[kT];
        const double C = v[kC];
        v[kN] = T > 0.0 ? ep.N_hat(T, C) : std::numeric_limits<double>::infinity();
        v[kL] = T > 0.0 ? ep.L_hat(T, C) : 0.0;
    };
    auto embed = [](const Eigen::Vector2d& w) { return Vec4(w[0], 0.0, 0.0, w[1]); };

    ReducedRun run;
    run.effective = ep;
    auto& tr = run.traj;
    tr.model = ModelTag::reduced_leading;
    tr.params = ps;
    tr.t = std::move(res.t);
    tr.y.reserve(res.y.size());
    for (const auto& w : res.y) {
        Vec4 v = embed(w);
        lift(v);
        tr.y.push_back(v);
    }
    tr.segments.reserve(res.segments.size());
    for (const auto& s : res.segments) {
        tr.segments.push_back(DenseSegment{s.t0, s.t1, embed(s.y0), embed(s.y1), embed(s.k3), embed(s.k4)});
    }
    tr.stats = res.stats;
    tr.status = res.status;
    tr.diagnostic = std::move(res.diagnostic);
    tr.atol = config.atol;
    tr.lift = lift;
    return run;
}

struct WindowStats {
    double max_abs = 0.0;
    double mean_abs = 0.0;
    std::size_t samples = 0;
};

struct ConstraintErrors {
    std::vector<double> t;
    std::vector<double> t_over_texp;
    std::vector<double> re_N;  // (N - N_hat)/N
    std::vector<double> re_L;  // (L - L_hat)/L

    /// Statistics of max(|RE_N|, |RE_L|) over lo <= t/t_exp <= hi.
    [[nodiscard]] WindowStats window(double lo, double hi) const {
        WindowStats w;
        double sum = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t_over_texp[i] >= lo && t_over_texp[i] <= hi) {
                const double e = std::max(std::abs(re_N[i]), std::abs(re_L[i]));
                w.max_abs = std::max(w.max_abs, e);
                sum += e;
                ++w.samples;
            }
        }
        w.mean_abs = w.samples ? sum / static_cast<double>(w.samples) : 0.0;
        return w;
    }
};

/// Relative constraint errors at every output point of a full-model trajectory.
/// Points with T = 0 (constraint singular) or N, L = 0 give NaN.
[[nodiscard]] inline ConstraintErrors constraint_errors(const Trajectory& traj, const ParameterSet& ps,
                                                        double t_exp = std::numeric_limits<double>::quiet_NaN()) {
    ConstraintErrors out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto s = traj.state(i);
        out.t.push_back(s.t);
        out.t_over_texp.push_back(s.t / t_exp);
        if (!(s.T > 0.0)) {
            out.re_N.push_back(nan);
            out.re_L.push_back(nan);
            continue;
        }
        const auto c = constraint_values(s, ps);
        out.re_N.push_back(s.N > 0.0 ? (s.N - c.N_hat) / s.N : nan);
        out.re_L.push_back(s.L > 0.0 ? (s.L - c.L_hat) / s.L : nan);
    }
    return out;
}

/// Attractor of a reduced end state, judged on T and C only (N_hat and L_hat
/// are slaved to them).
[[nodiscard]] inline Attractor classify_reduced(const Vec4& y, const std::vector<Equilibrium>& stable,
                                                double tol = 1e-2) {
    for (const auto& e : stable) {
        const Vec4 ev = e.state.vec();
        const double dT = std::abs(y[kT] - ev[kT]) / std::max(std::abs(ev[kT]), 1.0);
        const double dC = std::abs(y[kC] - ev[kC]) / std::max(std::abs(ev[kC]), 1.0);
        if (std::max(dT, dC) < tol) {
            return e.kind == EquilibriumKind::TFE ? Attractor::TFE : Attractor::HTE;
        }
    }
    return Attractor::unresolved;
}

/// Attractor of a reduced run, continuing the reduced model from its end state
/// (up to two more horizons of max(t_end, 400) d) while it is unresolved.
/// An end state with T = 0 is judged by its limit on the tumor-free line.
[[nodiscard]] inline Attractor settle_reduced(const Trajectory& red, const ParameterSet& ps,
                                              const std::vector<Equilibrium>& stable, IntegratorConfig config = {},
                                              double tol = 1e-2) {
    Vec4 y = red.y.back();
    Attractor a = classify_reduced(y, stable, tol);
    config.t_end = std::max(config.t_end, 400.0);
    config.grid.times = {};
    config.grid.log_points = 0;
    config.grid.linear_step = 0.0;
    for (int attempt = 0; attempt < 2 && a == Attractor::unresolved && y[kT] > 0.0; ++attempt) {
        const auto more = simulate_reduced(y[kT], y[kC], ps, config);
        if (!more.traj.ok()) {
            throw DiagnosticError("reduced model integration failed: " + more.traj.diagnostic);
        }
        y = more.traj.y.back();
        a = classify_reduced(y, stable, tol);
    }
    if (a == Attractor::unresolved && y[kT] == 0.0) {
        // T = 0 is invariant and C relaxes to alpha/beta there.
        Vec4 limit = y;
        limit[kC] = ps.alpha / ps.beta;
        a = classify_reduced(limit, stable, tol);
    }
    return a;
}

struct ReducedComparison {
    std::vector<double> t;
    std::vector<Vec4> rel_error;  // |red - full| / max(|full|, 1) per variable
    Vec4 window_max = Vec4::Zero();
    Vec4 window_mean = Vec4::Zero();
    Attractor full_attractor = Attractor::unresolved;
    Attractor reduced_attractor = Attractor::unresolved;
    [[nodiscard]] bool attractor_agreement() const {
        return full_attractor == reduced_attractor && full_attractor != Attractor::unresolved;
    }
};

/// Compares at the full trajectory's output times inside both spans; window
/// statistics cover [window_lo, window_hi] in days.
[[nodiscard]] inline ReducedComparison compare_reduced(const Trajectory& full, const Trajectory& red,
                                                       const std::vector<Equilibrium>& stable, double window_lo,
                                                       double window_hi, double tol = 1e-2) {
    ReducedComparison out;
    Vec4 sum = Vec4::Zero();
    std::size_t n = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        const double t = full.t[i];
        if (t < red.t_begin() || t > red.t_final()) {
            continue;
        }
        const Vec4 a = full.y[i];
        const Vec4 b = red.at(t).vec();
        Vec4 e;
        for (int k = 0; k < kVariables; ++k) {
            e[k] = std::abs(b[k] - a[k]) / std::max(std::abs(a[k]), 1.0);
        }
        out.t.push_back(t);
        out.rel_error.push_back(e);
        if (t >= window_lo && t <= window_hi) {
            out.window_max = out.window_max.cwiseMax(e);
            sum += e;
            ++n;
        }
    }
    if (n > 0) {
        out.window_mean = sum / static_cast<double>(n);
    }
    out.full_attractor = classify_attractor(full.y.back(), stable, tol);
    out.reduced_attractor = classify_reduced(red.y.back(), stable, tol);
    return out;
}

} // namespace tumorcsp
