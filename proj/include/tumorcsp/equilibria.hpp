#pragma once

// Fixed points of the model. The tumor-free equilibrium is closed-form; high-tumor
// equilibria are reduced to a scalar root problem in T* (N*, D*, L* all follow
// from T*) and solved by grid bracketing plus bisection.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tumorcsp/errors.hpp"
#include "tumorcsp/kinetics.hpp"
#include "tumorcsp/parallel.hpp"
#include "tumorcsp/params.hpp"

namespace tumorcsp {

enum class EquilibriumKind { TFE, HTE };

[[nodiscard]] inline const char* to_string(EquilibriumKind k) {
    return k == EquilibriumKind::TFE ? "TFE" : "HTE";
}

using Eigenvalues4 = std::array<std::complex<double>, kVariables>;

struct Equilibrium {
    EquilibriumKind kind = EquilibriumKind::HTE;
    State state;
    Eigenvalues4 eigenvalues{};
    bool stable = false;
    bool feasible = false;
};

inline constexpr double kStabilityMargin = 1e-12;

/// Tumor-free NK level alpha e / (beta f).
[[nodiscard]] inline double tfe_nk(const ParameterSet& ps) { return ps.alpha * ps.e / (ps.beta * ps.f); }

/// {a - d - alpha c e/(beta f), -f, -m, -beta}: eigenvalues at the feasible TFE,
/// with the kill term at its T -> 0 saturation D = d.
[[nodiscard]] inline std::array<double, kVariables> tfe_eigenvalues(const ParameterSet& ps) {
    return {ps.a - ps.d - ps.alpha * ps.c * ps.e / (ps.beta * ps.f), -ps.f, -ps.m, -ps.beta};
}

/// (a - d) beta f < alpha c e.
[[nodiscard]] inline bool tfe_stable_predicate(const ParameterSet& ps) {
    return (ps.a - ps.d) * ps.beta * ps.f < ps.alpha * ps.c * ps.e;
}

/// Jacobian at the feasible TFE, taking T -> 0 before L -> 0 (so D = d).
[[nodiscard]] inline Mat4 tfe_jacobian(const ParameterSet& ps) {
    const Vec4 y(0.0, tfe_nk(ps), std::numeric_limits<double>::min(), ps.alpha / ps.beta);
    return jacobian(y, ps, Domain::limit);
}

[[nodiscard]] inline Eigenvalues4 eigenvalues_of(const Mat4& J) {
    Eigen::EigenSolver<Mat4> es(J, false);
    if (es.info() != Eigen::Success) {
        throw DiagnosticError("eigenvalue solver did not converge");
    }
    Eigenvalues4 out;
    for (int i = 0; i < kVariables; ++i) {
        out[i] = es.eigenvalues()[i];
    }
    std::sort(out.begin(), out.end(), [](auto x, auto y) {
        return x.real() != y.real() ? x.real() > y.real() : x.imag() > y.imag();
    });
    return out;
}

[[nodiscard]] inline bool all_stable(const Eigenvalues4& ev, double margin = kStabilityMargin) {
    return std::all_of(ev.begin(), ev.end(), [margin](auto z) { return z.real() < -margin; });
}

/// Fills eigenvalues and the stability verdict. TFE states use the closed-form
/// spectrum; HTE states use the eigensolver on the analytic Jacobian.
[[nodiscard]] inline Equilibrium classify_stability(Equilibrium eq, const ParameterSet& ps,
                                                    double margin = kStabilityMargin) {
    if (eq.kind == EquilibriumKind::TFE) {
        const auto lam = tfe_eigenvalues(ps);
        for (int i = 0; i < kVariables; ++i) {
            eq.eigenvalues[i] = lam[i];
        }
        if (eq.state.L < 0.0) {
            // y*2: the L row decouples at T = 0 with dL/dL = -m - 2 u N L* = +m.
            eq.eigenvalues[2] = ps.m;
        }
    } else {
        eq.eigenvalues = eigenvalues_of(jacobian(eq.state.vec(), ps, Domain::limit));
    }
    eq.stable = all_stable(eq.eigenvalues, margin);
    return eq;
}

/// The feasible TFE y*1 = (0, alpha e/(beta f), 0, alpha/beta) and the infeasible
/// y*2 with L* = -m f beta/(u e alpha).
[[nodiscard]] inline std::pair<Equilibrium, Equilibrium> tfe(const ParameterSet& ps) {
    const double N0 = tfe_nk(ps);
    const double C0 = ps.alpha / ps.beta;
    Equilibrium e1;
    e1.kind = EquilibriumKind::TFE;
    e1.state = State{0.0, 0.0, N0, 0.0, C0};
    e1.feasible = true;
    Equilibrium e2 = e1;
    e2.state.L = -ps.m * ps.f * ps.beta / (ps.u * ps.e * ps.alpha);
    e2.feasible = false;
    return {classify_stability(e1, ps), classify_stability(e2, ps)};
}

/// N* as a function of T* from the NK balance.
[[nodiscard]] inline double n_star(double T, const ParameterSet& ps) {
    if (!(T > 0.0)) {
        throw DomainError("n_star requires T* > 0");
    }
    const double T2 = T * T;
    const double den = ps.f * ps.h + ps.h * ps.p * T + (ps.f - ps.g) * T2 + ps.p * T2 * T;
    if (!(den > 0.0)) {
        throw DomainError("n_star denominator is not positive at T* = " + std::to_string(T));
    }
    return ps.alpha * ps.e * (ps.h + T2) / (ps.beta * den);
}

/// Positive root of a2 L^2 + a1 L + a0 = 0 for a2 < 0 < a0, without cancellation.
[[nodiscard]] inline double positive_quadratic_root(double a2, double a1, double a0) {
    const double disc = a1 * a1 - 4.0 * a2 * a0;
    if (disc < 0.0) {
        throw DomainError("negative discriminant in the L* quadratic");
    }
    const double sq = std::sqrt(disc);
    return a1 > 0.0 ? (a1 + sq) / (-2.0 * a2) : 2.0 * a0 / (sq - a1);
}

/// Pieces of the scalar HTE residual at one T*.
struct HteResidual {
    double value = 0.0;   // L_D - L_quad, or a signed sentinel when infeasible
    bool feasible = false;
    double T = 0.0;
    double N = 0.0;
    double D = 0.0;
    double L_D = 0.0;     // L that gives kill coefficient D at this T
    double L_quad = 0.0;  // positive root of the CD8+ balance quadratic
    double q2 = 0.0, q1 = 0.0, q0 = 0.0;  // quadratic coefficients
};

// Sentinels carry the sign of the residual's limit at the feasibility edge:
// L_D -> 0 as D* -> 0 (residual < 0) and L_D -> inf as D* -> d (residual > 0).
inline constexpr double kResidualSentinel = std::numeric_limits<double>::max();

[[nodiscard]] inline HteResidual hte_residual_detail(double T, const ParameterSet& ps) {
    if (!(T > 0.0)) {
        throw DomainError("hte_residual requires T* > 0");
    }
    HteResidual r;
    r.T = T;
    try {
        r.N = n_star(T, ps);
    } catch (const DomainError&) {
        r.value = -kResidualSentinel;
        return r;
    }
    r.D = ps.a * (1.0 - ps.b * T) - ps.c * r.N;
    if (!(r.D > 0.0)) {
        r.value = -kResidualSentinel;
        return r;
    }
    if (!(r.D < ps.d)) {
        r.value = kResidualSentinel;
        return r;
    }
    r.L_D = T * std::pow(ps.s * r.D / (ps.d - r.D), 1.0 / ps.l);
    const double C = ps.alpha / ps.beta;
    const double DT2 = (r.D * T) * (r.D * T);
    r.q2 = -ps.u * r.N;
    r.q1 = -ps.m + ps.j * DT2 / (ps.k + DT2) - ps.q * T;
    r.q0 = (ps.r1 * r.N + ps.r2 * C) * T;
    r.L_quad = positive_quadratic_root(r.q2, r.q1, r.q0);
    r.value = r.L_D - r.L_quad;
    r.feasible = true;
    return r;
}

[[nodiscard]] inline double hte_residual(double T, const ParameterSet& ps) {
    return hte_residual_detail(T, ps).value;
}

struct HteSearch {
    double low = 1.0;
    double high = 1e10;
    std::size_t grid_points = 400;
    double rel_tol = 1e-10;
    unsigned jobs = 1;
};

namespace detail {

inline constexpr double kResidualRelTol = 1e-12;

// Bisects until the bracket is below rel_tol and the residual has converged
// relative to L*, or the bracket cannot shrink further. Near T* = 1/b the
// residual is steep enough in T* that a 1e-10 bracket alone is not sufficient.
inline double bisect_residual(double lo, double hi, double f_lo, const ParameterSet& ps, double rel_tol) {
    double best = 0.5 * (lo + hi);
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        best = mid;
        const auto r = hte_residual_detail(mid, ps);
        if (r.value == 0.0) {
            return mid;
        }
        if ((hi - lo) <= rel_tol * lo && r.feasible && std::abs(r.value) <= kResidualRelTol * r.L_quad) {
            return mid;
        }
        if ((r.value < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = r.value;
        } else {
            hi = mid;
        }
    }
    return best;
}

} // namespace detail

/// Feasible high-tumor equilibria with T* in [low, high), sorted by T* ascending.
[[nodiscard]] inline std::vector<Equilibrium> find_hte(const ParameterSet& ps, const HteSearch& cfg = {}) {
    if (!(cfg.low > 0.0) || !(cfg.high > cfg.low) || cfg.grid_points < 2) {
        throw ConfigError("find_hte needs 0 < low < high and at least 2 grid points");
    }
    const std::size_t n = cfg.grid_points;
    const double l0 = std::log(cfg.low);
    const double l1 = std::log(cfg.high);
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = i + 1 == n ? cfg.high : std::exp(l0 + (l1 - l0) * static_cast<double>(i) / (n - 1));
    }
    grid.front() = cfg.low;
    const auto f = parallel_map(n, cfg.jobs, [&](std::size_t i) { return hte_residual(grid[i], ps); });

    std::vector<Equilibrium> out;
    const double C = ps.alpha / ps.beta;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const bool exact = f[i] == 0.0;
        if (!exact && (f[i + 1] == 0.0 || (f[i] < 0.0) == (f[i + 1] < 0.0))) {
            continue;
        }
        const double Ts = exact ? grid[i] : detail::bisect_residual(grid[i], grid[i + 1], f[i], ps, cfg.rel_tol);
        const auto r = hte_residual_detail(Ts, ps);
        // A sign change across a sentinel edge or a pole is not a root.
        if (!r.feasible || std::abs(r.value) > 1e-6 * std::max(r.L_quad, 1.0)) {
            continue;
        }
        Equilibrium eq;
        eq.kind = EquilibriumKind::HTE;
        eq.state = State{0.0, Ts, r.N, r.L_quad, C};
        eq.feasible = eq.state.feasible();
        if (!eq.feasible) {
            continue;
        }
        out.push_back(classify_stability(eq, ps));
    }
    return out;
}

struct BifurcationSample {
    double value = 0.0;
    int branch_id = 0;  // 0 = TFE, 1.. = HTE ordered by T* descending
    double T_star = 0.0;
    bool stable = false;
    EquilibriumKind kind = EquilibriumKind::TFE;
};

struct BifurcationBranch {
    std::string parameter;
    int branch_id = 0;
    EquilibriumKind kind = EquilibriumKind::TFE;
    std::vector<BifurcationSample> samples;
};

struct BifurcationScan {
    std::string parameter;
    std::vector<double> values;
    std::vector<BifurcationBranch> branches;
    std::optional<double> transcritical;  // TFE stability flip, refined by bisection on lambda_1
    std::optional<double> saddle_node;    // last swept value with two feasible HTE

    /// All samples ordered by (parameter value, branch id).
    [[nodiscard]] std::vector<BifurcationSample> rows() const {
        std::vector<BifurcationSample> out;
        for (const auto& b : branches) {
            out.insert(out.end(), b.samples.begin(), b.samples.end());
        }
        std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
            return x.value != y.value ? x.value < y.value : x.branch_id < y.branch_id;
        });
        return out;
    }
};

struct SweepRange {
    double from = 0.0;
    double to = 0.0;
    std::size_t steps = 2;
    bool log_spaced = false;
};

[[nodiscard]] inline std::vector<double> sweep_values(const SweepRange& r) {
    if (r.steps < 2) {
        throw ConfigError("sweep needs at least 2 steps");
    }
    if (r.log_spaced && !(r.from > 0.0 && r.to > 0.0)) {
        throw ConfigError("log-spaced sweep needs positive bounds");
    }
    std::vector<double> v(r.steps);
    for (std::size_t i = 0; i < r.steps; ++i) {
        const double w = static_cast<double>(i) / (r.steps - 1);
        v[i] = r.log_spaced ? std::exp(std::log(r.from) + w * (std::log(r.to) - std::log(r.from)))
                            : r.from + w * (r.to - r.from);
    }
    v.front() = r.from;
    v.back() = r.to;
    std::sort(v.begin(), v.end());
    return v;
}

[[nodiscard]] inline BifurcationScan bifurcation_scan(const ParameterSet& base, const std::string& parameter,
                                                      const SweepRange& range, HteSearch search = {}) {
    if (!ParameterSet::has(parameter)) {
        throw ConfigError("unknown parameter '" + parameter + "'");
    }
    BifurcationScan scan;
    scan.parameter = parameter;
    scan.values = sweep_values(range);
    const std::size_t n = scan.values.size();

    auto with = [&](double v) {
        ParameterSet p = base;
        p[parameter] = v;
        return p;
    };
    for (double v : scan.values) {
        with(v).validate();
    }

    const unsigned jobs = search.jobs;
    search.jobs = 1;
    const auto hte = parallel_map(n, jobs, [&](std::size_t i) { return find_hte(with(scan.values[i]), search); });

    std::size_t max_branches = 0;
    for (const auto& h : hte) {
        max_branches = std::max(max_branches, h.size());
    }
    scan.branches.resize(max_branches + 1);
    for (std::size_t b = 0; b <= max_branches; ++b) {
        scan.branches[b].parameter = parameter;
        scan.branches[b].branch_id = static_cast<int>(b);
        scan.branches[b].kind = b == 0 ? EquilibriumKind::TFE : EquilibriumKind::HTE;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double v = scan.values[i];
        const auto [e1, e2] = tfe(with(v));
        (void)e2;
        scan.branches[0].samples.push_back({v, 0, 0.0, e1.stable, EquilibriumKind::TFE});
        auto eqs = hte[i];
        std::sort(eqs.begin(), eqs.end(), [](const auto& x, const auto& y) { return x.state.T > y.state.T; });
        for (std::size_t b = 0; b < eqs.size(); ++b) {
            scan.branches[b + 1].samples.push_back(
                {v, static_cast<int>(b + 1), eqs[b].state.T, eqs[b].stable, EquilibriumKind::HTE});
        }
    }

    const auto& tfe_samples = scan.branches[0].samples;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (tfe_samples[i].stable != tfe_samples[i + 1].stable) {
            auto lambda1 = [&](double v) { return tfe_eigenvalues(with(v))[0]; };
            double lo = scan.values[i];
            double hi = scan.values[i + 1];
            const bool lo_neg = lambda1(lo) < 0.0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) {
                    break;
                }
                ((lambda1(mid) < 0.0) == lo_neg ? lo : hi) = mid;
            }
            scan.transcritical = 0.5 * (lo + hi);
            break;
        }
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (hte[i].size() >= 2 && hte[i + 1].size() < 2) {
            scan.saddle_node = scan.values[i];
        }
    }
    return scan;
}

} // namespace tumorcsp
