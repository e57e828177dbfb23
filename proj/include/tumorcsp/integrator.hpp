#pragma once

// Stiff integration of the model with a fourth-order L-stable Rosenbrock method
// (RODAS4 coefficients, as in Hairer & Wanner and Boost.odeint's rosenbrock4),
// per-component absolute tolerances and a dense interpolant kept for every step.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tumorcsp/equilibria.hpp"
#include "tumorcsp/errors.hpp"
#include "tumorcsp/kinetics.hpp"
#include "tumorcsp/parallel.hpp"
#include "tumorcsp/params.hpp"

namespace tumorcsp {

enum class ModelTag { full, reduced_leading, reduced_higher };

[[nodiscard]] inline const char* to_string(ModelTag m) {
    switch (m) {
    case ModelTag::full: return "full";
    case ModelTag::reduced_leading: return "reduced-leading";
    case ModelTag::reduced_higher: return "reduced-higher";
    }
    return "?";
}

/// Reporting times: t0, log-spaced points on [log_start, log_end], then a
/// linear grid with spacing linear_step up to t_end. A non-empty `times`
/// replaces the generated grid (t0 and t_end are always added).
struct OutputGrid {
    double log_start = 1e-4;
    double log_end = 5.0;
    std::size_t log_points = 100;
    double linear_step = 0.05;
    std::vector<double> times;

    [[nodiscard]] std::vector<double> build(double t0, double t_end) const {
        std::vector<double> g{t0};
        if (!times.empty()) {
            for (double t : times) {
                if (t > t0 && t < t_end) {
                    g.push_back(t);
                }
            }
        } else {
            double t_log = t0;
            if (log_points >= 2 && log_start > 0.0 && log_end > log_start) {
                const double a = std::log(log_start);
                const double b = std::log(log_end);
                for (std::size_t i = 0; i < log_points; ++i) {
                    const double t = t0 + std::exp(a + (b - a) * static_cast<double>(i) / (log_points - 1));
                    if (t < t_end) {
                        g.push_back(t);
                        t_log = t;
                    }
                }
            }
            if (linear_step > 0.0) {
                const double start = std::max(t_log, t0 + log_end);
                for (std::size_t i = 1;; ++i) {
                    const double t = start + linear_step * static_cast<double>(i);
                    if (t >= t_end * (1.0 - 1e-12)) {
                        break;
                    }
                    g.push_back(t);
                }
            }
        }
        g.push_back(t_end);
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        return g;
    }
};

struct IntegratorConfig {
    double rtol = 1e-8;
    Vec4 atol = Vec4::Constant(1e-6);
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 1e-6;
    double t_end = 200.0;
    std::size_t max_steps = 5'000'000;
    OutputGrid grid;

    void validate() const {
        if (!(rtol > 0.0) || !(atol.array() > 0.0).all() || !atol.allFinite()) {
            throw ConfigError("tolerances must be positive");
        }
        if (!(t_end > 0.0) || !std::isfinite(t_end)) {
            throw ConfigError("t_end must be positive and finite");
        }
        if (!(max_step > 0.0) || !(initial_step > 0.0)) {
            throw ConfigError("step bounds must be positive");
        }
    }
};

struct SolverStats {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    std::size_t undershoot_rejections = 0;
    std::size_t clipped = 0;
    std::size_t rhs_evaluations = 0;
    std::size_t jacobian_evaluations = 0;
    std::size_t factorizations = 0;
};

inline void to_json(nlohmann::json& j, const SolverStats& s) {
    j = nlohmann::json{{"steps", s.steps},
                       {"rejected", s.rejected},
                       {"undershoot_rejections", s.undershoot_rejections},
                       {"clipped", s.clipped},
                       {"rhs_evaluations", s.rhs_evaluations},
                       {"jacobian_evaluations", s.jacobian_evaluations},
                       {"factorizations", s.factorizations}};
}

enum class IntegrationStatus { ok, step_size_collapse, step_limit, nonfinite };

[[nodiscard]] inline const char* to_string(IntegrationStatus s) {
    switch (s) {
    case IntegrationStatus::ok: return "ok";
    case IntegrationStatus::step_size_collapse: return "step-size collapse";
    case IntegrationStatus::step_limit: return "step limit reached";
    case IntegrationStatus::nonfinite: return "non-finite state";
    }
    return "?";
}

/// One accepted step with its third-order interpolant.
struct DenseSegment {
    double t0 = 0.0;
    double t1 = 0.0;
    Vec4 y0 = Vec4::Zero();
    Vec4 y1 = Vec4::Zero();
    Vec4 k3 = Vec4::Zero();
    Vec4 k4 = Vec4::Zero();

    [[nodiscard]] Vec4 eval(double t) const {
        const double s = (t - t0) / (t1 - t0);
        const double s1 = 1.0 - s;
        return y0 * s1 + s * (y1 + s1 * (k3 + s * k4));
    }
};

struct Trajectory {
    ModelTag model = ModelTag::full;
    ParameterSet params;
    std::vector<double> t;
    std::vector<Vec4> y;
    std::vector<DenseSegment> segments;
    SolverStats stats;
    IntegrationStatus status = IntegrationStatus::ok;
    std::string diagnostic;
    Vec4 atol = Vec4::Constant(1e-6);
    // Maps an interpolated vector to the full state; reduced models use it to
    // rebuild N and L from the constraints.
    std::function<void(Vec4&)> lift;

    [[nodiscard]] bool ok() const { return status == IntegrationStatus::ok; }
    [[nodiscard]] std::size_t size() const { return t.size(); }
    [[nodiscard]] double t_begin() const { return t.front(); }
    [[nodiscard]] double t_final() const { return t.back(); }
    [[nodiscard]] State state(std::size_t i) const { return State::from(y.at(i), t.at(i)); }
    [[nodiscard]] State final_state() const { return state(t.size() - 1); }

    /// State at any t in [t_begin, t_final]; stored states are returned verbatim
    /// at grid times.
    [[nodiscard]] State at(double time) const {
        if (t.empty() || !(time >= t.front() && time <= t.back())) {
            throw DomainError("time " + std::to_string(time) + " outside the trajectory span");
        }
        const auto g = std::lower_bound(t.begin(), t.end(), time);
        if (g != t.end() && *g == time) {
            return state(static_cast<std::size_t>(g - t.begin()));
        }
        if (segments.empty()) {
            throw DomainError("trajectory has no dense output");
        }
        auto it = std::lower_bound(segments.begin(), segments.end(), time,
                                   [](const DenseSegment& s, double v) { return s.t1 < v; });
        if (it == segments.end()) {
            it = std::prev(segments.end());
        }
        Vec4 v = it->eval(time);
        clip_undershoot(v);
        if (lift) {
            lift(v);
        }
        return State::from(v, time);
    }

    /// Segment boundaries and grid times merged, for event scanning.
    [[nodiscard]] std::vector<double> knots() const {
        std::vector<double> k = t;
        k.reserve(t.size() + segments.size() + 1);
        for (const auto& s : segments) {
            k.push_back(s.t0);
        }
        if (!segments.empty()) {
            k.push_back(segments.back().t1);
        }
        std::sort(k.begin(), k.end());
        k.erase(std::unique(k.begin(), k.end()), k.end());
        while (!k.empty() && k.back() > t.back()) {
            k.pop_back();
        }
        return k;
    }

    void clip_undershoot(Vec4& v) const {
        for (int i = 0; i < kVariables; ++i) {
            if (v[i] < 0.0 && -v[i] <= atol[i]) {
                v[i] = 0.0;
            }
        }
    }
};

[[nodiscard]] inline State evaluate_dense(const Trajectory& traj, double t) { return traj.at(t); }

namespace detail {

struct Rodas4 {
    static constexpr double gamma = 0.25;
    static constexpr double c21 = -5.6688, a21 = 1.544;
    static constexpr double c31 = -2.430093356833875, c32 = -0.2063599157091915;
    static constexpr double a31 = 0.9466785280815826, a32 = 0.2557011698983284;
    static constexpr double c41 = -0.1073529058151375, c42 = -9.594562251023355, c43 = -20.47028614809616;
    static constexpr double a41 = 3.314825187068521, a42 = 2.896124015972201, a43 = 0.9986419139977817;
    static constexpr double c51 = 7.496443313967647, c52 = -10.24680431464352, c53 = -33.99990352819905,
                            c54 = 11.70890893206160;
    static constexpr double a51 = 1.221224509226641, a52 = 6.019134481288629, a53 = 12.53708332932087,
                            a54 = -0.6878860361058950;
    static constexpr double c61 = 8.083246795921522, c62 = -7.981132988064893, c63 = -31.52159432874371,
                            c64 = 16.31930543123136, c65 = -6.058818238834054;
    static constexpr double d21 = 10.12623508344586, d22 = -7.487995877610167, d23 = -34.80091861555747,
                            d24 = -7.992771707568823, d25 = 1.025137723295662;
    static constexpr double d31 = -0.6762803392801253, d32 = 6.087714651680015, d33 = 16.43084320892478,
                            d34 = 24.76722511418386, d35 = -6.594389125716872;
};

template <int Dim>
struct RosenbrockResult {
    using Vec = Eigen::Matrix<double, Dim, 1>;
    std::vector<double> t;
    std::vector<Vec> y;
    struct Segment {
        double t0, t1;
        Vec y0, y1, k3, k4;
        [[nodiscard]] Vec eval(double tt) const {
            const double s = (tt - t0) / (t1 - t0);
            const double s1 = 1.0 - s;
            return y0 * s1 + s * (y1 + s1 * (k3 + s * k4));
        }
    };
    std::vector<Segment> segments;
    SolverStats stats;
    IntegrationStatus status = IntegrationStatus::ok;
    std::string diagnostic;
};

/// Integrates the autonomous system y' = f(y) with Jacobian jac(y) through the
/// strictly increasing `grid`. Accepted states with components in (-atol, 0)
/// are clipped to 0; a larger undershoot rejects the step.
template <int Dim, class F, class JF>
RosenbrockResult<Dim> rosenbrock_solve(F&& f, JF&& jac, const Eigen::Matrix<double, Dim, 1>& y_start,
                                       const std::vector<double>& grid, double rtol,
                                       const Eigen::Matrix<double, Dim, 1>& atol, double max_step,
                                       double initial_step, std::size_t max_steps) {
    using Vec = Eigen::Matrix<double, Dim, 1>;
    using Mat = Eigen::Matrix<double, Dim, Dim>;
    using C = Rodas4;
    RosenbrockResult<Dim> out;
    const double t_end = grid.back();
    double t = grid.front();
    Vec y = y_start;
    out.t.push_back(t);
    out.y.push_back(y);
    std::size_t next = 1;

    double dt = std::min({initial_step, max_step, t_end - t});
    bool last_rejected = false;
    Mat J;
    bool have_jac = false;
    Eigen::PartialPivLU<Mat> lu;
    auto rhs_count = [&](const Vec& v) {
        ++out.stats.rhs_evaluations;
        return f(v);
    };

    while (t < t_end) {
        if (out.stats.steps + out.stats.rejected >= max_steps) {
            out.status = IntegrationStatus::step_limit;
            out.diagnostic = "step limit reached at t = " + std::to_string(t);
            return out;
        }
        bool final_step = false;
        dt = std::min(dt, max_step);
        if (t + dt >= t_end || t + 1.01 * dt >= t_end) {
            dt = t_end - t;
            final_step = true;
        }
        if (dt <= 1e-14 * std::max(1.0, std::abs(t))) {
            out.status = IntegrationStatus::step_size_collapse;
            out.diagnostic = "step size collapsed to " + std::to_string(dt) + " at t = " + std::to_string(t);
            return out;
        }
        if (!have_jac) {
            J = jac(y);
            ++out.stats.jacobian_evaluations;
            have_jac = true;
        }
        const Mat W = Mat::Identity() / (C::gamma * dt) - J;
        lu.compute(W);
        ++out.stats.factorizations;

        const Vec f0 = rhs_count(y);
        const Vec g1 = lu.solve(f0);
        const Vec g2 = lu.solve(rhs_count(y + C::a21 * g1) + C::c21 * g1 / dt);
        const Vec g3 = lu.solve(rhs_count(y + C::a31 * g1 + C::a32 * g2) + (C::c31 * g1 + C::c32 * g2) / dt);
        const Vec g4 = lu.solve(rhs_count(y + C::a41 * g1 + C::a42 * g2 + C::a43 * g3) +
                                (C::c41 * g1 + C::c42 * g2 + C::c43 * g3) / dt);
        const Vec g5 = lu.solve(rhs_count(y + C::a51 * g1 + C::a52 * g2 + C::a53 * g3 + C::a54 * g4) +
                                (C::c51 * g1 + C::c52 * g2 + C::c53 * g3 + C::c54 * g4) / dt);
        const Vec y5 = y + C::a51 * g1 + C::a52 * g2 + C::a53 * g3 + C::a54 * g4 + g5;
        const Vec err = lu.solve(rhs_count(y5) + (C::c61 * g1 + C::c62 * g2 + C::c63 * g3 + C::c64 * g4 +
                                                  C::c65 * g5) / dt);
        Vec y_new = y5 + err;

        double en = std::numeric_limits<double>::infinity();
        if (y_new.allFinite() && err.allFinite()) {
            const Vec sc = atol.array() + rtol * y.cwiseAbs().cwiseMax(y_new.cwiseAbs()).array();
            en = std::sqrt((err.array() / sc.array()).square().mean());
        }
        if (!(en <= 1.0)) {
            ++out.stats.rejected;
            const double fac = std::isfinite(en) ? std::max(0.2, 0.9 * std::pow(en, -0.25)) : 0.1;
            dt *= fac;
            last_rejected = true;
            continue;
        }
        bool undershoot = false;
        for (int i = 0; i < y_new.size(); ++i) {
            if (y_new[i] < 0.0) {
                if (-y_new[i] <= atol[i]) {
                    y_new[i] = 0.0;
                    ++out.stats.clipped;
                } else {
                    undershoot = true;
                }
            }
        }
        if (undershoot) {
            ++out.stats.rejected;
            ++out.stats.undershoot_rejections;
            dt *= 0.5;
            last_rejected = true;
            continue;
        }

        const double t_new = final_step ? t_end : t + dt;
        typename RosenbrockResult<Dim>::Segment seg{t, t_new, y, y_new,
                                                    C::d21 * g1 + C::d22 * g2 + C::d23 * g3 + C::d24 * g4 +
                                                        C::d25 * g5,
                                                    C::d31 * g1 + C::d32 * g2 + C::d33 * g3 + C::d34 * g4 +
                                                        C::d35 * g5};
        while (next < grid.size() && grid[next] <= t_new) {
            Vec v = grid[next] == t_new ? y_new : seg.eval(grid[next]);
            for (int i = 0; i < v.size(); ++i) {
                if (v[i] < 0.0 && -v[i] <= atol[i]) {
                    v[i] = 0.0;
                }
            }
            out.t.push_back(grid[next]);
            out.y.push_back(v);
            ++next;
        }
        out.segments.push_back(seg);
        ++out.stats.steps;
        t = t_new;
        y = y_new;
        have_jac = false;

        double fac = std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(en, 1e-16), -0.25)));
        if (last_rejected) {
            fac = std::min(fac, 1.0);
        }
        last_rejected = false;
        dt *= fac;
    }
    return out;
}

inline void check_initial(const Vec4& y0) {
    if (!y0.allFinite() || (y0.array() < 0.0).any()) {
        throw DomainError("initial state must be finite with all populations >= 0");
    }
}

} // namespace detail

/// Integrates the full model from y0 (time y0.t) to y0.t + config.t_end.
[[nodiscard]] inline Trajectory integrate(const State& y0, const ParameterSet& ps, const IntegratorConfig& config = {}) {
    config.validate();
    ps.validate();
    const Vec4 v0 = y0.vec();
    detail::check_initial(v0);
    const auto grid = config.grid.build(y0.t, y0.t + config.t_end);
    auto f = [&ps](const Vec4& v) { return rhs(v, ps, Domain::limit); };
    auto jf = [&ps](const Vec4& v) { return jacobian(v, ps, Domain::limit); };
    auto res = detail::rosenbrock_solve<4>(f, jf, v0, grid, config.rtol, config.atol, config.max_step,
                                           config.initial_step, config.max_steps);
    Trajectory tr;
    tr.model = ModelTag::full;
    tr.params = ps;
    tr.t = std::move(res.t);
    tr.y = std::move(res.y);
    tr.stats = res.stats;
    tr.status = res.status;
    tr.diagnostic = std::move(res.diagnostic);
    tr.atol = config.atol;
    tr.segments.reserve(res.segments.size());
    for (const auto& s : res.segments) {
        tr.segments.push_back(DenseSegment{s.t0, s.t1, s.y0, s.y1, s.k3, s.k4});
    }
    return tr;
}

/// Root of event(state) along the dense output, bisected to `tol` days. Scans
/// segment boundaries and grid times from t_from on; returns the first crossing.
template <class Event>
[[nodiscard]] std::optional<double> locate_event(const Trajectory& traj, Event&& event, double tol = 1e-6,
                                                 double t_from = -std::numeric_limits<double>::infinity()) {
    const auto knots = traj.knots();
    std::optional<double> prev_t;
    double prev_v = 0.0;
    for (double tk : knots) {
        if (tk < t_from) {
            continue;
        }
        const double v = event(traj.at(tk));
        if (v == 0.0) {
            return tk;
        }
        if (prev_t && (v < 0.0) != (prev_v < 0.0)) {
            double lo = *prev_t;
            double hi = tk;
            const bool lo_neg = prev_v < 0.0;
            while (hi - lo > tol) {
                const double mid = 0.5 * (lo + hi);
                const double vm = event(traj.at(mid));
                if (vm == 0.0) {
                    return mid;
                }
                ((vm < 0.0) == lo_neg ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
        prev_t = tk;
        prev_v = v;
    }
    return std::nullopt;
}

enum class Attractor { TFE, HTE, unresolved };

[[nodiscard]] inline const char* to_string(Attractor a) {
    switch (a) {
    case Attractor::TFE: return "TFE";
    case Attractor::HTE: return "HTE";
    case Attractor::unresolved: return "unresolved";
    }
    return "?";
}

/// Stable feasible equilibria (TFE first, then HTE by T* ascending).
[[nodiscard]] inline std::vector<Equilibrium> stable_equilibria(const ParameterSet& ps) {
    std::vector<Equilibrium> out;
    const auto [e1, e2] = tfe(ps);
    (void)e2;
    if (e1.stable) {
        out.push_back(e1);
    }
    for (const auto& e : find_hte(ps)) {
        if (e.stable) {
            out.push_back(e);
        }
    }
    return out;
}

/// Largest componentwise |y_i - e_i| / max(|e_i|, 1 cell).
[[nodiscard]] inline double relative_distance(const Vec4& y, const Vec4& e) {
    double worst = 0.0;
    for (int i = 0; i < kVariables; ++i) {
        worst = std::max(worst, std::abs(y[i] - e[i]) / std::max(std::abs(e[i]), 1.0));
    }
    return worst;
}

[[nodiscard]] inline Attractor classify_attractor(const Vec4& y, const std::vector<Equilibrium>& stable,
                                                  double tol = 1e-2) {
    for (const auto& e : stable) {
        if (relative_distance(y, e.state.vec()) < tol) {
            return e.kind == EquilibriumKind::TFE ? Attractor::TFE : Attractor::HTE;
        }
    }
    return Attractor::unresolved;
}

struct AttractorRun {
    Attractor attractor = Attractor::unresolved;
    double t_end = 0.0;  // horizon actually integrated
    Vec4 final_state = Vec4::Zero();
};

/// Integrates to config.t_end and classifies the end state; if it is not yet
/// within tol of a stable equilibrium, integrates once more to 3 t_end.
[[nodiscard]] inline AttractorRun run_to_attractor(const State& y0, const ParameterSet& ps,
                                                   const std::vector<Equilibrium>& stable,
                                                   IntegratorConfig config = {}, double tol = 1e-2) {
    config.grid.times = {};
    config.grid.log_points = 0;
    config.grid.linear_step = 0.0;
    AttractorRun run;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto tr = integrate(y0, ps, config);
        if (!tr.ok()) {
            throw DiagnosticError("integration failed: " + tr.diagnostic);
        }
        run.final_state = tr.y.back();
        run.t_end = config.t_end;
        run.attractor = classify_attractor(run.final_state, stable, tol);
        if (run.attractor != Attractor::unresolved) {
            break;
        }
        config.t_end *= 3.0;
    }
    return run;
}

struct ThresholdResult {
    double threshold = 0.0;  // smallest whole-cell T(0) reaching the HTE side's attractor
    double below = 0.0;      // threshold - 1, reaching the other attractor
    std::size_t runs = 0;
};

/// Bisection on whole-cell T(0) between starts that reach different attractors,
/// ending when the bracket is one cell wide. With jobs > 1 each round classifies
/// `jobs` interior points concurrently and keeps the sub-bracket with the first
/// class change.
[[nodiscard]] inline ThresholdResult basin_threshold(double N0, double L0, double C0, const ParameterSet& ps,
                                                     std::pair<double, double> bracket,
                                                     const IntegratorConfig& config = {}, unsigned jobs = 1) {
    double lo = std::floor(bracket.first);
    double hi = std::ceil(bracket.second);
    if (!(lo > 0.0) || !(hi > lo)) {
        throw ConfigError("threshold bracket must satisfy 0 < low < high");
    }
    const auto stable = stable_equilibria(ps);
    ThresholdResult res;
    auto classify = [&](double T0) {
        return run_to_attractor(State{0.0, T0, N0, L0, C0}, ps, stable, config).attractor;
    };
    const Attractor a_lo = classify(lo);
    const Attractor a_hi = classify(hi);
    res.runs += 2;
    if (a_lo == Attractor::unresolved || a_hi == Attractor::unresolved) {
        throw DiagnosticError("bracket endpoint did not settle on a stable equilibrium");
    }
    if (a_lo == a_hi) {
        throw ConfigError(std::string("both bracket endpoints reach the ") + to_string(a_lo));
    }
    const unsigned k = resolve_jobs(jobs);
    while (hi - lo > 1.0) {
        std::vector<double> pts;
        for (unsigned i = 0; i < k; ++i) {
            const double p = std::floor(lo + (hi - lo) * static_cast<double>(i + 1) / (k + 1));
            if (p > lo && p < hi && (pts.empty() || p > pts.back())) {
                pts.push_back(p);
            }
        }
        const auto cls = parallel_map(pts.size(), jobs, [&](std::size_t i) { return classify(pts[i]); });
        res.runs += pts.size();
        double new_lo = lo;
        double new_hi = hi;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (cls[i] == Attractor::unresolved) {
                throw DiagnosticError("run from T(0) = " + std::to_string(pts[i]) + " did not settle");
            }
            if (cls[i] == a_lo) {
                new_lo = pts[i];
            } else {
                new_hi = pts[i];
                break;
            }
        }
        lo = new_lo;
        hi = new_hi;
    }
    res.threshold = hi;
    res.below = lo;
    return res;
}

} // namespace tumorcsp
