#pragma once

// Computational Singular Perturbation analysis with the leading-order basis:
// right eigenvectors of the Jacobian as columns alpha_n, the rows beta^n of the
// inverse as the dual basis. Modes are sorted by timescale, fastest first.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "tumorcsp/errors.hpp"
#include "tumorcsp/integrator.hpp"
#include "tumorcsp/kinetics.hpp"
#include "tumorcsp/parallel.hpp"
#include "tumorcsp/params.hpp"

namespace tumorcsp {

inline constexpr int kModes = kVariables;
inline constexpr double kMaxBasisCondition = 1e12;

using ModeTable = Eigen::Matrix<double, kModes, kProcesses>;      // mode x process
using VariableTable = Eigen::Matrix<double, kVariables, kProcesses>;  // variable x process

struct ModeDecomposition {
    State state;
    Vec4 g = Vec4::Zero();                     // vector field at state
    std::array<std::complex<double>, kModes> lambda{};
    Mat4 A = Mat4::Identity();                 // column n is alpha_n
    Mat4 B = Mat4::Identity();                 // row n is beta^n, B = A^-1
    std::array<double, kModes> tau{};          // 1/|lambda|, days
    Vec4 f = Vec4::Zero();                     // amplitudes f^n = beta^n . g
    std::array<int, kModes> pair{-1, -1, -1, -1};  // partner of a complex pair, or -1
    double condition = 1.0;                    // 2-norm condition number of A
    bool tracking_ambiguous = false;

    [[nodiscard]] bool explosive(int n) const { return lambda.at(n).real() > 0.0; }
    [[nodiscard]] bool complex_pair(int n) const { return pair.at(n) >= 0; }
    [[nodiscard]] Vec4 alpha(int n) const { return A.col(n); }
    [[nodiscard]] RowVec4 beta(int n) const { return B.row(n); }
    [[nodiscard]] double max_real() const {
        double m = -std::numeric_limits<double>::infinity();
        for (auto z : lambda) {
            m = std::max(m, z.real());
        }
        return m;
    }

    /// Flips the sign of alpha_n and beta^n together.
    void flip(int n) {
        A.col(n) *= -1.0;
        B.row(n) *= -1.0;
        f[n] *= -1.0;
    }
};

/// 2-norm condition number from singular values.
[[nodiscard]] inline double condition_number(const Mat4& A) {
    Eigen::JacobiSVD<Mat4> svd(A);
    const auto& s = svd.singularValues();
    if (s[kVariables - 1] <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return s[0] / s[kVariables - 1];
}

/// Eigen-decomposition of the Jacobian at `state`. The Jacobian is balanced by
/// the population scales diag(max(|y|, 1)) before the eigensolve; complex pairs
/// are represented by the real and imaginary parts of one eigenvector.
[[nodiscard]] inline ModeDecomposition decompose(const State& state, const ParameterSet& ps,
                                                 Domain domain = Domain::limit) {
    const Vec4 y = state.vec();
    const auto pr = process_rates(y, ps, domain);
    const Mat4 J = jacobian(pr);

    const Vec4 scale = y.cwiseAbs().cwiseMax(1.0);
    // Extended precision keeps beta^n J alpha_n within 1e-8 of lambda_n for the
    // slowest modes, whose eigenvalues sit far below the Jacobian norm.
    using MatL = Eigen::Matrix<long double, kVariables, kVariables>;
    const MatL Jb = (scale.cwiseInverse().asDiagonal() * J * scale.asDiagonal()).cast<long double>();
    Eigen::EigenSolver<MatL> es(Jb, true);
    if (es.info() != Eigen::Success) {
        throw DiagnosticError("eigen-decomposition failed");
    }
    const Eigen::Matrix<std::complex<double>, kVariables, 1> ev = es.eigenvalues().cast<std::complex<double>>();
    const Eigen::Matrix<std::complex<double>, kVariables, kVariables> V =
        es.eigenvectors().cast<std::complex<double>>();

    struct Raw {
        std::complex<double> lambda;
        Vec4 vec;
        int pair_slot;  // 0 for real, 1 real part, 2 imaginary part
        int group;
    };
    std::vector<Raw> raw;
    std::vector<bool> used(kVariables, false);
    const double eps = 1e-12;
    int group = 0;
    for (int i = 0; i < kVariables; ++i) {
        if (used[i]) {
            continue;
        }
        used[i] = true;
        const auto lam = ev[i];
        if (std::abs(lam.imag()) <= eps * std::max(1.0, std::abs(lam))) {
            raw.push_back({std::complex<double>(lam.real(), 0.0), V.col(i).real(), 0, group++});
            continue;
        }
        // Conjugate partner: the unused eigenvalue closest to conj(lam).
        int partner = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < kVariables; ++j) {
            if (!used[j] && std::abs(ev[j] - std::conj(lam)) < best) {
                best = std::abs(ev[j] - std::conj(lam));
                partner = j;
            }
        }
        if (partner < 0) {
            throw DiagnosticError("complex eigenvalue without conjugate partner");
        }
        used[partner] = true;
        const int k = lam.imag() > 0.0 ? i : partner;
        const std::complex<double> lp = ev[k];
        raw.push_back({lp, V.col(k).real(), 1, group});
        raw.push_back({std::conj(lp), V.col(k).imag(), 2, group});
        ++group;
    }

    // Ascending tau; ties dissipative first; pairs stay adjacent.
    std::vector<int> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ta = 1.0 / std::abs(raw[a].lambda);
        const double tb = 1.0 / std::abs(raw[b].lambda);
        if (raw[a].group == raw[b].group) {
            return raw[a].pair_slot < raw[b].pair_slot;
        }
        if (ta != tb) {
            return ta < tb;
        }
        const bool ea = raw[a].lambda.real() > 0.0;
        const bool eb = raw[b].lambda.real() > 0.0;
        if (ea != eb) {
            return !ea;
        }
        return raw[a].group < raw[b].group;
    });

    ModeDecomposition d;
    d.state = state;
    d.g = stoichiometry() * pr.rate_vector();
    for (int n = 0; n < kModes; ++n) {
        const auto& r = raw[order[n]];
        d.lambda[n] = r.lambda;
        d.tau[n] = 1.0 / std::abs(r.lambda);
        Vec4 a = scale.asDiagonal() * r.vec;
        const double nrm = a.norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm)) {
            throw DiagnosticError("degenerate eigenvector");
        }
        d.A.col(n) = a / nrm;
    }
    for (int n = 0; n < kModes; ++n) {
        for (int m = 0; m < kModes; ++m) {
            if (m != n && raw[order[n]].group == raw[order[m]].group) {
                d.pair[n] = m;
            }
        }
    }
    d.condition = condition_number(d.A);
    if (!(d.condition <= kMaxBasisCondition)) {
        throw DiagnosticError("near-defective Jacobian: eigenvector condition number " +
                              std::to_string(d.condition));
    }
    d.B = d.A.inverse();
    d.f = d.B * d.g;
    return d;
}

/// Mode-by-process table with per-row validity (a row is undefined when its
/// normalizing sum vanishes).
struct IndexTable {
    ModeTable values = ModeTable::Zero();
    std::array<bool, kModes> defined{true, true, true, true};
};

namespace detail {

inline void normalize_rows(ModeTable& raw, std::array<bool, kModes>& defined) {
    for (int r = 0; r < kModes; ++r) {
        const double s = raw.row(r).cwiseAbs().sum();
        if (s > 0.0 && std::isfinite(s)) {
            raw.row(r) /= s;
            defined[r] = true;
        } else {
            raw.row(r).setZero();
            defined[r] = false;
        }
    }
}

} // namespace detail

/// Amplitude Participation Index P^r_k = (beta^r . S_k) R^k / sum_i |(beta^r . S_i) R^i|.
[[nodiscard]] inline IndexTable api(const ModeDecomposition& d, const ProcessSet& pr) {
    IndexTable t;
    t.values = (d.B * stoichiometry()) * pr.rate_vector().asDiagonal();
    detail::normalize_rows(t.values, t.defined);
    return t;
}

/// Raw timescale contributions c^n_k = (beta^n . S_k)(grad R^k . alpha_n), whose
/// sum over k is Re lambda_n.
[[nodiscard]] inline ModeTable tpi_contributions(const ModeDecomposition& d, const ProcessSet& pr) {
    const Eigen::Matrix<double, kModes, kProcesses> BS = d.B * stoichiometry();
    const Eigen::Matrix<double, kProcesses, kModes> GA = pr.gradient_matrix() * d.A;
    return BS.cwiseProduct(GA.transpose());
}

struct TpiTable {
    IndexTable index;
    ModeTable contributions = ModeTable::Zero();
    double lambda_residual = 0.0;  // max_n |sum_k c^n_k - Re lambda_n| / |lambda_n|
};

[[nodiscard]] inline TpiTable tpi(const ModeDecomposition& d, const ProcessSet& pr) {
    TpiTable t;
    t.contributions = tpi_contributions(d, pr);
    for (int n = 0; n < kModes; ++n) {
        const double sum = t.contributions.row(n).sum();
        t.lambda_residual =
            std::max(t.lambda_residual, std::abs(sum - d.lambda[n].real()) / std::abs(d.lambda[n]));
    }
    t.index.values = t.contributions;
    detail::normalize_rows(t.index.values, t.index.defined);
    return t;
}

/// CSP Pointer D^m_i = alpha^i_m beta^m_i (row m, column i).
[[nodiscard]] inline Mat4 pointer(const ModeDecomposition& d) {
    return d.A.transpose().cwiseProduct(d.B);
}

struct ImportanceTable {
    VariableTable values = VariableTable::Zero();
    std::array<bool, kVariables> defined{true, true, true, true};
};

/// Slow Importance Index: II^n_k = sum_{s > M} alpha^n_s (beta^s . S_k) R^k,
/// normalized per variable n.
[[nodiscard]] inline ImportanceTable importance(const ModeDecomposition& d, int M, const ProcessSet& pr) {
    if (M < 0 || M >= kModes) {
        throw IndexError("exhausted-mode count must lie in 0..3");
    }
    Mat4 P = Mat4::Zero();
    for (int s = M; s < kModes; ++s) {
        P += d.A.col(s) * d.B.row(s);
    }
    ImportanceTable t;
    t.values = (P * stoichiometry()) * pr.rate_vector().asDiagonal();
    detail::normalize_rows(t.values, t.defined);
    return t;
}

struct ExhaustionCriterion {
    double rtol = 1e-3;
    double atol = 1.0;  // cells
};

/// Largest M in 0..3 such that modes 1..M are dissipative, do not split a complex
/// pair, and |alpha^i_r f^r| tau_{M+1} < rtol |y_i| + atol for all r <= M and i.
[[nodiscard]] inline int exhausted_count(const ModeDecomposition& d, const ExhaustionCriterion& c = {}) {
    const Vec4 y = d.state.vec();
    for (int M = kModes - 1; M >= 1; --M) {
        bool ok = true;
        if (d.pair[M - 1] == M) {
            continue;
        }
        for (int r = 0; r < M && ok; ++r) {
            if (d.lambda[r].real() >= 0.0) {
                ok = false;
                break;
            }
            const Vec4 contrib = (d.A.col(r) * d.f[r]).cwiseAbs() * d.tau[M];
            for (int i = 0; i < kVariables; ++i) {
                if (!(contrib[i] < c.rtol * std::abs(y[i]) + c.atol)) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) {
            return M;
        }
    }
    return 0;
}

/// Flips each mode so that its largest-magnitude API entry is positive
/// (ties resolved towards the lower process index).
inline void canonicalize_signs(ModeDecomposition& d, const ProcessSet& pr) {
    const auto t = api(d, pr);
    for (int n = 0; n < kModes; ++n) {
        int best = 0;
        for (int k = 1; k < kProcesses; ++k) {
            if (std::abs(t.values(n, k)) > std::abs(t.values(n, best))) {
                best = k;
            }
        }
        if (t.values(n, best) < 0.0) {
            d.flip(n);
        }
    }
}

/// Reorders and re-signs `cur` to follow `prev`: the permutation maximizing the
/// summed |beta^n_prev . alpha_cur| overlaps, then signs making each matched
/// overlap positive. If the runner-up permutation scores within 1% of the best,
/// cur keeps its timescale order and is flagged.
[[nodiscard]] inline ModeDecomposition track_modes(const ModeDecomposition& prev, ModeDecomposition cur) {
    const Mat4 O = prev.B * cur.A;  // O(n, m) = beta^n_prev . alpha_m_cur
    std::array<int, kModes> perm{0, 1, 2, 3};
    std::array<int, kModes> best_perm = perm;
    double best = -1.0;
    double second = -1.0;
    do {
        double s = 0.0;
        for (int n = 0; n < kModes; ++n) {
            s += std::abs(O(n, perm[n]));
        }
        if (s > best) {
            second = best;
            best = s;
            best_perm = perm;
        } else if (s > second) {
            second = s;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    const bool identity = best_perm == std::array<int, kModes>{0, 1, 2, 3};
    if (!identity && second >= 0.99 * best) {
        cur.tracking_ambiguous = true;
        best_perm = {0, 1, 2, 3};
    }
    ModeDecomposition out = cur;
    for (int n = 0; n < kModes; ++n) {
        const int m = best_perm[n];
        out.lambda[n] = cur.lambda[m];
        out.tau[n] = cur.tau[m];
        out.A.col(n) = cur.A.col(m);
        out.pair[n] = -1;
    }
    for (int n = 0; n < kModes; ++n) {
        if (cur.pair[best_perm[n]] >= 0) {
            for (int k = 0; k < kModes; ++k) {
                if (best_perm[k] == cur.pair[best_perm[n]]) {
                    out.pair[n] = k;
                }
            }
        }
        if (prev.B.row(n).dot(out.A.col(n)) < 0.0) {
            out.A.col(n) *= -1.0;
        }
    }
    out.B = out.A.inverse();
    out.f = out.B * out.g;
    return out;
}

/// Largest real part among the Jacobian eigenvalues.
[[nodiscard]] inline double max_real_eigenvalue(const Vec4& y, const ParameterSet& ps) {
    Eigen::EigenSolver<Mat4> es(jacobian(y, ps, Domain::limit), false);
    double m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < kVariables; ++i) {
        m = std::max(m, es.eigenvalues()[i].real());
    }
    return m;
}

struct ExplosiveStage {
    double start = 0.0;
    double end = 0.0;  // t_exp
    int mode = 0;      // 1-based index of the explosive mode in timescale order
    bool open_ended = false;  // still explosive at the end of the trajectory

    [[nodiscard]] double duration() const { return end - start; }
};

/// First interval on which the Jacobian has an eigenvalue with positive real
/// part, with both ends refined on the dense output to `tol` days.
[[nodiscard]] inline std::optional<ExplosiveStage> explosive_stage(const Trajectory& traj, const ParameterSet& ps,
                                                                   double tol = 1e-4) {
    auto growth = [&ps](const State& s) { return max_real_eigenvalue(s.vec(), ps); };
    ExplosiveStage st;
    const double t0 = traj.t_begin();
    if (growth(traj.at(t0)) > 0.0) {
        st.start = t0;
    } else {
        const auto on = locate_event(traj, growth, tol);
        if (!on) {
            return std::nullopt;
        }
        st.start = *on;
    }
    // Search strictly inside the stage for the switch-off.
    const auto off = locate_event(traj, [&](const State& s) { return s.t <= st.start ? 1.0 : growth(s); },
                                  tol, st.start);
    if (off) {
        st.end = *off;
    } else {
        st.end = traj.t_final();
        st.open_ended = true;
    }
    const double mid = 0.5 * (st.start + st.end);
    const auto d = decompose(traj.at(mid), ps);
    for (int n = 0; n < kModes; ++n) {
        if (d.explosive(n) && (st.mode == 0 || d.lambda[n].real() > d.lambda[st.mode - 1].real())) {
            st.mode = n + 1;
        }
    }
    return st;
}

struct DiagnosticsRecord {
    double t = 0.0;
    double t_over_texp = std::numeric_limits<double>::quiet_NaN();
    int M = 0;
    bool M_fixed = false;
    ModeDecomposition modes;
    IndexTable api;
    TpiTable tpi;
    Mat4 po = Mat4::Zero();
    ImportanceTable ii;
};

struct DiagnosticsOptions {
    std::optional<int> fixed_M;
    ExhaustionCriterion exhaustion;
    bool canonical_signs = true;
};

/// Every CSP diagnostic at one state. The II table uses the fixed M if given,
/// otherwise the exhausted count from the criterion.
[[nodiscard]] inline DiagnosticsRecord diagnose(const State& s, const ParameterSet& ps,
                                                const DiagnosticsOptions& opt = {},
                                                double t_exp = std::numeric_limits<double>::quiet_NaN()) {
    DiagnosticsRecord r;
    r.t = s.t;
    r.t_over_texp = s.t / t_exp;
    const auto pr = process_rates(s.vec(), ps, Domain::limit);
    r.modes = decompose(s, ps);
    if (opt.canonical_signs) {
        canonicalize_signs(r.modes, pr);
    }
    r.M = opt.fixed_M ? *opt.fixed_M : exhausted_count(r.modes, opt.exhaustion);
    r.M_fixed = opt.fixed_M.has_value();
    r.api = api(r.modes, pr);
    r.tpi = tpi(r.modes, pr);
    r.po = pointer(r.modes);
    r.ii = importance(r.modes, r.M, pr);
    return r;
}

/// Diagnostics at each time, evaluated concurrently and returned in input order;
/// a sequential tracking pass then flags steps where mode matching was ambiguous.
[[nodiscard]] inline std::vector<DiagnosticsRecord> diagnose_along(const Trajectory& traj, const ParameterSet& ps,
                                                                   const std::vector<double>& times,
                                                                   const DiagnosticsOptions& opt = {},
                                                                   double t_exp =
                                                                       std::numeric_limits<double>::quiet_NaN(),
                                                                   unsigned jobs = 1) {
    auto out = parallel_map(times.size(), jobs,
                            [&](std::size_t i) { return diagnose(traj.at(times[i]), ps, opt, t_exp); });
    for (std::size_t i = 1; i < out.size(); ++i) {
        const auto tracked = track_modes(out[i - 1].modes, out[i].modes);
        out[i].modes.tracking_ambiguous = tracked.tracking_ambiguous;
    }
    return out;
}

} // namespace tumorcsp
