// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "test_support.hpp"
#include "tumorcsp/tumorcsp.hpp"

using namespace tumorcsp;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

RunOptions options() {
    RunOptions o;
    o.jobs = 0;
    return o;
}

const ScenarioBundle& bundle(const std::string& name) {
    static std::map<std::string, ScenarioBundle> cache;
    auto it = cache.find(name);
    if (it == cache.end()) {
        it = cache.emplace(name, run_scenario(builtin_scenario(name), options())).first;
    }
    return it->second;
}

const DiagnosticsRecord& checkpoint(const ScenarioBundle& b, double fraction) {
    for (const auto& c : b.checkpoints) {
        if (c.fraction == fraction) {
            return c.record;
        }
    }
    throw std::runtime_error("missing checkpoint");
}

// Checks a row of expected entries up to one sign for the whole mode.
void check_row(Outcome& o, const Eigen::RowVectorXd& row, const std::vector<std::pair<int, double>>& expected,
               double tol, const std::string& label) {
    const double sign = row[expected.front().first - 1] * expected.front().second >= 0.0 ? 1.0 : -1.0;
    for (const auto& [k, v] : expected) {
        const double got = sign * row[k - 1];
        o.detail << " " << label << "[" << k << "]=" << got;
        o.check(std::abs(got - v) <= tol, label + " entry " + std::to_string(k));
    }
}

Outcome equilibria() {
    Outcome o;
    const ParameterSet ps;
    const auto t = tfe(ps).first;
    const Vec4 tfe_ref(0.0, 3.15e5, 0.0, 6.25e10);
    o.check(t.state.T == 0.0 && t.state.L == 0.0, "TFE T, L");
    o.check(rel(t.state.N, tfe_ref[kN]) < 0.005 && rel(t.state.C, tfe_ref[kC]) < 0.005, "TFE N, C");
    const auto hte = find_hte(ps);
    o.check(hte.size() == 2, "two HTE");
    if (hte.size() == 2) {
        const auto& s = hte[1].state;
        const Vec4 ref(9.8e8, 3.87, 2.86e6, 6.25e10);
        for (int i = 0; i < kVariables; ++i) {
            o.check(rel(s.vec()[i], ref[i]) < 0.02, std::string("stable HTE ") + kVariableNames[i]);
        }
        o.check(hte[1].stable, "stable HTE stability");
        o.check(!hte[0].stable && hte[0].state.T > 0.0 && hte[0].state.T < s.T, "unstable HTE between");
        o.detail << " TFE N=" << t.state.N << " HTE T=" << s.T << " unstable T=" << hte[0].state.T;
    }
    return o;
}

Outcome tfe_eigenvalues_check() {
    Outcome o;
    const ParameterSet ps;
    const double l1 = ps.a - ps.d - ps.alpha * ps.c * ps.e / (ps.beta * ps.f);
    std::vector<double> want{l1, -ps.f, -ps.m, -ps.beta};
    const auto ev = eigenvalues_of(tfe_jacobian(ps));
    std::vector<double> got;
    for (const auto& z : ev) {
        o.check(std::abs(z.imag()) <= 1e-6 * std::abs(z.real()), "real spectrum");
        got.push_back(z.real());
    }
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    for (std::size_t i = 0; i < want.size(); ++i) {
        o.check(rel(got[i], want[i]) < 1e-6, "eigenvalue " + std::to_string(i));
    }
    const bool predicate = (ps.a - ps.d) * ps.beta * ps.f < ps.alpha * ps.c * ps.e;
    o.check(tfe_stable_predicate(ps) == predicate, "predicate");
    o.check(tfe(ps).first.stable == predicate, "classified stability");
    o.detail << " lambda1=" << l1 << " stable=" << predicate;
    return o;
}

Outcome durations() {
    Outcome o;
    const std::vector<std::tuple<std::string, double, double>> cases{
        {"TP", 16.2, 0.05}, {"TR", 2.3, 0.10}, {"TP1", 37.3, 0.10}, {"TR1", 24.7, 0.10}};
    for (const auto& [name, ref, band] : cases) {
        const double t = bundle(name).t_exp();
        o.detail << " " << name << "=" << t;
        o.check(rel(t, ref) <= band, name);
    }
    return o;
}

Outcome threshold() {
    Outcome o;
    const auto r = basin_threshold(1e3, 10.0, 6e8, ParameterSet{}, {1e5, 1e6}, IntegratorConfig{}, 0);
    o.detail << " threshold=" << r.threshold << " runs=" << r.runs;
    o.check(std::abs(r.threshold - 319392.5) <= 200.0, "threshold");
    return o;
}

Outcome table3() {
    Outcome o;
    const auto& rec = checkpoint(bundle("TP"), 0.5);
    check_row(o, rec.api.values.row(0), {{13, 0.50}, {2, -0.50}}, 0.05, "m1 API");
    check_row(o, rec.tpi.index.values.row(0), {{13, -1.00}}, 0.05, "m1 TPI");
    check_row(o, rec.po.row(0), {{kN + 1, 1.00}}, 0.05, "m1 Po");
    check_row(o, rec.api.values.row(1), {{12, 0.50}, {14, -0.50}}, 0.05, "m2 API");
    check_row(o, rec.tpi.index.values.row(1), {{14, -1.00}}, 0.05, "m2 TPI");
    check_row(o, rec.po.row(1), {{kL + 1, 1.00}}, 0.05, "m2 Po");
    return o;
}

Outcome table4() {
    Outcome o;
    const auto& tp = checkpoint(bundle("TP"), 0.8);
    o.check(tp.modes.explosive(2), "TP mode 3 explosive");
    check_row(o, tp.tpi.index.values.row(2), {{1, 1.00}}, 0.05, "TP m3 TPI");
    check_row(o, tp.po.row(2), {{kT + 1, 1.00}}, 0.05, "TP m3 Po");
    const auto& tr = checkpoint(bundle("TR"), 0.5);
    o.check(tr.modes.explosive(2), "TR mode 3 explosive");
    check_row(o, tr.tpi.index.values.row(2), {{12, -0.36}, {14, 0.36}, {1, 0.16}, {8, 0.11}}, 0.08, "TR m3 TPI");
    return o;
}

Outcome constraints() {
    Outcome o;
    for (const std::string name : {"TP", "TR"}) {
        const auto& b = bundle(name);
        const auto w = b.constraint_errors.window(0.2, 0.95);
        o.detail << " " << name << " window max=" << w.max_abs;
        o.check(w.samples > 0 && w.max_abs < 0.05, name + " window");
    }
    const auto after = bundle("TP").constraint_errors.window(1.0, 1e9);
    o.detail << " TP after t_exp max=" << after.max_abs;
    o.check(after.samples > 0 && after.max_abs < 0.05, "TP after t_exp");
    return o;
}

Outcome table5() {
    Outcome o;
    std::vector<TablesReport> reps;
    for (const auto& s : builtin_scenarios()) {
        reps.push_back(report_tables(bundle(s.name), options()));
    }
    const auto u = persistent_union(reps);
    const std::array<std::vector<int>, kVariables> want{
        std::vector<int>{1, 8, 12, 14}, std::vector<int>{1, 3, 6, 8, 12, 14}, std::vector<int>{1, 3, 6, 8, 12, 14},
        std::vector<int>{3, 6}};
    for (int i = 0; i < kVariables; ++i) {
        o.detail << " " << kVariableNames[i] << "={";
        for (std::size_t j = 0; j < u[i].size(); ++j) {
            o.detail << (j ? "," : "") << u[i][j];
        }
        o.detail << "}";
        o.check(u[i] == want[i], std::string("set ") + kVariableNames[i]);
    }
    return o;
}

Outcome reduced() {
    Outcome o;
    const ParameterSet ps;
    const auto stable = stable_equilibria(ps);
    o.check(EffectiveParameters::count == 10 && EffectiveParameters::from(ps).values().size() == 10,
            "ten parameters");
    for (const std::string name : {"TP", "TR"}) {
        const auto& b = bundle(name);
        IntegratorConfig c;
        c.t_end = b.trajectory.t_final();
        c.grid.times = b.trajectory.t;
        const auto red = simulate_reduced(b.scenario.initial.T, b.scenario.initial.C, ps, c);
        o.check(red.traj.ok(), name + " integration");
        const auto a = settle_reduced(red.traj, ps, stable, c);
        o.detail << " " << name << " " << to_string(b.attractor) << "/" << to_string(a);
        o.check(a == b.attractor && a == *b.scenario.expect, name + " attractor");
        double worst = 0.0;
        for (std::size_t i = 0; i < b.trajectory.size() && i < red.traj.size(); ++i) {
            worst = std::max(worst, rel(red.traj.y[i][kC], b.trajectory.y[i][kC]));
        }
        o.detail << " C err=" << worst;
        o.check(red.traj.size() == b.trajectory.size() && worst <= 10.0 * c.rtol, name + " C trajectory");
    }
    return o;
}

Outcome perturbations() {
    Outcome o;
    const auto tp = builtin_scenario("TP");
    const auto down = run_perturbation({"a", 0.8, tp}, options());
    o.check(down.t_exp_change() > 0.0 && down.window_ratio[kT] < 1.0, "a x0.8");
    const auto up = run_perturbation({"a", 1.2, tp}, options());
    o.check(up.t_exp_change() < 0.0 && up.window_ratio[kT] > 1.0, "a x1.2");
    const auto c = run_perturbation({"c", 0.6, tp}, options());
    o.check(std::abs(c.t_exp_change()) < 0.05 && c.max_rel_change[kT] < 0.05, "c x0.6");
    const auto e = run_perturbation({"e", 0.6, tp}, options());
    o.check(std::abs(e.t_exp_change()) < 0.05 && e.window_ratio[kN] >= 0.55 && e.window_ratio[kN] <= 0.65,
            "e x0.6");
    o.detail << " a0.8 dt=" << down.t_exp_change() << " T=" << down.window_ratio[kT] << "; a1.2 dt="
             << up.t_exp_change() << " T=" << up.window_ratio[kT] << "; c0.6 dt=" << c.t_exp_change()
             << " dT=" << c.max_rel_change[kT] << "; e0.6 dt=" << e.t_exp_change() << " N=" << e.window_ratio[kN];
    return o;
}

Outcome properties() {
    Outcome o;
    const ParameterSet ps;
    double bio = 0.0, recon = 0.0, sums = 0.0, tpi_sum = 0.0, fd = 0.0, rhs_err = 0.0;
    for (const auto& s : testing::random_states(100, 77)) {
        const auto pr = process_rates(s.vec(), ps, Domain::limit);
        const auto d = decompose(s, ps);
        bio = std::max(bio, (d.B * d.A - Mat4::Identity()).cwiseAbs().maxCoeff());
        recon = std::max(recon, testing::relative_error(d.A * d.f, d.g));
        const auto a = api(d, pr);
        const auto t = tpi(d, pr);
        const Mat4 po = pointer(d);
        for (int n = 0; n < kModes; ++n) {
            sums = std::max({sums, std::abs(a.values.row(n).cwiseAbs().sum() - 1.0),
                             std::abs(t.index.values.row(n).cwiseAbs().sum() - 1.0), std::abs(po.row(n).sum() - 1.0)});
        }
        for (int M = 0; M < kModes; ++M) {
            const auto ii = importance(d, M, pr);
            for (int i = 0; i < kVariables; ++i) {
                if (ii.defined[i]) {
                    sums = std::max(sums, std::abs(ii.values.row(i).cwiseAbs().sum() - 1.0));
                }
            }
        }
        tpi_sum = std::max(tpi_sum, t.lambda_residual);
        fd = std::max(fd, testing::fd_relative_error(jacobian(s, ps), testing::fd_jacobian(s, ps, 1e-6)));
        rhs_err = std::max(rhs_err, testing::relative_error(rhs(s, ps), testing::brute_force_rhs(s, ps)));
    }
    o.detail << " biorth=" << bio << " recon=" << recon << " sums=" << sums << " tpi=" << tpi_sum << " fd=" << fd
             << " rhs=" << rhs_err;
    o.check(bio < 1e-10, "biorthonormality");
    o.check(recon < 1e-8, "reconstruction");
    o.check(sums < 1e-10, "normalizations");
    o.check(tpi_sum < 1e-8, "TPI sum");
    o.check(fd < 1e-6, "Jacobian");
    o.check(rhs_err < 1e-12, "rhs");
    return o;
}

Outcome bifurcation() {
    Outcome o;
    const ParameterSet ps;
    const double d_star = ps.a - ps.alpha * ps.c * ps.e / (ps.beta * ps.f);
    const auto lin = bifurcation_scan(ps, "d", SweepRange{0.01, 10.0, 200});
    o.check(lin.transcritical && std::abs(*lin.transcritical - d_star) < 1e-6 * d_star, "transcritical");
    ParameterSet at = ps;
    at.d = 2.34;
    const auto hte = find_hte(at);
    o.check(hte.size() == 2 && hte[0].stable != hte[1].stable, "two HTE at d = 2.34");
    const auto log = bifurcation_scan(ps, "d", SweepRange{0.01, 1e5, 400, true});
    o.check(log.saddle_node.has_value(), "saddle-node");
    if (log.saddle_node) {
        ParameterSet past = ps;
        past.d = *log.saddle_node * 1.1;
        o.check(find_hte(past).empty(), "no HTE past the saddle-node");
        o.detail << " saddle-node=" << *log.saddle_node;
    }
    o.detail << " d*=" << (lin.transcritical ? *lin.transcritical : NAN) << " (analytic " << d_star << ")";
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"equilibria", equilibria},
        {"tfe-eigenvalues", tfe_eigenvalues_check},
        {"explosive-durations", durations},
        {"basin-threshold", threshold},
        {"fast-mode-table", table3},
        {"explosive-mode-table", table4},
        {"constraint-accuracy", constraints},
        {"importance-sets", table5},
        {"reduced-model", reduced},
        {"perturbations", perturbations},
        {"property-suite", properties},
        {"bifurcation", bifurcation},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %2zu %s:%s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
