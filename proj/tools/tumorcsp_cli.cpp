// Command-line front end: one subcommand per analysis, each writing CSV/JSON
// artifacts under <out>/<run name>/.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tumorcsp/tumorcsp.hpp"

namespace fs = std::filesystem;
using namespace tumorcsp;
using nlohmann::json;

namespace {

struct Globals {
    std::string params_file;
    std::string out;
    double rtol = IntegratorConfig{}.rtol;
    double atol = 1e-6;
    unsigned jobs = 1;
    std::optional<int> fixed_M;
};

std::string default_out_root() {
    if (const char* env = std::getenv("TUMORCSP_OUT"); env && *env) {
        return env;
    }
    return "runs";
}

IntegratorConfig integrator_config(const Globals& g) {
    IntegratorConfig c;
    c.rtol = g.rtol;
    c.atol = Vec4::Constant(g.atol);
    return c;
}

ParameterSet base_params(const Globals& g) {
    return g.params_file.empty() ? ParameterSet{} : load_parameters(g.params_file);
}

Scenario scenario_for(const Globals& g, const std::string& spec) {
    Scenario s = resolve_scenario(spec);
    if (!g.params_file.empty()) {
        s.params = load_parameters(g.params_file);
    }
    return s;
}

RunOptions run_options(const Globals& g, std::optional<double> t_end) {
    RunOptions o;
    o.integrator = integrator_config(g);
    o.t_end = t_end;
    o.jobs = g.jobs;
    o.diagnostics.fixed_M = g.fixed_M;
    if (t_end && !(*t_end > 0.0)) {
        throw ConfigError("--t-end must be > 0");
    }
    o.integrator.t_end = t_end.value_or(o.integrator.t_end);
    o.integrator.validate();
    return o;
}

fs::path run_dir(const Globals& g, const std::string& name) {
    fs::path dir = fs::path(g.out) / name;
    fs::create_directories(dir);
    return dir;
}

void write_config(const fs::path& dir, const Globals& g, const std::string& command, const json& extra,
                  const ParameterSet& ps) {
    json j{{"command", command},
           {"version", TUMORCSP_VERSION},
           {"params_file", g.params_file},
           {"rtol", g.rtol},
           {"atol", g.atol},
           {"jobs", g.jobs},
           {"fixed_M", g.fixed_M ? json(*g.fixed_M) : json(nullptr)},
           {"params", to_json(ps)},
           {"arguments", extra}};
    io::write_json(dir / "config.json", j);
}

json scenario_json(const Scenario& s) {
    return {{"name", s.name},
            {"T0", s.initial.T},
            {"N0", s.initial.N},
            {"L0", s.initial.L},
            {"C0", s.initial.C},
            {"t_end", s.t_end},
            {"expect", s.expect ? json(to_string(*s.expect)) : json(nullptr)}};
}

json bundle_summary(const ScenarioBundle& b) {
    json stats;
    to_json(stats, b.trajectory.stats);
    return {{"scenario", scenario_json(b.scenario)},
            {"explosive_stage", io::stage_json(b.stage)},
            {"attractor", to_string(b.attractor)},
            {"expected_attractor_reached", !b.scenario.expect || *b.scenario.expect == b.attractor},
            {"final_state", {{"t", b.trajectory.t_final()},
                             {"T", b.trajectory.y.back()[kT]},
                             {"N", b.trajectory.y.back()[kN]},
                             {"L", b.trajectory.y.back()[kL]},
                             {"C", b.trajectory.y.back()[kC]}}},
            {"solver", stats}};
}

void write_csp(const fs::path& dir, const ScenarioBundle& b) {
    std::vector<const DiagnosticsRecord*> recs;
    for (const auto& c : b.checkpoints) {
        recs.push_back(&c.record);
    }
    for (const auto& r : b.stage_diagnostics) {
        recs.push_back(&r);
    }
    io::write_diagnostics(dir / "diagnostics.csv", recs);
}

// ------------------------------------------------------------- commands

int cmd_simulate(const Globals& g, const std::string& spec, std::optional<double> t_end) {
    const auto sc = scenario_for(g, spec);
    auto opt = run_options(g, t_end);
    opt.persistence_samples = 0;
    const auto b = run_scenario(sc, opt);
    const auto dir = run_dir(g, sc.name);
    io::write_trajectory(dir / "trajectory.csv", b.trajectory);
    io::write_timescales(dir / "timescales.csv", b.timescales);
    io::write_json(dir / "report.json", bundle_summary(b));
    write_config(dir, g, "simulate", {{"scenario", scenario_json(sc)}, {"t_end", opt.t_end.value_or(sc.t_end)}},
                 sc.params);
    std::cout << sc.name << ": attractor " << to_string(b.attractor) << ", t_exp "
              << (b.stage ? io::num(b.stage->end) : std::string("none")) << " d -> " << dir.string() << "\n";
    return 0;
}

int cmd_equilibria(const Globals& g) {
    const auto ps = base_params(g);
    const auto eqs = all_equilibria(ps, g.jobs);
    auto both = tfe(ps);
    std::vector<Equilibrium> out{both.first, both.second};
    out.insert(out.end(), eqs.begin() + 1, eqs.end());
    const auto dir = run_dir(g, "equilibria");
    io::write_equilibria(dir / "equilibria.json", out);
    write_config(dir, g, "equilibria", json::object(), ps);
    for (const auto& e : out) {
        std::cout << to_string(e.kind) << " T=" << io::num(e.state.T) << (e.feasible ? "" : " (infeasible)")
                  << (e.stable ? " stable" : " unstable") << "\n";
    }
    return 0;
}

int cmd_bifurcate(const Globals& g, const std::string& param, const SweepRange& range) {
    const auto ps = base_params(g);
    HteSearch search;
    search.jobs = g.jobs;
    const auto scan = bifurcation_scan(ps, param, range, search);
    const auto dir = run_dir(g, "bifurcation_" + param);
    io::write_bifurcation(dir / "bifurcation.csv", scan);
    json summary{{"parameter", param},
                 {"transcritical", scan.transcritical ? json(*scan.transcritical) : json(nullptr)},
                 {"saddle_node", scan.saddle_node ? json(*scan.saddle_node) : json(nullptr)}};
    io::write_json(dir / "summary.json", summary);
    write_config(dir, g, "bifurcate",
                 {{"param", param}, {"from", range.from}, {"to", range.to}, {"steps", range.steps},
                  {"log", range.log_spaced}},
                 ps);
    std::cout << "transcritical: " << (scan.transcritical ? io::num(*scan.transcritical) : "none")
              << ", saddle-node: " << (scan.saddle_node ? io::num(*scan.saddle_node) : "none") << "\n";
    return 0;
}

int cmd_csp(const Globals& g, const std::string& spec, std::optional<double> t_end) {
    const auto sc = scenario_for(g, spec);
    const auto opt = run_options(g, t_end);
    const auto b = run_scenario(sc, opt);
    const auto dir = run_dir(g, sc.name);
    io::write_timescales(dir / "timescales.csv", b.timescales);
    write_csp(dir, b);
    io::write_json(dir / "tables.json", io::tables_json(report_tables(b, opt)));
    io::write_json(dir / "report.json", bundle_summary(b));
    write_config(dir, g, "csp", {{"scenario", scenario_json(sc)}}, sc.params);
    std::cout << sc.name << ": " << b.checkpoints.size() << " checkpoints, " << b.stage_diagnostics.size()
              << " stage points -> " << dir.string() << "\n";
    return 0;
}

int cmd_reduce(const Globals& g, const std::string& spec, std::optional<double> t_end) {
    const auto sc = scenario_for(g, spec);
    auto opt = run_options(g, t_end);
    opt.persistence_samples = 0;
    opt.checkpoints.clear();
    const auto b = run_scenario(sc, opt);
    IntegratorConfig cfg = opt.integrator;
    cfg.t_end = opt.t_end.value_or(sc.t_end);
    const auto red = simulate_reduced(sc.initial.T, sc.initial.C, sc.params, cfg);
    if (!red.traj.ok()) {
        throw DiagnosticError("reduced model integration failed: " + red.traj.diagnostic);
    }
    std::vector<Equilibrium> stable;
    for (const auto& e : b.equilibria) {
        if (e.stable && e.feasible) {
            stable.push_back(e);
        }
    }
    const double te = b.t_exp();
    auto cmp = compare_reduced(b.trajectory, red.traj, stable, 0.2 * te, 0.95 * te);
    cmp.full_attractor = b.attractor;
    cmp.reduced_attractor = settle_reduced(red.traj, sc.params, stable, cfg);
    const auto dir = run_dir(g, sc.name);
    io::write_reduced_trajectory(dir / "reduced_trajectory.csv", red.traj);
    io::write_constraint_errors(dir / "constraint_errors.csv", b.constraint_errors);
    const auto w = b.constraint_errors.window(0.2, 0.95);
    json eff = json::object();
    const auto vals = red.effective.values();
    for (std::size_t i = 0; i < EffectiveParameters::count; ++i) {
        eff[std::string(EffectiveParameters::names[i])] = vals[i];
    }
    auto vec = [](const Vec4& v) { return json{{"T", v[kT]}, {"N", v[kN]}, {"L", v[kL]}, {"C", v[kC]}}; };
    json report{{"scenario", sc.name},
                {"t_exp", te},
                {"effective_parameters", eff},
                {"constraint_window", {{"max_abs", w.max_abs}, {"mean_abs", w.mean_abs}, {"samples", w.samples}}},
                {"window_max_rel_error", vec(cmp.window_max)},
                {"window_mean_rel_error", vec(cmp.window_mean)},
                {"full_attractor", to_string(cmp.full_attractor)},
                {"reduced_attractor", to_string(cmp.reduced_attractor)},
                {"attractor_agreement", cmp.attractor_agreement()}};
    io::write_json(dir / "reduced.json", report);
    write_config(dir, g, "reduce", {{"scenario", scenario_json(sc)}}, sc.params);
    std::cout << sc.name << ": constraint error max " << io::num(w.max_abs) << " on the window, attractors "
              << to_string(cmp.full_attractor) << "/" << to_string(cmp.reduced_attractor) << "\n";
    return 0;
}

int cmd_perturb(const Globals& g, const std::string& spec, const std::string& param, double mult,
                std::optional<double> t_end) {
    const auto sc = scenario_for(g, spec);
    const auto opt = run_options(g, t_end);
    const auto r = run_perturbation({param, mult, sc}, opt);
    const auto dir = run_dir(g, sc.name + "_" + param + "x" + io::label(mult));
    io::write_json(dir / "perturbation.json", io::perturbation_json(r));
    write_config(dir, g, "perturb", {{"scenario", scenario_json(sc)}, {"param", param}, {"multiplier", mult}},
                 sc.params);
    std::cout << param << " x" << io::label(mult) << ": t_exp " << io::num(r.t_exp_base) << " -> "
              << io::num(r.t_exp_perturbed) << " (" << to_string(r.t_exp_effect()) << "), window T ratio "
              << io::num(r.window_ratio[kT]) << "\n";
    return 0;
}

int cmd_threshold(const Globals& g, const std::string& spec, double lo, double hi) {
    double N0 = 1e3;
    double L0 = 1e1;
    double C0 = 6e8;
    ParameterSet ps = base_params(g);
    std::string name = spec;
    if (spec != "TP1-family" && spec != "TR1-family") {
        const auto sc = scenario_for(g, spec);
        N0 = sc.initial.N;
        L0 = sc.initial.L;
        C0 = sc.initial.C;
        ps = sc.params;
        name = sc.name;
    }
    const auto res = basin_threshold(N0, L0, C0, ps, {lo, hi}, integrator_config(g), g.jobs);
    const auto dir = run_dir(g, "threshold_" + name);
    io::write_json(dir / "threshold.json", {{"N0", N0},
                                            {"L0", L0},
                                            {"C0", C0},
                                            {"threshold", res.threshold},
                                            {"below", res.below},
                                            {"runs", res.runs}});
    write_config(dir, g, "threshold", {{"scenario", spec}, {"low", lo}, {"high", hi}}, ps);
    std::cout << "threshold T(0) = " << io::num(res.threshold) << " (" << res.runs << " runs)\n";
    return 0;
}

int cmd_report(const Globals& g, std::vector<std::string> specs) {
    if (specs.empty()) {
        specs = {"TP", "TR", "TP1", "TR1"};
    }
    RunOptions opt = run_options(g, std::nullopt);
    std::vector<TablesReport> reps;
    json table2 = json::array();
    for (const auto& spec : specs) {
        const auto sc = scenario_for(g, spec);
        const auto b = run_scenario(sc, opt);
        const auto dir = run_dir(g, sc.name);
        io::write_trajectory(dir / "trajectory.csv", b.trajectory);
        io::write_timescales(dir / "timescales.csv", b.timescales);
        write_csp(dir, b);
        io::write_constraint_errors(dir / "constraint_errors.csv", b.constraint_errors);
        reps.push_back(report_tables(b, opt));
        io::write_json(dir / "tables.json", io::tables_json(reps.back()));
        io::write_json(dir / "report.json", bundle_summary(b));
        table2.push_back({{"scenario", sc.name}, {"t_exp", b.t_exp()}, {"attractor", to_string(b.attractor)}});
        std::cout << sc.name << ": t_exp " << io::num(b.t_exp()) << " d, " << to_string(b.attractor) << "\n";
    }
    const auto u = persistent_union(reps);
    json table5 = json::object();
    for (int i = 0; i < kVariables; ++i) {
        table5[std::string(1, kVariableNames[i])] = u[i];
    }
    const auto dir = run_dir(g, "report");
    io::write_json(dir / "summary.json", {{"explosive_stages", table2}, {"persistent_importance", table5}});
    write_config(dir, g, "report", {{"scenarios", specs}}, base_params(g));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tumor-immune model analysis: equilibria, stiff simulation, CSP diagnostics, reduced models"};
    app.require_subcommand(1);
    Globals g;
    g.out = default_out_root();
    app.add_option("--params", g.params_file, "Parameter JSON file (missing keys keep the defaults)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output root (default $TUMORCSP_OUT or ./runs)");
    app.add_option("--rtol", g.rtol, "Relative tolerance")->check(CLI::PositiveNumber);
    app.add_option("--atol", g.atol, "Absolute tolerance, cells")->check(CLI::PositiveNumber);
    app.add_option("--jobs", g.jobs, "Worker threads, 0 = all cores");
    app.add_option("--fixed-M", g.fixed_M, "Fix the exhausted-mode count")->check(CLI::Range(0, 3));

    std::string scenario = "TP";
    std::optional<double> t_end;
    auto add_scenario = [&](CLI::App* sub) {
        sub->add_option("--scenario", scenario, "TP, TR, TP1, TR1 or a scenario JSON file");
        sub->add_option("--t-end", t_end, "Horizon in days (overrides the scenario)");
    };

    auto* sim = app.add_subcommand("simulate", "Integrate a scenario; trajectory and timescales");
    add_scenario(sim);
    auto* eq = app.add_subcommand("equilibria", "TFE and HTE with eigenvalues and stability");

    std::string param = "d";
    SweepRange range{0.01, 10.0, 200, false};
    auto* bif = app.add_subcommand("bifurcate", "Equilibrium branches over a parameter sweep");
    bif->add_option("--param", param, "Parameter name");
    bif->add_option("--from", range.from, "Sweep start")->required();
    bif->add_option("--to", range.to, "Sweep end")->required();
    bif->add_option("--steps", range.steps, "Number of sweep values");
    bif->add_flag("--log", range.log_spaced, "Log-spaced sweep");

    auto* csp = app.add_subcommand("csp", "CSP diagnostics at the checkpoints and over the explosive stage");
    add_scenario(csp);
    auto* red = app.add_subcommand("reduce", "Leading-order reduced model against the full model");
    add_scenario(red);

    double mult = 0.8;
    auto* per = app.add_subcommand("perturb", "Baseline versus one scaled parameter");
    add_scenario(per);
    per->add_option("--param", param, "Parameter name")->required();
    per->add_option("--multiplier", mult, "Scale factor (> 0)")->required();

    double lo = 1e5;
    double hi = 1e6;
    auto* thr = app.add_subcommand("threshold", "Basin threshold in T(0) by bisection");
    thr->add_option("--scenario", scenario, "TP1-family, or a scenario supplying (N0, L0, C0)");
    thr->add_option("--low", lo, "Lower bracket for T(0)");
    thr->add_option("--high", hi, "Upper bracket for T(0)");

    std::vector<std::string> specs;
    auto* rep = app.add_subcommand("report", "All scenarios with the table summaries");
    rep->add_option("--scenarios", specs, "Scenario names or files (default: all built-in)");

    for (auto* sub : {sim, eq, bif, csp, red, per, thr, rep}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim) {
            return cmd_simulate(g, scenario, t_end);
        }
        if (*eq) {
            return cmd_equilibria(g);
        }
        if (*bif) {
            return cmd_bifurcate(g, param, range);
        }
        if (*csp) {
            return cmd_csp(g, scenario, t_end);
        }
        if (*red) {
            return cmd_reduce(g, scenario, t_end);
        }
        if (*per) {
            return cmd_perturb(g, scenario, param, mult, t_end);
        }
        if (*thr) {
            if (scenario == "TP") {
                scenario = "TP1-family";
            }
            return cmd_threshold(g, scenario, lo, hi);
        }
        if (*rep) {
            return cmd_report(g, specs);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
