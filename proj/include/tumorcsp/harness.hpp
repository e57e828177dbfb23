#pragma once

// Built-in scenarios, scenario runs with checkpointed CSP diagnostics,
// parameter perturbations and the table summaries.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tumorcsp/csp.hpp"
#include "tumorcsp/equilibria.hpp"
#include "tumorcsp/errors.hpp"
#include "tumorcsp/integrator.hpp"
#include "tumorcsp/parallel.hpp"
#include "tumorcsp/params.hpp"
#include "tumorcsp/reduction.hpp"

namespace tumorcsp {

struct Scenario {
    std::string name;
    State initial;
    ParameterSet params;
    double t_end = 200.0;
    std::optional<Attractor> expect;
};

[[nodiscard]] inline std::vector<Scenario> builtin_scenarios() {
    return {
        {"TP", {0.0, 1e6, 1e3, 1e1, 6e8}, {}, 200.0, Attractor::HTE},
        {"TR", {0.0, 1e7, 2e5, 1e2, 4e10}, {}, 200.0, Attractor::TFE},
        {"TP1", {0.0, 319393, 1e3, 1e1, 6e8}, {}, 200.0, Attractor::HTE},
        {"TR1", {0.0, 319392, 1e3, 1e1, 6e8}, {}, 200.0, Attractor::TFE},
    };
}

[[nodiscard]] inline Scenario builtin_scenario(const std::string& name) {
    for (auto& s : builtin_scenarios()) {
        if (s.name == name) {
            return s;
        }
    }
    throw ConfigError("unknown scenario '" + name + "' (built-in: TP, TR, TP1, TR1)");
}

[[nodiscard]] inline std::optional<Attractor> attractor_from_string(const std::string& s) {
    if (s == "TFE") {
        return Attractor::TFE;
    }
    if (s == "HTE") {
        return Attractor::HTE;
    }
    if (s.empty() || s == "unspecified") {
        return std::nullopt;
    }
    throw ConfigError("expect must be TFE, HTE or unspecified, got '" + s + "'");
}

/// Reads {name, T0, N0, L0, C0, t_end, params_file?, expect?}; params_file is
/// resolved relative to the scenario file.
[[nodiscard]] inline Scenario scenario_from_json(const nlohmann::json& j,
                                                 const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) {
        throw ConfigError("scenario must be a JSON object");
    }
    static const std::vector<std::string> allowed{"name", "T0", "N0", "L0", "C0", "t_end", "params_file", "expect"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown scenario key '" + key + "'");
        }
    }
    auto number = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number()) {
            throw ConfigError(std::string("scenario needs numeric '") + key + "'");
        }
        return j.at(key).get<double>();
    };
    Scenario s;
    s.name = j.value("name", std::string("scenario"));
    s.initial = State{0.0, number("T0"), number("N0"), number("L0"), number("C0")};
    s.t_end = j.contains("t_end") ? number("t_end") : 200.0;
    if (j.contains("params_file")) {
        std::filesystem::path p = j.at("params_file").get<std::string>();
        if (p.is_relative()) {
            p = base_dir / p;
        }
        s.params = load_parameters(p.string());
    }
    s.expect = attractor_from_string(j.value("expect", std::string()));
    if (!(s.t_end > 0.0)) {
        throw ConfigError("scenario t_end must be > 0");
    }
    detail::check_initial(s.initial.vec());
    return s;
}

[[nodiscard]] inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open scenario file " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario file " + path + ": " + e.what());
    }
    return scenario_from_json(j, std::filesystem::path(path).parent_path());
}

/// Scenario name or path to a scenario JSON file.
[[nodiscard]] inline Scenario resolve_scenario(const std::string& spec) {
    if (std::filesystem::exists(spec) && std::filesystem::is_regular_file(spec)) {
        return load_scenario(spec);
    }
    return builtin_scenario(spec);
}

struct TimescaleRow {
    double t = 0.0;
    std::array<double, kModes> tau{};
    std::array<double, kModes> re_lambda{};
    bool explosive = false;
};

/// Eigenvalues only, fastest first.
[[nodiscard]] inline TimescaleRow timescales_at(const State& s, const ParameterSet& ps) {
    Eigen::EigenSolver<Mat4> es(jacobian(s.vec(), ps, Domain::limit), false);
    std::array<std::complex<double>, kModes> ev{};
    for (int i = 0; i < kModes; ++i) {
        ev[i] = es.eigenvalues()[i];
    }
    std::stable_sort(ev.begin(), ev.end(), [](auto a, auto b) {
        if (std::abs(a) != std::abs(b)) {
            return std::abs(a) > std::abs(b);
        }
        return a.real() < b.real();
    });
    TimescaleRow r;
    r.t = s.t;
    for (int i = 0; i < kModes; ++i) {
        r.tau[i] = 1.0 / std::abs(ev[i]);
        r.re_lambda[i] = ev[i].real();
        r.explosive = r.explosive || ev[i].real() > 0.0;
    }
    return r;
}

struct RunOptions {
    IntegratorConfig integrator;  // t_end is taken from the scenario unless overridden
    std::optional<double> t_end;
    DiagnosticsOptions diagnostics;  // grid diagnostics
    std::vector<double> checkpoints{0.0, 0.2, 0.5, 0.8};
    int table_M = 2;                 // exhausted modes for the II summary
    std::size_t persistence_samples = 171;
    double persistence_lo = 0.1;
    double persistence_hi = 0.95;
    double significance = 0.02;      // |II| above which a process counts
    double persistence_fraction = 0.5;
    double attractor_tol = 1e-2;
    unsigned jobs = 1;
};

struct Checkpoint {
    double fraction = 0.0;
    DiagnosticsRecord record;
};

struct ScenarioBundle {
    Scenario scenario;
    Trajectory trajectory;
    std::optional<ExplosiveStage> stage;
    std::vector<TimescaleRow> timescales;
    std::vector<Checkpoint> checkpoints;
    std::vector<DiagnosticsRecord> stage_diagnostics;  // grid points inside the explosive stage
    std::vector<DiagnosticsRecord> persistence;        // uniform t/t_exp samples, M = table_M
    ConstraintErrors constraint_errors;
    std::vector<Equilibrium> equilibria;  // TFE, then HTE by T*
    Attractor attractor = Attractor::unresolved;

    [[nodiscard]] double t_exp() const {
        return stage ? stage->end : std::numeric_limits<double>::quiet_NaN();
    }
};

[[nodiscard]] inline std::vector<Equilibrium> all_equilibria(const ParameterSet& ps, unsigned jobs = 1) {
    std::vector<Equilibrium> out;
    out.push_back(tfe(ps).first);
    HteSearch cfg;
    cfg.jobs = jobs;
    for (auto& e : find_hte(ps, cfg)) {
        out.push_back(std::move(e));
    }
    return out;
}

/// Integrates, finds the explosive stage, evaluates diagnostics at the
/// checkpoints, over the stage and at the persistence samples, and classifies
/// the long-term attractor (continuing past t_end when needed).
[[nodiscard]] inline ScenarioBundle run_scenario(const Scenario& sc, const RunOptions& opt = {}) {
    ScenarioBundle b;
    b.scenario = sc;
    IntegratorConfig cfg = opt.integrator;
    cfg.t_end = opt.t_end.value_or(sc.t_end);
    b.trajectory = integrate(sc.initial, sc.params, cfg);
    if (!b.trajectory.ok()) {
        throw DiagnosticError("integration of " + sc.name + " failed: " + b.trajectory.diagnostic);
    }
    const auto& tr = b.trajectory;
    const auto& ps = sc.params;
    b.stage = explosive_stage(tr, ps);

    b.timescales = parallel_map(tr.size(), opt.jobs, [&](std::size_t i) { return timescales_at(tr.state(i), ps); });

    if (b.stage) {
        const double te = b.stage->end;
        for (double f : opt.checkpoints) {
            const double t = sc.initial.t + f * te;
            if (t >= tr.t_begin() && t <= tr.t_final()) {
                b.checkpoints.push_back({f, diagnose(tr.at(t), ps, opt.diagnostics, te)});
            }
        }
        std::vector<double> grid;
        for (double t : tr.t) {
            if (t <= te) {
                grid.push_back(t);
            }
        }
        b.stage_diagnostics = diagnose_along(tr, ps, grid, opt.diagnostics, te, opt.jobs);

        DiagnosticsOptions fixed = opt.diagnostics;
        fixed.fixed_M = opt.table_M;
        std::vector<double> samples;
        const std::size_t n = opt.persistence_samples;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = n == 1 ? opt.persistence_lo
                                    : opt.persistence_lo + (opt.persistence_hi - opt.persistence_lo) *
                                                               static_cast<double>(i) / static_cast<double>(n - 1);
            samples.push_back(sc.initial.t + f * te);
        }
        b.persistence = diagnose_along(tr, ps, samples, fixed, te, opt.jobs);
    }
    b.constraint_errors = constraint_errors(tr, ps, b.t_exp());
    b.equilibria = all_equilibria(ps, opt.jobs);

    std::vector<Equilibrium> stable;
    for (const auto& e : b.equilibria) {
        if (e.stable && e.feasible) {
            stable.push_back(e);
        }
    }
    b.attractor = classify_attractor(tr.y.back(), stable, opt.attractor_tol);
    if (b.attractor == Attractor::unresolved) {
        IntegratorConfig more = opt.integrator;
        more.t_end = std::max(cfg.t_end, 400.0);
        b.attractor = run_to_attractor(tr.final_state(), ps, stable, more, opt.attractor_tol).attractor;
    }
    return b;
}

// ---------------------------------------------------------------- tables

struct TableEntry {
    int target = 0;  // process 1..15 or variable index 0..3
    double value = 0.0;
};

/// Entries by descending |value| (ties to the lower index), cut once the
/// cumulative |value| exceeds `coverage`.
template <class Row>
[[nodiscard]] std::vector<TableEntry> truncate_entries(const Row& row, int index_base, double coverage = 0.95) {
    std::vector<TableEntry> all;
    for (int k = 0; k < static_cast<int>(row.size()); ++k) {
        all.push_back({k + index_base, row[k]});
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const TableEntry& a, const TableEntry& b) { return std::abs(a.value) > std::abs(b.value); });
    std::vector<TableEntry> out;
    double cum = 0.0;
    for (const auto& e : all) {
        if (cum > coverage) {
            break;
        }
        out.push_back(e);
        cum += std::abs(e.value);
    }
    return out;
}

struct ModeReport {
    int mode = 0;  // 1-based, timescale order
    double tau = 0.0;
    bool explosive = false;
    std::vector<TableEntry> api;
    std::vector<TableEntry> tpi;
    std::vector<TableEntry> po;  // target = variable index
};

struct CheckpointReport {
    double fraction = 0.0;
    double t = 0.0;
    int M = 0;
    std::vector<ModeReport> modes;
};

struct ImportanceSummary {
    int process = 0;
    double significant_fraction = 0.0;  // share of samples with |II| above the threshold
    double mean_value = 0.0;            // signed mean over the samples
    bool persistent = false;
};

struct TablesReport {
    std::string scenario;
    double t_exp = 0.0;
    std::vector<CheckpointReport> checkpoints;
    std::array<std::vector<ImportanceSummary>, kVariables> importance;  // processes that were ever significant

    [[nodiscard]] std::vector<int> persistent_set(int var) const {
        std::vector<int> out;
        for (const auto& e : importance.at(var)) {
            if (e.persistent) {
                out.push_back(e.process);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

[[nodiscard]] inline TablesReport report_tables(const ScenarioBundle& b, const RunOptions& opt = {}) {
    TablesReport r;
    r.scenario = b.scenario.name;
    r.t_exp = b.t_exp();
    for (const auto& cp : b.checkpoints) {
        CheckpointReport c;
        c.fraction = cp.fraction;
        c.t = cp.record.t;
        c.M = cp.record.M;
        for (int n = 0; n < kModes; ++n) {
            ModeReport m;
            m.mode = n + 1;
            m.tau = cp.record.modes.tau[n];
            m.explosive = cp.record.modes.explosive(n);
            const ModeTable& a = cp.record.api.values;
            const ModeTable& t = cp.record.tpi.index.values;
            m.api = truncate_entries(std::vector<double>(a.row(n).begin(), a.row(n).end()), 1);
            m.tpi = truncate_entries(std::vector<double>(t.row(n).begin(), t.row(n).end()), 1);
            const Mat4& po = cp.record.po;
            m.po = truncate_entries(std::vector<double>(po.row(n).begin(), po.row(n).end()), 0);
            c.modes.push_back(std::move(m));
        }
        r.checkpoints.push_back(std::move(c));
    }
    const double n = static_cast<double>(b.persistence.size());
    for (int i = 0; i < kVariables; ++i) {
        for (int k = 0; k < kProcesses; ++k) {
            std::size_t hits = 0;
            double sum = 0.0;
            for (const auto& rec : b.persistence) {
                const double v = rec.ii.values(i, k);
                sum += v;
                if (rec.ii.defined[i] && std::abs(v) > opt.significance) {
                    ++hits;
                }
            }
            if (hits == 0) {
                continue;
            }
            ImportanceSummary s;
            s.process = k + 1;
            s.significant_fraction = static_cast<double>(hits) / n;
            s.mean_value = sum / n;
            s.persistent = s.significant_fraction >= opt.persistence_fraction;
            r.importance[i].push_back(s);
        }
    }
    return r;
}

/// Union of the persistent II processes per variable across several reports.
[[nodiscard]] inline std::array<std::vector<int>, kVariables> persistent_union(const std::vector<TablesReport>& reports) {
    std::array<std::vector<int>, kVariables> out;
    for (int i = 0; i < kVariables; ++i) {
        for (const auto& r : reports) {
            for (int k : r.persistent_set(i)) {
                out[i].push_back(k);
            }
        }
        std::sort(out[i].begin(), out[i].end());
        out[i].erase(std::unique(out[i].begin(), out[i].end()), out[i].end());
    }
    return out;
}

// ---------------------------------------------------------- perturbations

struct PerturbationSpec {
    std::string parameter;
    double multiplier = 1.0;
    Scenario baseline;

    void validate() const {
        if (!ParameterSet::has(parameter)) {
            throw ConfigError("unknown parameter '" + parameter + "'");
        }
        if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
            throw ConfigError("perturbation multiplier must be > 0");
        }
    }
};

enum class Effect { increase, decrease, negligible };

[[nodiscard]] inline const char* to_string(Effect e) {
    switch (e) {
    case Effect::increase: return "increase";
    case Effect::decrease: return "decrease";
    case Effect::negligible: return "negligible";
    }
    return "?";
}

[[nodiscard]] inline Effect classify_change(double relative, double negligible = 0.05) {
    if (std::abs(relative) < negligible) {
        return Effect::negligible;
    }
    return relative > 0.0 ? Effect::increase : Effect::decrease;
}

struct PerturbationReport {
    std::string parameter;
    double multiplier = 1.0;
    std::string scenario;
    double t_exp_base = 0.0;
    double t_exp_perturbed = 0.0;
    double window_lo = 0.0;  // days, baseline window [0.2, 0.95] t_exp
    double window_hi = 0.0;
    Vec4 window_ratio = Vec4::Ones();     // mean of perturbed/baseline over the window
    Vec4 max_rel_change = Vec4::Zero();   // max |perturbed - baseline|/max(|baseline|, 1) over the run
    Attractor attractor_base = Attractor::unresolved;
    Attractor attractor_perturbed = Attractor::unresolved;

    [[nodiscard]] double t_exp_change() const { return (t_exp_perturbed - t_exp_base) / t_exp_base; }
    [[nodiscard]] Effect t_exp_effect() const { return classify_change(t_exp_change()); }
    [[nodiscard]] Effect window_effect(int var) const { return classify_change(window_ratio[var] - 1.0); }
};

/// Runs the baseline and the perturbed scenario and measures the response on the
/// baseline's output grid.
[[nodiscard]] inline PerturbationReport run_perturbation(const PerturbationSpec& spec, RunOptions opt = {}) {
    spec.validate();
    Scenario pert = spec.baseline;
    pert.params[spec.parameter] *= spec.multiplier;
    pert.name = spec.baseline.name + "_" + spec.parameter + "x" + std::to_string(spec.multiplier);
    pert.params.validate();

    opt.persistence_samples = 0;
    opt.checkpoints.clear();
    const unsigned inner = std::max(1u, resolve_jobs(opt.jobs) / 2);
    const std::vector<const Scenario*> runs{&spec.baseline, &pert};
    auto bundles = parallel_map(2, opt.jobs, [&](std::size_t i) {
        RunOptions o = opt;
        o.jobs = inner;
        return run_scenario(*runs[i], o);
    });
    const auto& base = bundles[0];
    const auto& per = bundles[1];
    if (!base.stage || !per.stage) {
        throw DiagnosticError("perturbation needs an explosive stage in both runs");
    }
    PerturbationReport r;
    r.parameter = spec.parameter;
    r.multiplier = spec.multiplier;
    r.scenario = spec.baseline.name;
    r.t_exp_base = base.t_exp();
    r.t_exp_perturbed = per.t_exp();
    r.window_lo = spec.baseline.initial.t + 0.2 * r.t_exp_base;
    r.window_hi = spec.baseline.initial.t + 0.95 * r.t_exp_base;
    r.attractor_base = base.attractor;
    r.attractor_perturbed = per.attractor;

    Vec4 sum = Vec4::Zero();
    std::size_t n = 0;
    const auto& tb = base.trajectory;
    const auto& tp = per.trajectory;
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const double t = tb.t[i];
        if (t > tp.t_final()) {
            break;
        }
        const Vec4 yb = tb.y[i];
        const Vec4 yp = tp.at(t).vec();
        for (int k = 0; k < kVariables; ++k) {
            r.max_rel_change[k] =
                std::max(r.max_rel_change[k], std::abs(yp[k] - yb[k]) / std::max(std::abs(yb[k]), 1.0));
        }
        if (t >= r.window_lo && t <= r.window_hi) {
            sum += (yp.array() / yb.array()).matrix();
            ++n;
        }
    }
    if (n > 0) {
        r.window_ratio = sum / static_cast<double>(n);
    }
    return r;
}

} // namespace tumorcsp
