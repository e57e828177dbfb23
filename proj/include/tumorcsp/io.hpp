#pragma once

// CSV and JSON writers for the run artifacts. Numbers are written with 17
// significant digits so reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tumorcsp/csp.hpp"
#include "tumorcsp/equilibria.hpp"
#include "tumorcsp/errors.hpp"
#include "tumorcsp/harness.hpp"
#include "tumorcsp/integrator.hpp"
#include "tumorcsp/reduction.hpp"

namespace tumorcsp::io {

[[nodiscard]] inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Compact form for file and directory names.
[[nodiscard]] inline std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path) {
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) {
            throw ConfigError("cannot write " + path.string());
        }
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) {
                out_ << ',';
            }
            out_ << cells[i];
        }
        out_ << '\n';
    }

    ~CsvWriter() { out_.flush(); }

    void close() {
        out_.close();
        if (out_.fail()) {
            throw ConfigError("failed writing " + path_.string());
        }
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    out.close();
    if (out.fail()) {
        throw ConfigError("failed writing " + path.string());
    }
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& tr) {
    CsvWriter w(path, {"t", "T", "N", "L", "C"});
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const Vec4& y = tr.y[i];
        w.row({num(tr.t[i]), num(y[kT]), num(y[kN]), num(y[kL]), num(y[kC])});
    }
    w.close();
}

inline void write_timescales(const std::filesystem::path& path, const std::vector<TimescaleRow>& rows) {
    CsvWriter w(path, {"t", "tau1", "tau2", "tau3", "tau4", "re_lambda1", "re_lambda2", "re_lambda3", "re_lambda4",
                       "explosive_flag"});
    for (const auto& r : rows) {
        w.row({num(r.t), num(r.tau[0]), num(r.tau[1]), num(r.tau[2]), num(r.tau[3]), num(r.re_lambda[0]),
               num(r.re_lambda[1]), num(r.re_lambda[2]), num(r.re_lambda[3]), r.explosive ? "1" : "0"});
    }
    w.close();
}

inline void append_diagnostics(CsvWriter& w, const DiagnosticsRecord& r) {
    const std::string t = num(r.t);
    const std::string tx = num(r.t_over_texp);
    for (int n = 0; n < kModes; ++n) {
        const std::string mode = std::to_string(n + 1);
        if (r.api.defined[n]) {
            for (int k = 0; k < kProcesses; ++k) {
                w.row({t, tx, mode, "API", std::to_string(k + 1), num(r.api.values(n, k))});
            }
        }
        if (r.tpi.index.defined[n]) {
            for (int k = 0; k < kProcesses; ++k) {
                w.row({t, tx, mode, "TPI", std::to_string(k + 1), num(r.tpi.index.values(n, k))});
            }
        }
        for (int i = 0; i < kVariables; ++i) {
            w.row({t, tx, mode, "Po", std::string(1, kVariableNames[i]), num(r.po(n, i))});
        }
    }
    for (int i = 0; i < kVariables; ++i) {
        if (!r.ii.defined[i]) {
            continue;
        }
        const std::string var(1, kVariableNames[i]);
        for (int k = 0; k < kProcesses; ++k) {
            w.row({t, tx, var, "II", std::to_string(k + 1), num(r.ii.values(i, k))});
        }
    }
}

inline const std::vector<std::string> kDiagnosticsHeader{"t", "t_over_texp", "mode_or_variable", "index_type",
                                                         "target", "value"};

inline void write_diagnostics(const std::filesystem::path& path, const std::vector<const DiagnosticsRecord*>& recs) {
    CsvWriter w(path, kDiagnosticsHeader);
    for (const auto* r : recs) {
        append_diagnostics(w, *r);
    }
    w.close();
}

[[nodiscard]] inline nlohmann::json equilibrium_json(const Equilibrium& e) {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& z : e.eigenvalues) {
        ev.push_back({{"re", z.real()}, {"im", z.imag()}});
    }
    return {{"kind", to_string(e.kind)}, {"T", e.state.T},         {"N", e.state.N},
            {"L", e.state.L},            {"C", e.state.C},         {"eigenvalues", ev},
            {"stable", e.stable},        {"feasible", e.feasible}};
}

inline void write_equilibria(const std::filesystem::path& path, const std::vector<Equilibrium>& eqs) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : eqs) {
        j.push_back(equilibrium_json(e));
    }
    write_json(path, j);
}

inline void write_bifurcation(const std::filesystem::path& path, const BifurcationScan& scan) {
    CsvWriter w(path, {"param_name", "param_value", "branch_id", "T_star", "stable", "kind"});
    for (const auto& s : scan.rows()) {
        w.row({scan.parameter, num(s.value), std::to_string(s.branch_id), num(s.T_star), s.stable ? "1" : "0",
               to_string(s.kind)});
    }
    w.close();
}

inline void write_reduced_trajectory(const std::filesystem::path& path, const Trajectory& tr) {
    CsvWriter w(path, {"t", "T", "C", "N_hat", "L_hat"});
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const Vec4& y = tr.y[i];
        w.row({num(tr.t[i]), num(y[kT]), num(y[kC]), num(y[kN]), num(y[kL])});
    }
    w.close();
}

inline void write_constraint_errors(const std::filesystem::path& path, const ConstraintErrors& ce) {
    CsvWriter w(path, {"t", "t_over_texp", "RE_N", "RE_L"});
    for (std::size_t i = 0; i < ce.t.size(); ++i) {
        w.row({num(ce.t[i]), num(ce.t_over_texp[i]), num(ce.re_N[i]), num(ce.re_L[i])});
    }
    w.close();
}

[[nodiscard]] inline nlohmann::json entries_json(const std::vector<TableEntry>& es, bool variables) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : es) {
        if (variables) {
            j.push_back({{"variable", std::string(1, kVariableNames[e.target])}, {"value", e.value}});
        } else {
            j.push_back({{"process", e.target}, {"value", e.value}});
        }
    }
    return j;
}

[[nodiscard]] inline nlohmann::json tables_json(const TablesReport& r) {
    nlohmann::json cps = nlohmann::json::array();
    for (const auto& c : r.checkpoints) {
        nlohmann::json modes = nlohmann::json::array();
        for (const auto& m : c.modes) {
            modes.push_back({{"mode", m.mode},
                             {"tau", m.tau},
                             {"explosive", m.explosive},
                             {"API", entries_json(m.api, false)},
                             {"TPI", entries_json(m.tpi, false)},
                             {"Po", entries_json(m.po, true)}});
        }
        cps.push_back({{"t_over_texp", c.fraction}, {"t", c.t}, {"M", c.M}, {"modes", modes}});
    }
    nlohmann::json ii = nlohmann::json::object();
    for (int i = 0; i < kVariables; ++i) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& s : r.importance[i]) {
            list.push_back({{"process", s.process},
                            {"significant_fraction", s.significant_fraction},
                            {"mean_value", s.mean_value},
                            {"persistent", s.persistent}});
        }
        ii[std::string(1, kVariableNames[i])] = list;
    }
    return {{"scenario", r.scenario}, {"t_exp", r.t_exp}, {"checkpoints", cps}, {"importance", ii}};
}

[[nodiscard]] inline nlohmann::json stage_json(const std::optional<ExplosiveStage>& st) {
    if (!st) {
        return nullptr;
    }
    return {{"start", st->start}, {"end", st->end}, {"duration", st->duration()}, {"mode", st->mode},
            {"open_ended", st->open_ended}};
}

[[nodiscard]] inline nlohmann::json perturbation_json(const PerturbationReport& r) {
    auto vec = [](const Vec4& v) {
        return nlohmann::json{{"T", v[kT]}, {"N", v[kN]}, {"L", v[kL]}, {"C", v[kC]}};
    };
    nlohmann::json effects = nlohmann::json::object();
    for (int i = 0; i < kVariables; ++i) {
        effects[std::string(1, kVariableNames[i])] = to_string(r.window_effect(i));
    }
    return {{"parameter", r.parameter},
            {"multiplier", r.multiplier},
            {"scenario", r.scenario},
            {"t_exp_base", r.t_exp_base},
            {"t_exp_perturbed", r.t_exp_perturbed},
            {"t_exp_change", r.t_exp_change()},
            {"t_exp_effect", to_string(r.t_exp_effect())},
            {"window", {r.window_lo, r.window_hi}},
            {"window_ratio", vec(r.window_ratio)},
            {"window_effect", effects},
            {"max_rel_change", vec(r.max_rel_change)},
            {"attractor_base", to_string(r.attractor_base)},
            {"attractor_perturbed", to_string(r.attractor_perturbed)}};
}

} // namespace tumorcsp::io
