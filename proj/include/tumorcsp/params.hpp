#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tumorcsp/errors.hpp"

namespace tumorcsp {

/// Kinetic constants of the four-population tumor-immune model.
/// Default construction gives the patient-9 calibration. Units: time in days,
/// populations in cells.
struct ParameterSet {
    double a = 4.31e-1;     // tumor growth rate, 1/day
    double b = 1.02e-9;     // inverse carrying capacity, 1/cell
    double c = 6.41e-11;    // NK kill rate, 1/(day cell)
    double d = 2.34;        // saturation level of CD8+ kill, 1/day
    double e = 2.08e-7;     // NK production from C, 1/day
    double f = 4.12e-2;     // NK death rate, 1/day
    double g = 1.25e-2;     // NK recruitment, 1/day
    double h = 2.02e7;      // NK recruitment steepness, cell^2
    double j = 2.49e-2;     // CD8+ recruitment, 1/day
    double k = 3.66e7;      // CD8+ recruitment steepness, cell^2
    double l = 2.09;        // kill exponent
    double m = 2.04e-1;     // CD8+ death rate, 1/day
    double s = 8.39e-2;     // kill steepness
    double u = 3.00e-10;    // NK regulation of CD8+, 1/(day cell^2)
    double alpha = 7.50e8;  // C source, cell/day
    double beta = 1.20e-2;  // C death rate, 1/day
    double r1 = 1.10e-7;    // CD8+ stimulation by NK-tumor contact, 1/(day cell)
    double r2 = 6.50e-11;   // CD8+ stimulation by C-tumor contact, 1/(day cell)
    double p = 3.42e-6;     // NK inactivation by tumor, 1/(day cell)
    double q = 1.42e-6;     // CD8+ inactivation by tumor, 1/(day cell)

    static constexpr std::size_t count = 20;

    static constexpr std::array<std::string_view, count> names{
        "a", "b", "c", "d", "e", "f", "g", "h", "j", "k",
        "l", "m", "s", "u", "alpha", "beta", "r1", "r2", "p", "q"};

    /// Member lookup by the published parameter name; throws ConfigError for unknown names.
    [[nodiscard]] double& operator[](std::string_view name) { return *slot(*this, name); }
    [[nodiscard]] double operator[](std::string_view name) const {
        return *slot(const_cast<ParameterSet&>(*this), name);
    }

    [[nodiscard]] static bool has(std::string_view name) {
        for (auto n : names) {
            if (n == name) {
                return true;
            }
        }
        return false;
    }

    /// Throws ConfigError unless every value is finite and strictly positive.
    void validate() const {
        for (auto n : names) {
            const double v = (*this)[n];
            if (!(std::isfinite(v) && v > 0.0)) {
                throw ConfigError("parameter '" + std::string(n) + "' must be finite and > 0");
            }
        }
    }

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

private:
    static double* slot(ParameterSet& ps, std::string_view name) {
        std::array<double*, count> ptrs{&ps.a, &ps.b, &ps.c, &ps.d, &ps.e, &ps.f, &ps.g,
                                        &ps.h, &ps.j, &ps.k, &ps.l, &ps.m, &ps.s, &ps.u,
                                        &ps.alpha, &ps.beta, &ps.r1, &ps.r2, &ps.p, &ps.q};
        for (std::size_t i = 0; i < count; ++i) {
            if (names[i] == name) {
                return ptrs[i];
            }
        }
        throw ConfigError("unknown parameter name '" + std::string(name) + "'");
    }
};

[[nodiscard]] inline nlohmann::json to_json(const ParameterSet& ps) {
    nlohmann::json j = nlohmann::json::object();
    for (auto n : ParameterSet::names) {
        j[std::string(n)] = ps[n];
    }
    return j;
}

/// Flat object with the 20 published keys. Missing keys keep the patient-9
/// value, unknown keys and non-numeric values are rejected.
[[nodiscard]] inline ParameterSet parameters_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("parameter file must contain a JSON object");
    }
    ParameterSet ps;
    for (const auto& [key, value] : j.items()) {
        if (!ParameterSet::has(key)) {
            throw ConfigError("unknown parameter key '" + key + "'");
        }
        if (!value.is_number()) {
            throw ConfigError("parameter '" + key + "' must be a number");
        }
        ps[key] = value.get<double>();
    }
    ps.validate();
    return ps;
}

[[nodiscard]] inline ParameterSet load_parameters(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open parameter file '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed parameter file '" + path + "': " + e.what());
    }
    return parameters_from_json(j);
}

} // namespace tumorcsp
