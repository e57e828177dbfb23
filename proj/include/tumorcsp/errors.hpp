#pragma once

#include <stdexcept>
#include <string>

namespace tumorcsp {

/// Evaluation outside the model domain (T <= 0, infeasible populations, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Process or mode index outside its valid range.
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Numerical diagnostic failure (defective eigenbasis, step-size collapse, ...).
class DiagnosticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration: parameter files, scenario files, CLI values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace tumorcsp
