#pragma once

#include <stdexcept>
#include <string>

namespace dashlab {

// Invalid numeric input (non-finite bid, negative precision, r outside [0, 1), ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Inconsistent setup: grid not covering the cost, empty prior, bad experiment config.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Stimuli for which a normalized quantity is undefined (pi_OPT <= 0, benchmark <= baseline).
class DegenerateStimulusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stimulus generator exhausted its rejection budget.
class RangeTooNarrowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every optimizer start failed; carries a diagnostic summary in what().
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dashlab
