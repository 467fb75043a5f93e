#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scsd {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value fell outside the domain of an operation (log of a non-positive
/// number, a non-finite loss term).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes a warning line to stderr unless warnings are muted.
void log_warning(std::string_view message);

/// Mutes or unmutes log_warning; returns the previous setting.
bool set_warnings_muted(bool muted);

}  // namespace scsd
