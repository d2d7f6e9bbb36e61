#pragma once

#include <stdexcept>
#include <string>

namespace dcs {

// Error taxonomy. The CLI maps each family onto a process exit code.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape mismatches are configuration problems from the caller's point of view.
class DimensionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PersistenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dcs
