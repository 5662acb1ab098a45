#pragma once

#include <stdexcept>
#include <string>

namespace ebit {

// Base class for all library errors. Subclasses map onto CLI exit codes:
// config/usage -> 1, data -> 2, numerical/training -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

struct NumericalError : Error {
    int step_index = -1;
    explicit NumericalError(const std::string& msg, int step = -1)
        : Error("numerical error: " + msg), step_index(step) {}
};

struct TrainingError : Error {
    std::string component;
    TrainingError(const std::string& comp, const std::string& msg)
        : Error("training error [" + comp + "]: " + msg), component(comp) {}
};

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error("checkpoint error: " + msg) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

}  // namespace ebit
