#pragma once

#include <stdexcept>
#include <string>

namespace cadaseg {

// Error taxonomy shared by the whole library. The CLI maps these onto
// process exit codes (config-file 2, semantic config 3, runtime 4).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A parameter given to an operation is outside its admissible range.
struct ParameterError : Error {
    using Error::Error;
};

// Input data (images, masks, batches) violates an operation precondition.
struct InputError : Error {
    using Error::Error;
};

// Shape or structural mismatch between tensors / parameter sets.
struct ShapeError : Error {
    using Error::Error;
};

// Per-domain batch too small for batch statistics.
struct BatchSizeError : Error {
    using Error::Error;
};

// Non-finite values, zero norms, NaN losses.
struct NumericError : Error {
    using Error::Error;
};

// A config file could not be read or parsed.
struct ConfigFileError : Error {
    using Error::Error;
};

// The config parsed fine but is semantically invalid (method/pool
// mismatch, inconsistent counts, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

// A metric that has no defined value for the given inputs (e.g. surface
// distance of an empty mask). Reported as missing, never as 0.
struct UndefinedMetricError : Error {
    using Error::Error;
};

}  // namespace cadaseg
