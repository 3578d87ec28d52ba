#pragma once

#include <stdexcept>
#include <string>

namespace dj {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/model shape violations (bad input shape, inconsistent parameters).
struct ShapeError : Error {
    using Error::Error;
};

// Bad argument values (ranges, empty batches, mode mismatches).
struct ArgumentError : Error {
    using Error::Error;
};

// Out-of-range layer/neuron/class indices.
struct IndexError : Error {
    using Error::Error;
};

// Malformed files; message names the offending field.
struct FormatError : Error {
    using Error::Error;
};

// Metric cannot be computed for this model pair (class count or architecture mismatch).
struct NotApplicableError : Error {
    using Error::Error;
};

// Artifact hash does not match the recorded provenance chain.
struct ProvenanceError : Error {
    using Error::Error;
};

// No applicable metric survived; no verdict possible.
struct UndecidableError : Error {
    using Error::Error;
};

// Loss diverged during optimization.
struct TrainingError : Error {
    using Error::Error;
};

// Too few negative models to calibrate a threshold.
struct InsufficientNegativesError : Error {
    using Error::Error;
};

} // namespace dj
