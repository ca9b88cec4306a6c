#pragma once

#include <stdexcept>
#include <string>

namespace redprobe {

// Common base so the CLI can distinguish our failures from everything else.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/length mismatch between operands. Message names both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration value or unparsable config file.
struct ConfigError : Error {
    using Error::Error;
};

// Bad or missing input data (empty corpus, empty split, undersized task, ...).
struct DataError : Error {
    using Error::Error;
};

// Token id outside the vocabulary.
struct VocabularyError : DataError {
    using DataError::DataError;
};

// Input sequence longer than max_len.
struct TruncationError : DataError {
    using DataError::DataError;
};

// Requested more distinct subsets than the population holds.
struct SamplingError : DataError {
    using DataError::DataError;
};

// Operation not defined for this task kind (e.g. error analysis on regression).
struct UnsupportedTaskError : DataError {
    using DataError::DataError;
};

// Pipeline stage received fewer inputs than its contract requires.
struct InsufficientDataError : DataError {
    using DataError::DataError;
};

// Malformed container file (bad magic, truncated section, overlapping table).
struct FormatError : Error {
    using Error::Error;
};

// Non-finite value escaped a numeric operation.
struct NumericError : Error {
    using Error::Error;
};

// backward() called twice on the same recorded computation.
struct StaleTapeError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; message carries the epoch index.
struct TrainingError : Error {
    using Error::Error;
};

// Index outside a trace level / dimension range.
struct IndexError : Error {
    using Error::Error;
};

// Duplicate subsets or otherwise invalid probe input.
struct ValidationError : Error {
    using Error::Error;
};

// Filesystem failure (unwritable path, lock contention).
struct IoError : Error {
    using Error::Error;
};

}  // namespace redprobe
