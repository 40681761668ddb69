#pragma once

#include <stdexcept>
#include <string>

namespace vnngp {

// Error taxonomy mirrored by CLI exit codes: argument errors exit 2,
// ingestion errors 3, numerical errors 4.

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Requests outside the supported envelope (e.g. exact GP beyond the size cap).
struct UnsupportedError : ArgumentError {
    using ArgumentError::ArgumentError;
};

struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace vnngp
