#pragma once

#include <stdexcept>
#include <string>

namespace kinepose {

// Error categories map 1:1 onto CLI exit codes (see README).
enum class ErrorCode {
    InvalidArgument = 2,
    BadConfig = 3,
    Io = 4,
    MalformedData = 5,
    VersionMismatch = 6,
    ChecksumMismatch = 7,
    NumericFailure = 8,
    DegenerateVector = 9,
    UnknownSensor = 10,
    DimensionMismatch = 11,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace kinepose
