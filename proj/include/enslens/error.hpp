#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace enslens {

enum class ErrorCode {
    MissingFile,
    SchemaViolation,
    InconsistentDims,
    UnknownMember,
    IndexOutOfRange,
    NotActivePoint,
    ConfigInvalid,
    EmptyCluster,
    DimensionMismatch,
    BadInterval,
    EmptySelection,
    Degenerate,
    TooFewPoints,
    TooManyParameters,
    MismatchedInputs,
    GridMismatch,
    IoError,
};

std::string_view to_string(ErrorCode code);

// Every engine failure is reported as an Error carrying one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace enslens
