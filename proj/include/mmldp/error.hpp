#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmldp {

enum class ErrorCode {
    NonSquare,
    RowSumNonzero,
    NonpositiveOffDiagonal,
    NonpositiveTilt,
    SingularSystem,
    NoConvergence,
    GridMismatch,
    InfeasibleTarget,
    NoDescent,
    SingularDiffusion,
    InvalidArgument,
    ParseError,
    ValidationError,
    IoError,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Validation-type failures map to exit status 1, numerical breakdowns to 2.
bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace mmldp
