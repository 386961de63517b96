#include "mmldp/error.hpp"

namespace mmldp {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::RowSumNonzero: return "RowSumNonzero";
    case ErrorCode::NonpositiveOffDiagonal: return "NonpositiveOffDiagonal";
    case ErrorCode::NonpositiveTilt: return "NonpositiveTilt";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::InfeasibleTarget: return "InfeasibleTarget";
    case ErrorCode::NoDescent: return "NoDescent";
    case ErrorCode::SingularDiffusion: return "SingularDiffusion";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::NoConvergence:
    case ErrorCode::InfeasibleTarget:
    case ErrorCode::NoDescent:
    case ErrorCode::SingularDiffusion:
        return true;
    default:
        return false;
    }
}

} // namespace mmldp
