#include "enslens/error.hpp"

namespace enslens {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::InconsistentDims: return "InconsistentDims";
        case ErrorCode::UnknownMember: return "UnknownMember";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::NotActivePoint: return "NotActivePoint";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::EmptyCluster: return "EmptyCluster";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::BadInterval: return "BadInterval";
        case ErrorCode::EmptySelection: return "EmptySelection";
        case ErrorCode::Degenerate: return "Degenerate";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::TooManyParameters: return "TooManyParameters";
        case ErrorCode::MismatchedInputs: return "MismatchedInputs";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace enslens
