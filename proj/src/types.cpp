#include "wsi/types.hpp"

namespace wsi {

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::ConstantColumn: return "ConstantColumn";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidResponse: return "InvalidResponse";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonNumericCell: return "NonNumericCell";
    case ErrorKind::MissingResponse: return "MissingResponse";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::NotActive: return "NotActive";
    case ErrorKind::SeparationDetected: return "SeparationDetected";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    }
    return "Unknown";
}

bool is_numerical(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::SeparationDetected:
    case ErrorKind::SingularInformation:
    case ErrorKind::Overflow:
    case ErrorKind::DegenerateDenominator:
    case ErrorKind::SingularSystem:
    case ErrorKind::TooManyFailures:
        return true;
    default:
        return false;
    }
}

} // namespace wsi
