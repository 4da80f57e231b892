#include "lmcp/error.hpp"

namespace lmcp {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnsupportedDType: return "UnsupportedDType";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonSPDMatrix: return "NonSPDMatrix";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::DegenerateGrid: return "DegenerateGrid";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::EmptyCalibrationSet: return "EmptyCalibrationSet";
    case ErrorCode::EmptyLedger: return "EmptyLedger";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::UnsupportedNoise: return "UnsupportedNoise";
    case ErrorCode::UncalibratedLandmark: return "UncalibratedLandmark";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    }
    return "Unknown";
}

} // namespace lmcp
