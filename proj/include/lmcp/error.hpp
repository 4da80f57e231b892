#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lmcp {

enum class ErrorCode {
    MalformedHeader,
    ShapeMismatch,
    UnsupportedDType,
    IoError,
    MissingTensor,
    InvariantViolation,
    DimMismatch,
    NonSPDMatrix,
    IndexOutOfRange,
    OutOfDomain,
    DegenerateGrid,
    GeometryMismatch,
    EmptyCalibrationSet,
    EmptyLedger,
    MissingField,
    LengthMismatch,
    DegenerateInput,
    InvalidConfig,
    InvalidAlpha,
    UnsupportedNoise,
    UncalibratedLandmark,
    IdMismatch,
    UnknownFormat,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch on it without parsing text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace lmcp
