#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsr {

enum class Errc {
    NonPowerOfTwo,
    OrderTooLarge,
    EmptyRow,
    InvalidEntry,
    NotHadamard,
    PermutationMismatch,
    GroupDoesNotDivide,
    InvalidSpec,
    EmptyCalibration,
    SingularHessian,
    ShapeMismatch,
    DimensionMismatch,
    NotOrthogonal,
    InvalidConfig,
    IoFailure,
    UnsupportedDtype,
    BadMagic,
    VersionUnsupported,
    TruncatedPayload,
    BadMetadata,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace gsr
