#include "gsr/errors.hpp"

namespace gsr {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::NonPowerOfTwo: return "NonPowerOfTwo";
        case Errc::OrderTooLarge: return "OrderTooLarge";
        case Errc::EmptyRow: return "EmptyRow";
        case Errc::InvalidEntry: return "InvalidEntry";
        case Errc::NotHadamard: return "NotHadamard";
        case Errc::PermutationMismatch: return "PermutationMismatch";
        case Errc::GroupDoesNotDivide: return "GroupDoesNotDivide";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::EmptyCalibration: return "EmptyCalibration";
        case Errc::SingularHessian: return "SingularHessian";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::NotOrthogonal: return "NotOrthogonal";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::IoFailure: return "IoFailure";
        case Errc::UnsupportedDtype: return "UnsupportedDtype";
        case Errc::BadMagic: return "BadMagic";
        case Errc::VersionUnsupported: return "VersionUnsupported";
        case Errc::TruncatedPayload: return "TruncatedPayload";
        case Errc::BadMetadata: return "BadMetadata";
    }
    return "Unknown";
}

}  // namespace gsr
