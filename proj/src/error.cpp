// SPDX-License-Identifier: Apache-2.0

#include "resadapt/error.hpp"

namespace resadapt {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::NoRetainedSamples: return "NoRetainedSamples";
    case ErrorCode::DomainIndexOutOfRange: return "DomainIndexOutOfRange";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::MissingDomainTable: return "MissingDomainTable";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::GradientMismatch: return "GradientMismatch";
    }
    return "Unknown";
}

} // namespace resadapt
