// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace resadapt {

enum class ErrorCode {
    InvalidArgument,
    DimMismatch,
    DegenerateVector,
    NonFiniteValue,
    LengthMismatch,
    EmptyEvaluation,
    MalformedTemplate,
    NoRetainedSamples,
    DomainIndexOutOfRange,
    ConfigInvalid,
    BadMagic,
    UnsupportedVersion,
    TruncatedFile,
    SizeMismatch,
    MissingDomainTable,
    ManifestInvalid,
    MissingLabels,
    IoError,
    GradientMismatch,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace resadapt
