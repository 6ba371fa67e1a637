#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drt {

enum class ErrorCode {
    // input errors
    SizeMismatch,
    BadHeader,
    BadParams,
    SigmaTooLarge,
    BadSigmaOrder,
    EmptyClass,
    BadHyperparameters,
    DimensionMismatch,
    BadModelFile,
    VersionMismatch,
    TooFewPoints,
    UnknownClassId,
    InsufficientSamples,
    NonPositiveValue,
    NonPositiveInput,
    MissingClassCoefficients,
    BadOrdering,
    SaturationOutOfRange,
    MalformedCode,
    ParseError,
    BadConfig,
    NoPoreVoxels,
    // numeric errors
    DegenerateHistogram,
    NoConvergence,
    // i/o errors
    IoFailure,
    MissingArtifacts,
};

inline std::string_view to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::SizeMismatch: return "SizeMismatch";
        case ErrorCode::BadHeader: return "BadHeader";
        case ErrorCode::BadParams: return "BadParams";
        case ErrorCode::SigmaTooLarge: return "SigmaTooLarge";
        case ErrorCode::BadSigmaOrder: return "BadSigmaOrder";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::BadHyperparameters: return "BadHyperparameters";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::BadModelFile: return "BadModelFile";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::UnknownClassId: return "UnknownClassId";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::NonPositiveValue: return "NonPositiveValue";
        case ErrorCode::NonPositiveInput: return "NonPositiveInput";
        case ErrorCode::MissingClassCoefficients: return "MissingClassCoefficients";
        case ErrorCode::BadOrdering: return "BadOrdering";
        case ErrorCode::SaturationOutOfRange: return "SaturationOutOfRange";
        case ErrorCode::MalformedCode: return "MalformedCode";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::NoPoreVoxels: return "NoPoreVoxels";
        case ErrorCode::DegenerateHistogram: return "DegenerateHistogram";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    }
    return "Unknown";
}

/// Process exit status for a failure: 2 input, 3 numeric/convergence, 4 I/O.
inline int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::DegenerateHistogram:
        case ErrorCode::NoConvergence:
            return 3;
        case ErrorCode::IoFailure:
        case ErrorCode::MissingArtifacts:
            return 4;
        default:
            return 2;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace drt
