#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace persp {

// Numeric values are part of the C ABI (see persp.h); append only.
enum class ErrorCode : int {
    kOk = 0,
    kInvalidArgument = 1,
    kIo = 2,
    kMissingField = 3,
    kEmptyCorpus = 4,
    kMalformedLine = 5,
    kInvalidSplit = 6,
    kMarkerCollision = 7,
    kBackendUnavailable = 8,
    kNonFiniteLoss = 9,
    kEmptyGeneration = 10,
    kFieldExtractionFailed = 11,
    kParseFailed = 12,
    kNoNewContent = 13,
    kPrecondition = 14,
    kEncoderFailure = 15,
    kEmptyText = 16,
    kLengthMismatch = 17,
    kDegenerateVocabulary = 18,
    kGateMismatch = 19,
    kSessionEnded = 20,
    kNoUtterancePending = 21,
    kDeliveryFailed = 22,
    kZeroVariance = 23,
    kTooFewPoints = 24,
    kIncompleteResponses = 25,
    kNotFound = 26,
    kInternal = 27,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace persp
