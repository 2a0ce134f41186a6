#include "persp/errors.hpp"

namespace persp {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kOk: return "Ok";
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kIo: return "IoError";
        case ErrorCode::kMissingField: return "MissingField";
        case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
        case ErrorCode::kMalformedLine: return "MalformedLine";
        case ErrorCode::kInvalidSplit: return "InvalidSplit";
        case ErrorCode::kMarkerCollision: return "MarkerCollision";
        case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
        case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::kEmptyGeneration: return "EmptyGeneration";
        case ErrorCode::kFieldExtractionFailed: return "FieldExtractionFailed";
        case ErrorCode::kParseFailed: return "ParseFailed";
        case ErrorCode::kNoNewContent: return "NoNewContent";
        case ErrorCode::kPrecondition: return "PreconditionFailed";
        case ErrorCode::kEncoderFailure: return "EncoderFailure";
        case ErrorCode::kEmptyText: return "EmptyText";
        case ErrorCode::kLengthMismatch: return "LengthMismatch";
        case ErrorCode::kDegenerateVocabulary: return "DegenerateVocabulary";
        case ErrorCode::kGateMismatch: return "GateMismatch";
        case ErrorCode::kSessionEnded: return "SessionEnded";
        case ErrorCode::kNoUtterancePending: return "NoUtterancePending";
        case ErrorCode::kDeliveryFailed: return "DeliveryFailed";
        case ErrorCode::kZeroVariance: return "ZeroVariance";
        case ErrorCode::kTooFewPoints: return "TooFewPoints";
        case ErrorCode::kIncompleteResponses: return "IncompleteResponses";
        case ErrorCode::kNotFound: return "NotFound";
        case ErrorCode::kInternal: return "Internal";
    }
    return "Unknown";
}

}  // namespace persp
