#include "proactive/error.hpp"

namespace proactive {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kConfigError: return "CONFIG_ERROR";
    case ErrorCode::kIoError: return "IO_ERROR";
    case ErrorCode::kMalformedRecord: return "MALFORMED_RECORD";
    case ErrorCode::kDuplicateId: return "DUPLICATE_ID";
    case ErrorCode::kInvalidBounds: return "INVALID_BOUNDS";
    case ErrorCode::kInsufficientSamples: return "INSUFFICIENT_SAMPLES";
    case ErrorCode::kEmptyCorpus: return "EMPTY_CORPUS";
    case ErrorCode::kNonTrainSample: return "NON_TRAIN_SAMPLE";
    case ErrorCode::kBackendUnavailable: return "BACKEND_UNAVAILABLE";
    case ErrorCode::kBackendError: return "BACKEND_ERROR";
    case ErrorCode::kBackendProtocol: return "BACKEND_PROTOCOL";
    case ErrorCode::kContextOverflow: return "CONTEXT_OVERFLOW";
    case ErrorCode::kEmptyText: return "EMPTY_TEXT";
    case ErrorCode::kClassifierNotConfigured: return "CLASSIFIER_NOT_CONFIGURED";
    case ErrorCode::kTooFewSegments: return "TOO_FEW_SEGMENTS";
    case ErrorCode::kUnparseableScore: return "UNPARSEABLE_SCORE";
    case ErrorCode::kDegenerateInput: return "DEGENERATE_INPUT";
    case ErrorCode::kMissingPlaceholder: return "MISSING_PLACEHOLDER";
    case ErrorCode::kTemplateInvalid: return "TEMPLATE_INVALID";
    case ErrorCode::kInsufficientDemonstrations: return "INSUFFICIENT_DEMONSTRATIONS";
    case ErrorCode::kStageFailed: return "STAGE_FAILED";
    case ErrorCode::kParseFailed: return "PARSE_FAILED";
    case ErrorCode::kMissingScores: return "MISSING_SCORES";
    case ErrorCode::kKTooLarge: return "K_TOO_LARGE";
    case ErrorCode::kEpisodeFailed: return "EPISODE_FAILED";
  }
  return "UNKNOWN";
}

}  // namespace proactive
