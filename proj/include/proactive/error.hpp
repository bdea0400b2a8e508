#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace proactive {

// Stable error taxonomy shared by every module and mirrored one-to-one by the
// C API status codes (see proactive.h). Do not reorder.
enum class ErrorCode {
  kInvalidArgument = 1,
  kConfigError,
  kIoError,
  kMalformedRecord,
  kDuplicateId,
  kInvalidBounds,
  kInsufficientSamples,
  kEmptyCorpus,
  kNonTrainSample,
  kBackendUnavailable,
  kBackendError,
  kBackendProtocol,
  kContextOverflow,
  kEmptyText,
  kClassifierNotConfigured,
  kTooFewSegments,
  kUnparseableScore,
  kDegenerateInput,
  kMissingPlaceholder,
  kTemplateInvalid,
  kInsufficientDemonstrations,
  kStageFailed,
  kParseFailed,
  kMissingScores,
  kKTooLarge,
  kEpisodeFailed,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::optional<ErrorCode> cause = std::nullopt)
      : std::runtime_error(message), code_(code), cause_(cause) {}

  ErrorCode code() const noexcept { return code_; }
  // For wrapping errors (STAGE_FAILED, EPISODE_FAILED): the code of the
  // underlying failure.
  std::optional<ErrorCode> cause() const noexcept { return cause_; }

 private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
};

}  // namespace proactive
