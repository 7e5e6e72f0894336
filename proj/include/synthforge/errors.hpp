#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthforge {

enum class ErrorCode {
  kPreconditionViolation,
  kPostconditionUnmet,
  kGatewayError,
  kEndpointUnavailable,
  kReplayMiss,
  kDuplicateNodeId,
  kInvalidGraph,
  kDeadEnd,
  kStandaloneLeak,
  kSameModelRole,
  kMissingSlot,
  kMalformedResponse,
  kUnknownFormat,
  kUnsupportedConstraint,
  kUninjectableSchema,
  kOversizedSample,
  kMissingCloseTag,
  kConfigInvalid,
  kIoError,
  kInvalidConversation,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure the library raises carries a stable code so callers (and the
// CLI exit path) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by transports for failures worth retrying (timeouts, 5xx, resets).
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace synthforge
