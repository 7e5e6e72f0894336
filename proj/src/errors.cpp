#include "synthforge/errors.hpp"

#include <cctype>

#include "synthforge/message.hpp"

namespace synthforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kPreconditionViolation: return "precondition-violation";
    case ErrorCode::kPostconditionUnmet: return "postcondition-unmet";
    case ErrorCode::kGatewayError: return "gateway-error";
    case ErrorCode::kEndpointUnavailable: return "endpoint-unavailable";
    case ErrorCode::kReplayMiss: return "replay-miss";
    case ErrorCode::kDuplicateNodeId: return "duplicate-node-id";
    case ErrorCode::kInvalidGraph: return "invalid-graph";
    case ErrorCode::kDeadEnd: return "dead-end";
    case ErrorCode::kStandaloneLeak: return "standalone-leak";
    case ErrorCode::kSameModelRole: return "same-model-for-judge-and-answer";
    case ErrorCode::kMissingSlot: return "missing-slot";
    case ErrorCode::kMalformedResponse: return "malformed-response";
    case ErrorCode::kUnknownFormat: return "unknown-format-id";
    case ErrorCode::kUnsupportedConstraint: return "unsupported-constraint";
    case ErrorCode::kUninjectableSchema: return "uninjectable-schema";
    case ErrorCode::kOversizedSample: return "oversized-sample";
    case ErrorCode::kMissingCloseTag: return "missing-close-tag";
    case ErrorCode::kConfigInvalid: return "config-invalid";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kInvalidConversation: return "invalid-conversation";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
  }
  return "unknown";
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
    case Role::kTool: return "tool";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  if (name == "tool") return Role::kTool;
  return std::nullopt;
}

}  // namespace synthforge
