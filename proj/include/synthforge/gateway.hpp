#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/message.hpp"

namespace synthforge {

struct Sampling {
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 20;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const Sampling&, const Sampling&) = default;
};

struct CompletionRequest {
  std::string model_role;
  Messages messages;
  Sampling sampling;
  std::vector<std::string> stop;
  // Ask the endpoint to extend the trailing assistant message instead of
  // opening a new turn.
  bool continue_final_message = false;

  /// Throws Error(kInvalidArgument) when a sampling bound is violated.
  void validate() const;

  /// Stable hex digest over role, messages, sampling, stop and continuation.
  std::string canonical_key() const;

  nlohmann::json to_json() const;
  static CompletionRequest from_json(const nlohmann::json& j);
};

enum class FinishReason { kStop, kLength };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view name);

struct CompletionResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::kStop;
  std::int64_t token_count = 0;

  nlohmann::json to_json() const;
  static CompletionResponse from_json(const nlohmann::json& j);

  friend bool operator==(const CompletionResponse&,
                         const CompletionResponse&) = default;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Implementations throw TransportFailure for retryable conditions and
  // Error for everything else.
  virtual CompletionResponse send(const CompletionRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{10'000};

  std::chrono::milliseconds backoff_before(int attempt) const;
};

struct GatewayOptions {
  RetryPolicy retry;
  std::size_t max_in_flight = 8;
  // Injected so tests can observe backoff without sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct AttemptRecord {
  std::string key;
  std::string model_role;
  int attempt = 0;
  bool ok = false;
  std::string error;
};

/// Chat-completions client with a fixed retry budget and no caching: every
/// call reaches the transport, identical requests included.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Transport> transport,
                   GatewayOptions options = {});

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Throws Error(kEndpointUnavailable) once the retry budget is spent.
  CompletionResponse complete(const CompletionRequest& request);

  std::vector<AttemptRecord> attempts() const;
  std::size_t transport_calls() const;

 private:
  void acquire_slot();
  void release_slot();

  struct SlotGuard {
    explicit SlotGuard(Gateway& g) : gateway(g) { gateway.acquire_slot(); }
    ~SlotGuard() { gateway.release_slot(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;
    Gateway& gateway;
  };

  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;

  mutable std::mutex mutex_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
  std::vector<AttemptRecord> attempts_;
  std::size_t transport_calls_ = 0;
};

/// One-shot convenience: default policy over `transport`.
CompletionResponse chat_complete(const CompletionRequest& request,
                                 std::shared_ptr<Transport> transport,
                                 GatewayOptions options = {});

}  // namespace synthforge
