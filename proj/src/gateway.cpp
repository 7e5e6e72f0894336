#include "synthforge/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "synthforge/errors.hpp"
#include "synthforge/hashing.hpp"

namespace synthforge {

using nlohmann::json;

void CompletionRequest::validate() const {
  if (sampling.temperature < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  }
  if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "top_p must lie in (0, 1]");
  }
  if (sampling.top_k < 0) {
    throw Error(ErrorCode::kInvalidArgument, "top_k must be >= 0");
  }
  if (sampling.max_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  }
  if (messages.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "request has no messages");
  }
}

json CompletionRequest::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json s = {{"temperature", sampling.temperature},
            {"top_p", sampling.top_p},
            {"top_k", sampling.top_k},
            {"max_tokens", sampling.max_tokens}};
  if (sampling.seed) s["seed"] = *sampling.seed;
  json j = {{"model_role", model_role}, {"messages", msgs}, {"sampling", s}};
  if (!stop.empty()) j["stop"] = stop;
  if (continue_final_message) j["continue_final_message"] = true;
  return j;
}

CompletionRequest CompletionRequest::from_json(const json& j) {
  CompletionRequest r;
  r.model_role = j.at("model_role").get<std::string>();
  for (const auto& m : j.at("messages")) {
    auto role = parse_role(m.at("role").get<std::string>());
    if (!role) throw Error(ErrorCode::kInvalidArgument, "unknown role");
    r.messages.push_back({*role, m.at("content").get<std::string>()});
  }
  const auto& s = j.at("sampling");
  r.sampling.temperature = s.at("temperature").get<double>();
  r.sampling.top_p = s.at("top_p").get<double>();
  r.sampling.top_k = s.at("top_k").get<int>();
  r.sampling.max_tokens = s.at("max_tokens").get<int>();
  if (s.contains("seed")) r.sampling.seed = s.at("seed").get<std::uint64_t>();
  if (j.contains("stop")) r.stop = j.at("stop").get<std::vector<std::string>>();
  r.continue_final_message = j.value("continue_final_message", false);
  return r;
}

std::string CompletionRequest::canonical_key() const {
  return sha256_hex(to_json().dump());
}

std::string_view to_string(FinishReason reason) {
  return reason == FinishReason::kStop ? "stop" : "length";
}

FinishReason parse_finish_reason(std::string_view name) {
  if (name == "stop" || name == "eos" || name == "tool_calls") {
    return FinishReason::kStop;
  }
  if (name == "length") return FinishReason::kLength;
  throw Error(ErrorCode::kMalformedResponse,
              "unknown finish reason '" + std::string(name) + "'");
}

json CompletionResponse::to_json() const {
  return {{"text", text},
          {"finish_reason", to_string(finish_reason)},
          {"token_count", token_count}};
}

CompletionResponse CompletionResponse::from_json(const json& j) {
  CompletionResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = parse_finish_reason(j.at("finish_reason").get<std::string>());
  r.token_count = j.at("token_count").get<std::int64_t>();
  return r;
}

std::chrono::milliseconds RetryPolicy::backoff_before(int attempt) const {
  // attempt is 1-based; no wait before the first try.
  if (attempt <= 1) return std::chrono::milliseconds{0};
  const double scaled = static_cast<double>(initial_backoff.count()) *
                        std::pow(multiplier, attempt - 2);
  const double capped = std::min(scaled, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds{static_cast<std::int64_t>(capped)};
}

Gateway::Gateway(std::shared_ptr<Transport> transport, GatewayOptions options)
    : transport_(std::move(transport)), options_(std::move(options)) {
  if (!transport_) throw Error(ErrorCode::kConfigInvalid, "gateway needs a transport");
  if (options_.retry.max_attempts < 1) {
    throw Error(ErrorCode::kConfigInvalid, "retry budget must be >= 1");
  }
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) {
      std::this_thread::sleep_for(d);
    };
  }
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

CompletionResponse Gateway::complete(const CompletionRequest& request) {
  request.validate();
  const std::string key = request.canonical_key();
  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    const auto wait = options_.retry.backoff_before(attempt);
    if (wait.count() > 0) options_.sleep(wait);

    AttemptRecord record{key, request.model_role, attempt, false, {}};
    std::optional<CompletionResponse> response;
    {
      SlotGuard slot(*this);
      {
        std::lock_guard lock(mutex_);
        ++transport_calls_;
      }
      try {
        response = transport_->send(request);
      } catch (const TransportFailure& failure) {
        last_error = failure.what();
      }
    }
    if (!response) {
      record.error = last_error;
      std::lock_guard lock(mutex_);
      attempts_.push_back(record);
      continue;
    }
    if (response->finish_reason == FinishReason::kLength &&
        response->token_count != request.sampling.max_tokens) {
      throw Error(ErrorCode::kGatewayError,
                  "length-terminated response reports " +
                      std::to_string(response->token_count) +
                      " tokens, expected max_tokens=" +
                      std::to_string(request.sampling.max_tokens));
    }
    record.ok = true;
    {
      std::lock_guard lock(mutex_);
      attempts_.push_back(record);
    }
    return *std::move(response);
  }
  throw Error(ErrorCode::kEndpointUnavailable,
              "role '" + request.model_role + "' failed after " +
                  std::to_string(options_.retry.max_attempts) +
                  " attempts: " + last_error);
}

std::vector<AttemptRecord> Gateway::attempts() const {
  std::lock_guard lock(mutex_);
  return attempts_;
}

std::size_t Gateway::transport_calls() const {
  std::lock_guard lock(mutex_);
  return transport_calls_;
}

CompletionResponse chat_complete(const CompletionRequest& request,
                                 std::shared_ptr<Transport> transport,
                                 GatewayOptions options) {
  Gateway gateway(std::move(transport), std::move(options));
  return gateway.complete(request);
}

}  // namespace synthforge
