#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "synthforge/gateway.hpp"

namespace synthforge {

/// Append-only request/response log, one JSON record per line.
class ReplayStore {
 public:
  struct Entry {
    std::string key;
    CompletionRequest request;
    CompletionResponse response;
  };

  static ReplayStore load(const std::filesystem::path& path);

  const std::vector<Entry>& entries() const { return entries_; }
  void add(Entry entry) { entries_.push_back(std::move(entry)); }

 private:
  std::vector<Entry> entries_;
};

/// Forwards to `inner` and appends every pair to `path`; identical requests
/// become separate entries.
class RecordingTransport : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner,
                     const std::filesystem::path& path);

  CompletionResponse send(const CompletionRequest& request) override;
  std::size_t recorded() const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::size_t recorded_ = 0;
};

/// Serves recorded responses byte-identically. Repeated keys are served in
/// recording order; asking for more than were recorded is a replay miss.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(const ReplayStore& store);

  CompletionResponse send(const CompletionRequest& request) override;

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, std::deque<CompletionResponse>> queue_;
};

enum class StoreMode { kRecord, kReplay };

/// Record mode requires `inner`; replay mode ignores it.
std::shared_ptr<Transport> record_replay(StoreMode mode,
                                         const std::filesystem::path& store,
                                         std::shared_ptr<Transport> inner = {});

/// Test double backed by a callable.
class ScriptedTransport : public Transport {
 public:
  using Handler = std::function<CompletionResponse(const CompletionRequest&)>;
  explicit ScriptedTransport(Handler handler) : handler_(std::move(handler)) {}

  CompletionResponse send(const CompletionRequest& request) override;
  std::size_t calls() const;

 private:
  Handler handler_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Offline endpoint driven by declarative rules. The first rule whose
/// role/substring filters match answers; among its responses one is picked
/// by request digest, so output is order-independent.
///
/// Response templates understand {{echo}} (last user message), {{last}}
/// (last message of any role) and {{key}} (first 12 hex digits of the
/// request digest).
class RulesTransport : public Transport {
 public:
  struct Rule {
    std::string role;                  // empty matches any role
    std::vector<std::string> contains; // all must occur in the request text
    std::vector<std::string> excludes; // none may occur
    std::vector<std::string> responses;
    FinishReason finish_reason = FinishReason::kStop;
  };

  explicit RulesTransport(std::vector<Rule> rules);
  static RulesTransport from_json(const nlohmann::json& j);
  static std::shared_ptr<RulesTransport> from_file(
      const std::filesystem::path& path);

  CompletionResponse send(const CompletionRequest& request) override;

 private:
  std::vector<Rule> rules_;
};

struct EndpointDescriptor {
  std::string base_url;   // e.g. http://127.0.0.1:8000
  std::string model;      // model name sent on the wire
  std::string api_key;    // resolved credential, may be empty
  std::chrono::seconds timeout{600};

  friend bool operator==(const EndpointDescriptor&,
                         const EndpointDescriptor&) = default;
};

/// OpenAI-compatible /v1/chat/completions over HTTP(S), one endpoint per
/// model role.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::map<std::string, EndpointDescriptor> endpoints);

  CompletionResponse send(const CompletionRequest& request) override;

  static nlohmann::json wire_body(const CompletionRequest& request,
                                  const EndpointDescriptor& endpoint);
  static CompletionResponse parse_wire_response(const nlohmann::json& body);

 private:
  std::map<std::string, EndpointDescriptor> endpoints_;
};

}  // namespace synthforge
