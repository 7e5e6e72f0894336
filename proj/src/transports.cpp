#include <httplib.h>

#include "synthforge/transports.hpp"

#include <sstream>

#include "synthforge/errors.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Replay store

ReplayStore ReplayStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open replay store " + path.string());
  ReplayStore store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      Entry e;
      e.request = CompletionRequest::from_json(j.at("request"));
      e.response = CompletionResponse::from_json(j.at("response"));
      e.key = j.value("key", e.request.canonical_key());
      store.add(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kIoError, path.string() + ":" +
                                           std::to_string(lineno) + ": " + ex.what());
    }
  }
  return store;
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner,
                                       const std::filesystem::path& path)
    : inner_(std::move(inner)), out_(path, std::ios::app) {
  if (!inner_) throw Error(ErrorCode::kConfigInvalid, "record mode needs an inner transport");
  if (!out_) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
}

CompletionResponse RecordingTransport::send(const CompletionRequest& request) {
  CompletionResponse response = inner_->send(request);
  json line = {{"key", request.canonical_key()},
               {"request", request.to_json()},
               {"response", response.to_json()}};
  std::lock_guard lock(mutex_);
  out_ << line.dump() << '\n';
  out_.flush();
  ++recorded_;
  return response;
}

std::size_t RecordingTransport::recorded() const {
  std::lock_guard lock(mutex_);
  return recorded_;
}

ReplayTransport::ReplayTransport(const ReplayStore& store) {
  for (const auto& e : store.entries()) queue_[e.key].push_back(e.response);
}

CompletionResponse ReplayTransport::send(const CompletionRequest& request) {
  const auto key = request.canonical_key();
  std::lock_guard lock(mutex_);
  auto it = queue_.find(key);
  if (it == queue_.end() || it->second.empty()) {
    throw Error(ErrorCode::kReplayMiss,
                "no recorded response for role '" + request.model_role +
                    "' key " + key.substr(0, 16));
  }
  CompletionResponse r = std::move(it->second.front());
  it->second.pop_front();
  return r;
}

std::shared_ptr<Transport> record_replay(StoreMode mode,
                                         const std::filesystem::path& store,
                                         std::shared_ptr<Transport> inner) {
  if (mode == StoreMode::kRecord) {
    return std::make_shared<RecordingTransport>(std::move(inner), store);
  }
  return std::make_shared<ReplayTransport>(ReplayStore::load(store));
}

// ---------------------------------------------------------------------------
// Scripted and rule-driven doubles

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string render_rule_template(const std::string& tmpl, const std::string& echo,
                                 const std::string& last, const std::string& key) {
  std::string out = replace_all(tmpl, "{{echo}}", echo);
  out = replace_all(std::move(out), "{{last}}", last);
  return replace_all(std::move(out), "{{key}}", key);
}

}  // namespace


CompletionResponse ScriptedTransport::send(const CompletionRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  return handler_(request);
}

std::size_t ScriptedTransport::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

RulesTransport::RulesTransport(std::vector<Rule> rules) : rules_(std::move(rules)) {
  for (const auto& r : rules_) {
    if (r.responses.empty()) {
      throw Error(ErrorCode::kConfigInvalid, "rule without responses");
    }
  }
}

RulesTransport RulesTransport::from_json(const json& j) {
  std::vector<Rule> rules;
  const json& list = j.is_object() ? j.at("rules") : j;
  for (const auto& r : list) {
    Rule rule;
    rule.role = r.value("role", "");
    if (r.contains("contains")) {
      rule.contains = r["contains"].is_string()
                          ? std::vector<std::string>{r["contains"].get<std::string>()}
                          : r["contains"].get<std::vector<std::string>>();
    }
    if (r.contains("excludes")) {
      rule.excludes = r["excludes"].is_string()
                          ? std::vector<std::string>{r["excludes"].get<std::string>()}
                          : r["excludes"].get<std::vector<std::string>>();
    }
    if (r.contains("response")) rule.responses.push_back(r["response"].get<std::string>());
    if (r.contains("responses")) {
      for (const auto& s : r["responses"]) rule.responses.push_back(s.get<std::string>());
    }
    rule.finish_reason = parse_finish_reason(r.value("finish_reason", "stop"));
    rules.push_back(std::move(rule));
  }
  return RulesTransport(std::move(rules));
}

std::shared_ptr<RulesTransport> RulesTransport::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open rules " + path.string());
  try {
    return std::make_shared<RulesTransport>(from_json(json::parse(in)));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfigInvalid, path.string() + ": " + ex.what());
  }
}

CompletionResponse RulesTransport::send(const CompletionRequest& request) {
  std::string haystack;
  for (const auto& m : request.messages) {
    haystack += m.content;
    haystack += '\n';
  }
  std::string last_user;
  for (const auto& m : request.messages) {
    if (m.role == Role::kUser) last_user = m.content;
  }
  const std::string key = request.canonical_key();

  for (const auto& rule : rules_) {
    if (!rule.role.empty() && rule.role != request.model_role) continue;
    bool ok = true;
    for (const auto& needle : rule.contains) {
      if (haystack.find(needle) == std::string::npos) ok = false;
    }
    for (const auto& needle : rule.excludes) {
      if (haystack.find(needle) != std::string::npos) ok = false;
    }
    if (!ok) continue;

    const auto pick = std::stoull(key.substr(0, 12), nullptr, 16) % rule.responses.size();
    std::string out = render_rule_template(rule.responses[pick], last_user,
                                           request.messages.back().content,
                                           key.substr(0, 12));
    CompletionResponse response;
    response.finish_reason = rule.finish_reason;
    auto tokens = text::split_whitespace(out);
    const auto cap = static_cast<std::size_t>(request.sampling.max_tokens);
    if (tokens.size() > cap) {
      const auto cut = static_cast<std::size_t>(tokens[cap - 1].data() +
                                                tokens[cap - 1].size() - out.data());
      out.resize(cut);
      response.finish_reason = FinishReason::kLength;
    }
    response.text = std::move(out);
    response.token_count =
        response.finish_reason == FinishReason::kLength
            ? request.sampling.max_tokens
            : static_cast<std::int64_t>(text::split_whitespace(response.text).size());
    return response;
  }
  throw Error(ErrorCode::kGatewayError,
              "no rule matches request for role '" + request.model_role + "'");
}

// ---------------------------------------------------------------------------
// HTTP

HttpTransport::HttpTransport(std::map<std::string, EndpointDescriptor> endpoints)
    : endpoints_(std::move(endpoints)) {}

json HttpTransport::wire_body(const CompletionRequest& request,
                              const EndpointDescriptor& endpoint) {
  json msgs = json::array();
  for (const auto& m : request.messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json body = {{"model", endpoint.model},
               {"messages", msgs},
               {"temperature", request.sampling.temperature},
               {"top_p", request.sampling.top_p},
               {"top_k", request.sampling.top_k},
               {"max_tokens", request.sampling.max_tokens},
               {"stream", false}};
  if (request.sampling.seed) body["seed"] = *request.sampling.seed;
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (request.continue_final_message) {
    body["continue_final_message"] = true;
    body["add_generation_prompt"] = false;
  }
  return body;
}

CompletionResponse HttpTransport::parse_wire_response(const json& body) {
  try {
    const auto& choice = body.at("choices").at(0);
    CompletionResponse r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? std::string{} : content.get<std::string>();
    const auto& finish = choice.at("finish_reason");
    r.finish_reason = finish.is_null() ? FinishReason::kStop
                                       : parse_finish_reason(finish.get<std::string>());
    if (body.contains("usage") && body["usage"].contains("completion_tokens")) {
      r.token_count = body["usage"]["completion_tokens"].get<std::int64_t>();
    } else {
      r.token_count = static_cast<std::int64_t>(text::split_whitespace(r.text).size());
    }
    return r;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedResponse,
                std::string("chat-completions body: ") + ex.what());
  }
}

CompletionResponse HttpTransport::send(const CompletionRequest& request) {
  auto it = endpoints_.find(request.model_role);
  if (it == endpoints_.end()) {
    throw Error(ErrorCode::kConfigInvalid,
                "no endpoint configured for role '" + request.model_role + "'");
  }
  const auto& ep = it->second;
  httplib::Client client(ep.base_url);
  client.set_connection_timeout(ep.timeout);
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(ep.timeout);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);

  const auto body = wire_body(request, ep).dump();
  auto res = client.Post("/v1/chat/completions", headers, body, "application/json");
  if (!res) {
    throw TransportFailure("POST " + ep.base_url + ": " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportFailure("HTTP " + std::to_string(res->status) + " from " + ep.base_url);
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kGatewayError, "HTTP " + std::to_string(res->status) +
                                              " from " + ep.base_url + ": " + res->body);
  }
  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedResponse, ex.what());
  }
  CompletionResponse r = parse_wire_response(parsed);
  if (r.finish_reason == FinishReason::kLength && !parsed.contains("usage")) {
    r.token_count = request.sampling.max_tokens;
  }
  return r;
}

}  // namespace synthforge
