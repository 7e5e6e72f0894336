#include "synthforge/conversation.hpp"

#include <cctype>

#include "synthforge/errors.hpp"

namespace synthforge {

using nlohmann::json;

json RewardRecord::to_json() const {
  return {{"reward", reward}, {"penalty", penalty}, {"verifier_id", verifier_id}, {"detail", detail}};
}

RewardRecord RewardRecord::from_json(const json& j) {
  RewardRecord r;
  r.reward = j.at("reward").get<double>();
  r.penalty = j.value("penalty", 0.0);
  r.verifier_id = j.value("verifier_id", std::string{});
  r.detail = j.value("detail", std::string{});
  return r;
}

std::string_view to_string(MaskMode mode) {
  return mode == MaskMode::kAssistantAll ? "assistant-all" : "close-only";
}

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "assistant-all") return MaskMode::kAssistantAll;
  if (name == "close-only") return MaskMode::kCloseOnly;
  throw Error(ErrorCode::kConfigInvalid, "unknown mask mode '" + std::string(name) + "'");
}

void Conversation::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kInvalidConversation, "conversation '" + id + "': " + why);
  };
  if (messages.empty()) fail("no messages");
  bool seen_user = false;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Role r = messages[i].role;
    const Role prev = i ? messages[i - 1].role : Role::kSystem;
    if (r == Role::kSystem) {
      if (i != 0) fail("system message at position " + std::to_string(i));
      continue;
    }
    if (!seen_user && r != Role::kUser) fail("first turn must be a user message");
    switch (r) {
      case Role::kUser:
        if (i > 0 && prev == Role::kUser) fail("consecutive user messages");
        seen_user = true;
        break;
      case Role::kAssistant:
        if (prev != Role::kUser && prev != Role::kTool) fail("assistant must follow user or tool");
        break;
      case Role::kTool:
        if (prev != Role::kAssistant && prev != Role::kTool) fail("tool must follow assistant");
        break;
      case Role::kSystem:
        break;
    }
  }
  if (mask) {
    for (const auto& s : mask->spans) {
      if (s.message >= messages.size()) fail("mask span beyond last message");
      if (messages[s.message].role != Role::kAssistant) fail("mask span outside assistant turn");
      if (s.begin > s.end || s.end > messages[s.message].content.size()) fail("mask span out of range");
    }
    if (mask->train_eos && messages.back().role != Role::kAssistant) {
      fail("end-of-sequence training requires a final assistant turn");
    }
  }
}

json Conversation::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json j = {{"id", id}, {"messages", msgs}, {"provenance", provenance}};
  if (mask) {
    json spans = json::array();
    for (const auto& s : mask->spans) spans.push_back({s.message, s.begin, s.end});
    j["mask"] = {{"mode", to_string(mask->mode)}, {"spans", spans}, {"train_eos", mask->train_eos}};
  } else {
    j["mask"] = nullptr;
  }
  j["reward"] = reward ? reward->to_json() : json(nullptr);
  j["source_node"] = source_node;
  j["think_budget"] = think_budget ? json(*think_budget) : json(nullptr);
  j["meta"] = meta;
  return j;
}

Conversation Conversation::from_json(const json& j) {
  Conversation c;
  try {
    c.id = j.value("id", std::string{});
    for (const auto& m : j.at("messages")) {
      auto role = parse_role(m.at("role").get<std::string>());
      if (!role) throw Error(ErrorCode::kInvalidConversation, "unknown role");
      c.messages.push_back({*role, m.at("content").get<std::string>()});
    }
    if (j.contains("mask") && !j["mask"].is_null()) {
      LossMask mask;
      mask.mode = parse_mask_mode(j["mask"].at("mode").get<std::string>());
      for (const auto& s : j["mask"].at("spans")) {
        mask.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(),
                              s.at(2).get<std::size_t>()});
      }
      mask.train_eos = j["mask"].value("train_eos", false);
      c.mask = std::move(mask);
    }
    c.provenance = j.value("provenance", std::vector<std::string>{});
    if (j.contains("reward") && !j["reward"].is_null()) c.reward = RewardRecord::from_json(j["reward"]);
    c.source_node = j.value("source_node", std::string{});
    if (j.contains("think_budget") && !j["think_budget"].is_null()) {
      c.think_budget = j["think_budget"].get<std::int64_t>();
    }
    c.meta = j.value("meta", json::object());
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kInvalidConversation, ex.what());
  }
  return c;
}

std::vector<TokenSpan> WhitespaceTokenizer::encode(std::string_view text) const {
  std::vector<TokenSpan> out;
  auto emit_chunk = [&](std::size_t begin, std::size_t end) {
    // Isolate reasoning tags inside a whitespace-free chunk.
    std::size_t pos = begin;
    while (pos < end) {
      std::size_t best = end;
      std::size_t best_len = 0;
      for (auto tag : {kThinkClose, kThinkOpen}) {
        const auto hit = text.substr(0, end).find(tag, pos);
        if (hit != std::string_view::npos && hit < best) {
          best = hit;
          best_len = tag.size();
        }
      }
      if (best > pos) out.push_back({pos, best});
      if (best_len == 0) break;
      out.push_back({best, best + best_len});
      pos = best + best_len;
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) emit_chunk(start, i);
  }
  return out;
}

TokenLayout layout_tokens(const Conversation& conversation, const Tokenizer& tokenizer) {
  TokenLayout layout;
  for (const auto& m : conversation.messages) {
    layout.first.push_back(layout.total);
    layout.spans.push_back(tokenizer.encode(m.content));
    layout.total += static_cast<std::int64_t>(layout.spans.back().size());
  }
  return layout;
}

std::shared_ptr<Tokenizer> make_tokenizer(std::string_view name) {
  if (name == "whitespace") return std::make_shared<WhitespaceTokenizer>();
  throw Error(ErrorCode::kConfigInvalid, "unknown tokenizer '" + std::string(name) + "'");
}

}  // namespace synthforge
