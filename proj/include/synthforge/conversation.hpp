#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synthforge/message.hpp"

namespace synthforge {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

struct RewardRecord {
  double reward = 0.0;   // exactly 0.0 or 1.0
  double penalty = 0.0;  // <= 0, only where the verifier defines one
  std::string verifier_id;
  std::string detail;

  bool passed() const { return reward == 1.0; }

  nlohmann::json to_json() const;
  static RewardRecord from_json(const nlohmann::json& j);
  friend bool operator==(const RewardRecord&, const RewardRecord&) = default;
};

enum class MaskMode { kAssistantAll, kCloseOnly };

std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view name);

/// Character range [begin, end) inside messages[message].
struct CharSpan {
  std::size_t message = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

/// Trainer-facing mask: which characters receive gradient, plus whether the
/// trailing end-of-sequence token does.
struct LossMask {
  MaskMode mode = MaskMode::kAssistantAll;
  std::vector<CharSpan> spans;
  bool train_eos = false;
  friend bool operator==(const LossMask&, const LossMask&) = default;
};

struct Conversation {
  std::string id;
  Messages messages;
  std::optional<LossMask> mask;
  std::vector<std::string> provenance;
  std::optional<RewardRecord> reward;
  std::string source_node;
  std::optional<std::int64_t> think_budget;
  nlohmann::json meta = nlohmann::json::object();

  /// Role ordering: an optional leading system message, then a user turn;
  /// assistant follows user or tool, tool follows assistant or tool, user
  /// never follows user. Mask spans must sit inside assistant messages.
  /// Throws Error(kInvalidConversation).
  void validate() const;

  nlohmann::json to_json() const;
  static Conversation from_json(const nlohmann::json& j);
  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> encode(std::string_view text) const = 0;
  virtual std::string name() const = 0;

  std::size_t count(std::string_view text) const { return encode(text).size(); }
};

/// Splits on whitespace and additionally isolates the reasoning tags, so
/// "<think>" and "</think>" are always single tokens.
class WhitespaceTokenizer : public Tokenizer {
 public:
  std::vector<TokenSpan> encode(std::string_view text) const override;
  std::string name() const override { return "whitespace"; }
};

/// Global token positions of a conversation: messages are laid out in
/// order; when the last message is an assistant turn the end-of-sequence
/// token sits at position `total`.
struct TokenLayout {
  std::vector<std::vector<TokenSpan>> spans;  // per message
  std::vector<std::int64_t> first;            // global index of each message's first token
  std::int64_t total = 0;

  std::int64_t eos_position() const { return total; }
};

TokenLayout layout_tokens(const Conversation& conversation, const Tokenizer& tokenizer);

std::shared_ptr<Tokenizer> make_tokenizer(std::string_view name);

}  // namespace synthforge
