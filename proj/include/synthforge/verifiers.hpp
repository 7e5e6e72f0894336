#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthforge/conversation.hpp"
#include "synthforge/rng.hpp"

namespace synthforge {

struct Trajectory {
  Messages prompt;
  std::string generation;
  std::int64_t token_count = 0;
  // Character range of "<think>...</think>" when it opens the generation.
  std::optional<std::pair<std::size_t, std::size_t>> think_span;

  static Trajectory make(Messages prompt, std::string generation, const Tokenizer& tokenizer);
};

/// Strict reasoning split: after optional leading whitespace the generation
/// opens with <think>, holds exactly one opening and one closing tag, and
/// has a non-empty answer after the close.
struct ReasoningSplit {
  bool ok = false;
  std::string_view reasoning;
  std::string_view answer;
  std::string detail;
  std::size_t open = 0;        // offset of "<think>"
  std::size_t close_end = 0;   // offset one past "</think>"
};

ReasoningSplit split_reasoning(std::string_view generation);

/// Answer text for verifiers that do not enforce reasoning: the part after
/// the last closing tag, or the whole generation when there is none.
std::string_view answer_segment(std::string_view generation);

// ---------------------------------------------------------------- formats

struct FormatCheck {
  bool ok = false;
  std::string detail;
};

struct FormatSpec {
  std::string id;
  std::string instruction;  // text shown to the policy
  std::function<FormatCheck(std::string_view answer)> check;
};

class FormatRegistry {
 public:
  /// Throws Error(kConfigInvalid) on a duplicate id.
  void add(FormatSpec spec);
  /// Throws Error(kUnknownFormat).
  const FormatSpec& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return specs_.size(); }
  const FormatSpec& draw(Rng& rng) const;

  static const FormatRegistry& builtin();

 private:
  std::vector<FormatSpec> specs_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// 1.0 iff the reasoning split is strict and the answer is in the requested
/// form. Content is never judged for correctness.
RewardRecord verify_answer_format(const Trajectory& trajectory, std::string_view format_id,
                                  const FormatRegistry& registry = FormatRegistry::builtin());

/// RFC 4180 parser used by the csv format: quoted fields, doubled quotes,
/// CRLF or LF records. nullopt on malformed input.
std::optional<std::vector<std::vector<std::string>>> parse_csv(std::string_view text,
                                                               char delimiter = ',');

// ------------------------------------------------------------ constraints

struct ConstraintInstruction {
  std::string id;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const { return {{"id", id}, {"params", params}}; }
  static ConstraintInstruction from_json(const nlohmann::json& j);
};

struct ConstraintChecker {
  std::function<FormatCheck(std::string_view response, const nlohmann::json& params)> check;
  std::function<std::string(const nlohmann::json& params)> describe;
};

class ConstraintRegistry {
 public:
  void add(std::string id, ConstraintChecker checker);
  /// Throws Error(kUnsupportedConstraint).
  const ConstraintChecker& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;

  static const ConstraintRegistry& builtin();

 private:
  std::map<std::string, ConstraintChecker, std::less<>> checkers_;
};

/// Checks the answer segment against the constraint. Throws
/// Error(kUnsupportedConstraint) when no checker is registered.
RewardRecord verify_constraint(const Trajectory& trajectory,
                               const ConstraintInstruction& constraint,
                               const ConstraintRegistry& registry = ConstraintRegistry::builtin());

/// Lowercased words with surrounding punctuation stripped.
std::vector<std::string> constraint_words(std::string_view text);
/// Sentences end at runs of '.', '!' or '?' followed by whitespace or end.
std::size_t count_sentences(std::string_view text);
bool is_french_word(std::string_view lowercase_word);

// ------------------------------------------------------------- tool calls

/// Parses every <tool_call>...</tool_call> span as JSON and canonicalizes
/// string-encoded "arguments". Throws Error(kMalformedResponse) on an
/// unterminated span or invalid JSON.
std::vector<nlohmann::json> extract_tool_calls(std::string_view generation);

nlohmann::json canonical_tool_call(nlohmann::json call);

/// 1.0 iff the emitted calls equal the references as a multiset under
/// structural JSON equality (key order and whitespace ignored).
RewardRecord verify_tool_call(const Trajectory& trajectory,
                              std::span<const nlohmann::json> references);

}  // namespace synthforge
