#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthforge/conversation.hpp"
#include "synthforge/gateway.hpp"

namespace synthforge {

struct Generation {
  std::string text;
  FinishReason finish_reason = FinishReason::kStop;
};

enum class TerminationClass { kCompleted, kAnswerCut, kThinkCut };

std::string_view to_string(TerminationClass c);

/// Token index of the first token overlapping the first closing tag, if any.
std::optional<std::int64_t> close_tag_index(std::string_view text, const Tokenizer& tokenizer);

/// think-cut when the closing tag is absent or sits at or past `budget`;
/// otherwise answer-cut on a length finish and completed on a stop finish.
TerminationClass classify_termination(const Generation& generation, std::int64_t budget,
                                      const Tokenizer& tokenizer);

struct ContinuationOptions {
  std::string model_role = "policy";
  Sampling sampling;
};

/// Keeps the first `budget` tokens of a think-cut generation, appends
/// "\n</think>" and asks the same policy role to write the answer.
/// Throws Error(kPreconditionViolation) unless the generation is think-cut
/// and at least `budget` tokens long.
Conversation force_close_and_continue(const Messages& prompt, const Generation& generation,
                                      std::int64_t budget, const Tokenizer& tokenizer,
                                      Gateway& gateway, const ContinuationOptions& options = {});

/// Extends an answer-cut generation to completion.
Conversation continue_answer(const Messages& prompt, const Generation& generation,
                             const Tokenizer& tokenizer, Gateway& gateway,
                             const ContinuationOptions& options = {});

/// Dispatch on the termination class. nullopt when a think-cut generation is
/// shorter than the budget (it cannot be closed at the boundary).
std::optional<Conversation> prepare_budget_sample(const Messages& prompt,
                                                  const Generation& generation,
                                                  std::int64_t budget,
                                                  const Tokenizer& tokenizer, Gateway& gateway,
                                                  const ContinuationOptions& options = {});

/// Global token positions receiving gradient. The end-of-sequence token
/// (position layout.total) is included only in close-only mode with
/// `train_eos`. Throws Error(kMissingCloseTag) in close-only mode when an
/// assistant turn exists but no assistant turn carries a closing tag.
std::vector<std::int64_t> build_loss_mask(const Conversation& conversation, MaskMode mode,
                                          const Tokenizer& tokenizer, bool train_eos = true);

/// Character-span form of a positional mask.
LossMask to_char_mask(const Conversation& conversation, std::span<const std::int64_t> positions,
                      MaskMode mode, const Tokenizer& tokenizer);

/// Inverse of to_char_mask: tokens fully covered by a span, plus EOS.
std::vector<std::int64_t> mask_positions(const Conversation& conversation, const LossMask& mask,
                                         const Tokenizer& tokenizer);

/// Fraction of generations with no closing tag at a token index < limit.
/// Throws Error(kInvalidArgument) when limit <= 0.
double overlong_rate(std::span<const std::string> generations, std::int64_t limit,
                     const Tokenizer& tokenizer);

}  // namespace synthforge
