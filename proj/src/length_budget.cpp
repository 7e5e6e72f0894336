#include "synthforge/length_budget.hpp"

#include <algorithm>
#include <cctype>

#include "synthforge/errors.hpp"

namespace synthforge {

std::string_view to_string(TerminationClass c) {
  switch (c) {
    case TerminationClass::kCompleted: return "completed";
    case TerminationClass::kAnswerCut: return "answer-cut";
    case TerminationClass::kThinkCut: return "think-cut";
  }
  return "unknown";
}

namespace {

// Index of the first token that overlaps [begin, end).
std::optional<std::int64_t> first_overlapping(const std::vector<TokenSpan>& spans,
                                              std::size_t begin, std::size_t end) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].end > begin && spans[i].begin < end) return static_cast<std::int64_t>(i);
  }
  return std::nullopt;
}

Conversation make_conversation(const Messages& prompt, std::string assistant) {
  Conversation c;
  c.messages = prompt;
  c.messages.push_back({Role::kAssistant, std::move(assistant)});
  return c;
}

std::string join_continuation(std::string prefix, const std::string& tail) {
  if (!tail.empty() && !std::isspace(static_cast<unsigned char>(tail.front()))) prefix += '\n';
  prefix += tail;
  return prefix;
}

CompletionResponse continuation_call(const Messages& prompt, const std::string& prefix,
                                     Gateway& gateway, const ContinuationOptions& options) {
  CompletionRequest req;
  req.model_role = options.model_role;
  req.messages = prompt;
  req.messages.push_back({Role::kAssistant, prefix});
  req.sampling = options.sampling;
  req.continue_final_message = true;
  return gateway.complete(req);
}

}  // namespace

std::optional<std::int64_t> close_tag_index(std::string_view text, const Tokenizer& tokenizer) {
  const auto pos = text.find(kThinkClose);
  if (pos == std::string_view::npos) return std::nullopt;
  return first_overlapping(tokenizer.encode(text), pos, pos + kThinkClose.size());
}

TerminationClass classify_termination(const Generation& generation, std::int64_t budget,
                                      const Tokenizer& tokenizer) {
  const auto close = close_tag_index(generation.text, tokenizer);
  if (!close || *close >= budget) return TerminationClass::kThinkCut;
  return generation.finish_reason == FinishReason::kLength ? TerminationClass::kAnswerCut
                                                           : TerminationClass::kCompleted;
}

Conversation force_close_and_continue(const Messages& prompt, const Generation& generation,
                                      std::int64_t budget, const Tokenizer& tokenizer,
                                      Gateway& gateway, const ContinuationOptions& options) {
  if (budget <= 0) throw Error(ErrorCode::kInvalidArgument, "budget must be positive");
  if (classify_termination(generation, budget, tokenizer) != TerminationClass::kThinkCut) {
    throw Error(ErrorCode::kPreconditionViolation, "generation is not think-cut at the budget");
  }
  const auto spans = tokenizer.encode(generation.text);
  if (static_cast<std::int64_t>(spans.size()) < budget) {
    throw Error(ErrorCode::kPreconditionViolation,
                "generation has " + std::to_string(spans.size()) + " tokens, budget is " +
                    std::to_string(budget));
  }
  // Cutting at a token end means a multi-byte unit is never bisected.
  std::string prefix = generation.text.substr(0, spans[budget - 1].end);
  prefix += '\n';
  prefix += kThinkClose;

  const auto reply = continuation_call(prompt, prefix, gateway, options);
  if (reply.text.find(kThinkClose) != std::string::npos) {
    throw Error(ErrorCode::kMalformedResponse, "continuation emitted another closing tag");
  }
  Conversation c = make_conversation(prompt, join_continuation(std::move(prefix), reply.text));
  c.think_budget = budget;
  c.meta["termination"] = std::string(to_string(TerminationClass::kThinkCut));
  c.meta["forced_close"] = true;
  c.meta["answer_finish"] = std::string(to_string(reply.finish_reason));
  return c;
}

Conversation continue_answer(const Messages& prompt, const Generation& generation,
                             const Tokenizer& tokenizer, Gateway& gateway,
                             const ContinuationOptions& options) {
  if (!close_tag_index(generation.text, tokenizer)) {
    throw Error(ErrorCode::kPreconditionViolation, "answer continuation needs closed reasoning");
  }
  const auto reply = continuation_call(prompt, generation.text, gateway, options);
  Conversation c = make_conversation(prompt, generation.text + reply.text);
  c.meta["termination"] = std::string(to_string(TerminationClass::kAnswerCut));
  c.meta["forced_close"] = false;
  c.meta["answer_finish"] = std::string(to_string(reply.finish_reason));
  return c;
}

std::optional<Conversation> prepare_budget_sample(const Messages& prompt,
                                                  const Generation& generation,
                                                  std::int64_t budget,
                                                  const Tokenizer& tokenizer, Gateway& gateway,
                                                  const ContinuationOptions& options) {
  switch (classify_termination(generation, budget, tokenizer)) {
    case TerminationClass::kCompleted: {
      Conversation c = make_conversation(prompt, generation.text);
      c.meta["termination"] = std::string(to_string(TerminationClass::kCompleted));
      c.meta["forced_close"] = false;
      return c;
    }
    case TerminationClass::kAnswerCut:
      return continue_answer(prompt, generation, tokenizer, gateway, options);
    case TerminationClass::kThinkCut:
      if (static_cast<std::int64_t>(tokenizer.count(generation.text)) < budget) return std::nullopt;
      return force_close_and_continue(prompt, generation, budget, tokenizer, gateway, options);
  }
  return std::nullopt;
}

std::vector<std::int64_t> build_loss_mask(const Conversation& conversation, MaskMode mode,
                                          const Tokenizer& tokenizer, bool train_eos) {
  const TokenLayout layout = layout_tokens(conversation, tokenizer);
  std::vector<std::int64_t> out;
  bool any_assistant = false;
  for (std::size_t m = 0; m < conversation.messages.size(); ++m) {
    const auto& msg = conversation.messages[m];
    if (msg.role != Role::kAssistant) continue;
    any_assistant = true;
    const auto& spans = layout.spans[m];
    if (mode == MaskMode::kAssistantAll) {
      for (std::size_t t = 0; t < spans.size(); ++t) out.push_back(layout.first[m] + t);
      continue;
    }
    std::size_t from = 0;
    while (true) {
      const auto pos = msg.content.find(kThinkClose, from);
      if (pos == std::string::npos) break;
      const auto end = pos + kThinkClose.size();
      for (std::size_t t = 0; t < spans.size(); ++t) {
        if (spans[t].end > pos && spans[t].begin < end) out.push_back(layout.first[m] + t);
      }
      from = end;
    }
  }
  if (mode == MaskMode::kCloseOnly && any_assistant) {
    if (out.empty()) {
      throw Error(ErrorCode::kMissingCloseTag, "no closing tag in any assistant turn");
    }
    if (train_eos && conversation.messages.back().role == Role::kAssistant) {
      out.push_back(layout.eos_position());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LossMask to_char_mask(const Conversation& conversation, std::span<const std::int64_t> positions,
                      MaskMode mode, const Tokenizer& tokenizer) {
  const TokenLayout layout = layout_tokens(conversation, tokenizer);
  LossMask mask;
  mask.mode = mode;
  std::int64_t prev = -2;
  for (const auto p : positions) {
    if (p == layout.eos_position()) {
      mask.train_eos = true;
      continue;
    }
    if (p < 0 || p > layout.total) {
      throw Error(ErrorCode::kInvalidArgument, "mask position out of range");
    }
    // Locate the owning message.
    const auto it = std::upper_bound(layout.first.begin(), layout.first.end(), p);
    std::size_t m = static_cast<std::size_t>(it - layout.first.begin()) - 1;
    while (layout.spans[m].empty() || p >= layout.first[m] + static_cast<std::int64_t>(layout.spans[m].size())) ++m;
    const auto& tok = layout.spans[m][p - layout.first[m]];
    if (p == prev + 1 && !mask.spans.empty() && mask.spans.back().message == m) {
      mask.spans.back().end = tok.end;
    } else {
      mask.spans.push_back({m, tok.begin, tok.end});
    }
    prev = p;
  }
  return mask;
}

std::vector<std::int64_t> mask_positions(const Conversation& conversation, const LossMask& mask,
                                         const Tokenizer& tokenizer) {
  const TokenLayout layout = layout_tokens(conversation, tokenizer);
  std::vector<std::int64_t> out;
  for (const auto& s : mask.spans) {
    if (s.message >= layout.spans.size()) continue;
    const auto& spans = layout.spans[s.message];
    for (std::size_t t = 0; t < spans.size(); ++t) {
      if (spans[t].begin >= s.begin && spans[t].end <= s.end) {
        out.push_back(layout.first[s.message] + t);
      }
    }
  }
  if (mask.train_eos) out.push_back(layout.eos_position());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double overlong_rate(std::span<const std::string> generations, std::int64_t limit,
                     const Tokenizer& tokenizer) {
  if (limit <= 0) throw Error(ErrorCode::kInvalidArgument, "limit must be positive");
  if (generations.empty()) return 0.0;
  std::size_t overlong = 0;
  for (const auto& g : generations) {
    const auto close = close_tag_index(g, tokenizer);
    if (!close || *close >= limit) ++overlong;
  }
  return static_cast<double>(overlong) / static_cast<double>(generations.size());
}

}  // namespace synthforge
