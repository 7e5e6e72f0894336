#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/conversation.hpp"
#include "synthforge/gateway.hpp"
#include "synthforge/schema.hpp"
#include "synthforge/verifiers.hpp"

namespace synthforge {

/// A verifier environment scores a trajectory against per-prompt task data.
/// Implementations must be thread-safe for concurrent score() calls.
class VerifierEnv {
 public:
  virtual ~VerifierEnv() = default;
  virtual std::string id() const = 0;
  virtual RewardRecord score(const Trajectory& trajectory, const nlohmann::json& task) const = 0;
};

/// Built-in ids and the task fields they read:
///   answer-format  {"format": id}
///   constraint     {"constraint": {"id", "params"}} or {"constraints": [...]}, all must pass
///   schema         {"schema": JSON Schema, "max_chars"?: n}
///   schema-repair  same as schema; the policy is shown a corrupted record to fix
///   tool-call      {"reference_calls": [...]}
///   contains       {"token": text}, searched in the answer of a strict reasoning split
class EnvRegistry {
 public:
  void add(std::shared_ptr<VerifierEnv> env);
  /// Throws Error(kConfigInvalid) for an unregistered id.
  std::shared_ptr<const VerifierEnv> get(const std::string& id) const;
  std::vector<std::string> ids() const;

  static EnvRegistry with_builtins();

 private:
  std::map<std::string, std::shared_ptr<VerifierEnv>> envs_;
};

struct SamplePrompt {
  std::string id;
  Messages messages;
  nlohmann::json task = nlohmann::json::object();

  nlohmann::json to_json() const;
  static SamplePrompt from_json(const nlohmann::json& j);
};

struct RejectionOptions {
  int samples_per_prompt = 8;
  std::int64_t token_budget = 16384;
  std::size_t retain_cap = 4;
  std::string model_role = "policy";
  Sampling sampling;
  std::uint64_t seed = 0;
  std::size_t workers = 4;          // concurrent generation calls
  std::size_t queue_capacity = 16;  // generations waiting for scoring
  bool halt_on_error = true;
};

struct AcceptedTrajectory {
  std::string prompt_id;
  int sample_index = 0;
  Trajectory trajectory;
  RewardRecord reward;

  Conversation to_conversation() const;
};

struct RejectionStats {
  std::size_t generated = 0;
  std::size_t rewarded = 0;
  std::size_t over_budget = 0;
  std::size_t duplicates = 0;
  std::size_t capped = 0;
  std::size_t failed_calls = 0;
  std::size_t accepted = 0;

  nlohmann::json to_json() const;
};

struct RejectionResult {
  std::vector<AcceptedTrajectory> accepted;
  RejectionStats stats;
};

/// Draws samples_per_prompt generations per prompt, scoring them while
/// generation is still running. Winners have reward 1.0 and at most
/// token_budget tokens; per prompt at most retain_cap winners with
/// distinct whitespace-normalized text are kept, in sample order, so the
/// result does not depend on thread timing.
RejectionResult rejection_sample(std::span<const SamplePrompt> prompts, const VerifierEnv& env,
                                 Gateway& gateway, const Tokenizer& tokenizer,
                                 const RejectionOptions& options = {});

}  // namespace synthforge
