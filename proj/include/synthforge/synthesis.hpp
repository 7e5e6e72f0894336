#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/conversation.hpp"
#include "synthforge/dataflow.hpp"
#include "synthforge/trace.hpp"
#include "synthforge/verdict.hpp"

namespace synthforge {

/// Payload field names shared by the QA node library.
namespace qa_fields {
inline constexpr const char* kPassage = "passage";
inline constexpr const char* kTargetType = "target_type";
inline constexpr const char* kTransformed = "transformed_passage";
inline constexpr const char* kInstructionType = "instruction_type";
inline constexpr const char* kInstructionMode = "instruction_mode";
inline constexpr const char* kInstruction = "instruction";
inline constexpr const char* kAnswer = "answer";
inline constexpr const char* kVerdict = "verdict";
}  // namespace qa_fields

enum class InstructionMode { kContextual, kStandalone };

std::string_view to_string(InstructionMode mode);
InstructionMode parse_instruction_mode(std::string_view name);

struct InstructionSpec {
  std::string instruction_type;
  InstructionMode mode = InstructionMode::kContextual;
  std::string text;

  /// Reads the instruction fields; throws Error(kPreconditionViolation) when
  /// they are absent.
  static InstructionSpec from_payload(const Payload& payload);
};

struct TransformNodeOptions {
  std::string id = "transform_passage";
  std::vector<std::string> target_types;
  // Drawing this target type copies the passage without a gateway call.
  std::string identity_type = "identity";
  std::string model_role = "generator";
  std::optional<PromptTemplate> prompt;
  std::optional<Sampling> sampling;
};

struct InstructionNodeOptions {
  std::string id;  // defaults to "instruction_<mode>"
  std::vector<std::string> instruction_types;
  InstructionMode mode = InstructionMode::kContextual;
  std::string model_role = "generator";
  int leak_ngram = 12;
  std::optional<PromptTemplate> prompt;
  std::optional<Sampling> sampling;
};

struct AnswerNodeOptions {
  std::string id = "answer";
  std::string model_role = "answerer";
  std::optional<PromptTemplate> prompt;
  std::optional<Sampling> sampling;
};

struct JudgeNodeOptions {
  std::string id = "judge";
  std::string model_role = "judge";
  double threshold = 0.7;
  double score_scale = 1.0;
  std::optional<PromptTemplate> prompt;
  std::optional<Sampling> sampling;
};

NodeSpec make_transform_node(const TransformNodeOptions& options);
NodeSpec make_instruction_node(const InstructionNodeOptions& options);
NodeSpec make_answer_node(const AnswerNodeOptions& options = {});
NodeSpec make_judge_node(const JudgeNodeOptions& options = {});

/// Applies a transform node. Throws Error(kPreconditionViolation) when the
/// passage is missing or blank.
Payload transform_passage(const Payload& payload, const NodeSpec& node, ExecContext& ctx);

/// Applies an instruction node; standalone leaks raise Error(kStandaloneLeak).
Payload generate_instruction(const Payload& payload, const NodeSpec& node, ExecContext& ctx);

/// Throws Error(kSameModelRole) when the two nodes share a model role.
void require_distinct_roles(const NodeSpec& answer, const NodeSpec& judge);

/// One answer attempt already executed elsewhere (e.g. by a graph walk).
struct LoopAttempt {
  std::vector<WalkStep> steps;  // the answer step then the judge step
};

struct JudgeLoopResult {
  bool accepted = false;
  int iterations = 0;
  Payload final_payload;              // answer + passing verdict when accepted
  std::vector<JudgeVerdict> verdicts; // one per iteration
  std::vector<WalkStep> steps;        // answer/judge steps run by the loop
};

/// Answer, judge, and revise until the judge passes or `max_iters` attempts
/// are spent. Revisions resend the answer prompt followed by the previous
/// answer and the judge's notes. `first`, when given, counts as iteration 1.
JudgeLoopResult run_judge_loop(const Payload& instruction_payload, const NodeSpec& answer,
                               const NodeSpec& judge, int max_iters, ExecContext& ctx,
                               const std::optional<LoopAttempt>& first = std::nullopt);

struct ProvenanceOptions {
  std::string sample_id;
  bool accepted = true;
  bool keep_discarded_intermediates = false;
  std::string instruction_field = qa_fields::kInstruction;
  std::string answer_field = qa_fields::kAnswer;
};

/// One conversation per gateway call in the trace, then the final QA
/// conversation for accepted samples. Discarded samples yield intermediates
/// only when configured.
std::vector<Conversation> collect_provenance(const WalkTrace& trace,
                                             const ProvenanceOptions& options = {});

struct TaxonomyNode {
  std::string label;
  int depth = 0;
  std::vector<TaxonomyNode> children;
  std::vector<std::string> prompts;

  std::size_t leaf_count() const;
  std::size_t prompt_count() const;
  std::vector<std::string> all_prompts() const;

  nlohmann::json to_json() const;
  static TaxonomyNode from_json(const nlohmann::json& j);
};

struct TaxonomyOptions {
  int max_depth = 2;
  int branching = 4;
  int prompts_per_leaf = 4;
  int max_retries = 2;  // extra attempts after a malformed reply
  std::string model_role = "generator";
  std::optional<PromptTemplate> expand_prompt;  // slots: domain, path, branching
  std::optional<PromptTemplate> leaf_prompt;    // slots: domain, path, count
  std::optional<Sampling> sampling;
  std::uint64_t seed = 0;
};

/// Depth-first expansion. Children replies are a JSON array of distinct
/// labels (at most `branching`) or the word INDIVISIBLE; leaf replies are
/// a JSON array or lines of prompts. Malformed replies are retried, then
/// Error(kMalformedResponse) halts the expansion.
TaxonomyNode expand_taxonomy(const std::string& root_domain, const TaxonomyOptions& options,
                             Gateway& gateway);

struct PersonaParameters {
  std::string task_type_focus;
  std::string difficulty;
  std::string technical_challenges;
  std::string project_nature;
  std::string tone;
  std::string typo_directive;
  std::int64_t token_limit = 0;

  nlohmann::json to_json() const;
  static PersonaParameters from_json(const nlohmann::json& j);
};

struct PersonaCatalog {
  std::vector<std::string> task_type_focus;
  std::vector<std::string> difficulty;
  std::vector<std::string> technical_challenges;
  std::vector<std::string> project_nature;
  std::vector<std::string> tone;
  std::vector<std::string> typo_directive;
  std::vector<std::int64_t> token_limit;

  static PersonaCatalog defaults();
  static PersonaCatalog from_json(const nlohmann::json& j);
  PersonaParameters draw(Rng& rng) const;
};

struct PersonaTask {
  std::string persona;
  PersonaParameters parameters;
  std::string task;

  nlohmann::json to_json() const;
};

struct PersonaOptions {
  std::string model_role = "generator";
  std::optional<PromptTemplate> prompt;  // slots: persona and each parameter
  std::optional<Sampling> sampling;
  std::optional<std::uint64_t> seed;
};

/// The default persona prompt, exposed so callers can inspect its slots.
PromptTemplate default_persona_prompt();

/// Throws Error(kMissingSlot) when the persona or any parameter is empty.
PersonaTask synthesize_persona_task(const std::string& persona,
                                    const PersonaParameters& parameters, Gateway& gateway,
                                    const PersonaOptions& options = {});

}  // namespace synthforge
