#include "synthforge/synthesis.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "synthforge/errors.hpp"
#include "synthforge/graph.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;
namespace f = qa_fields;

std::string_view to_string(InstructionMode mode) {
  return mode == InstructionMode::kContextual ? "contextual" : "standalone";
}

InstructionMode parse_instruction_mode(std::string_view name) {
  if (name == "contextual") return InstructionMode::kContextual;
  if (name == "standalone") return InstructionMode::kStandalone;
  throw Error(ErrorCode::kConfigInvalid, "unknown instruction mode '" + std::string(name) + "'");
}

InstructionSpec InstructionSpec::from_payload(const Payload& p) {
  for (const char* name : {f::kInstructionType, f::kInstructionMode, f::kInstruction}) {
    if (!p.has(name)) {
      throw Error(ErrorCode::kPreconditionViolation, std::string("payload lacks '") + name + "'");
    }
  }
  return {p.at(f::kInstructionType).as_identifier(),
          parse_instruction_mode(p.at(f::kInstructionMode).as_identifier()),
          p.at(f::kInstruction).as_text()};
}

// ------------------------------------------------------------ node factories

NodeSpec make_transform_node(const TransformNodeOptions& o) {
  NodeSpec n;
  n.id = o.id;
  n.behavior = Behavior::kLlmGenerator;
  n.pre = {{f::kPassage, FieldKind::kText}};
  n.post = {{f::kTargetType, FieldKind::kIdentifier}, {f::kTransformed, FieldKind::kText}};
  n.model_role = o.model_role;
  n.prompt = o.prompt.value_or(PromptTemplate{
      "You rewrite source documents into other genres while keeping their facts.",
      "Rewrite the passage below as a {{target_type}}. Reply with the rewritten text only.\n\n"
      "Passage:\n{{passage}}"});
  if (o.target_types.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "transform node needs at least one target type");
  }
  n.generator.choices.push_back({f::kTargetType, o.target_types});
  if (!o.identity_type.empty()) {
    n.generator.passthrough_field = f::kTargetType;
    n.generator.passthrough_value = o.identity_type;
    n.generator.passthrough_from = f::kPassage;
  }
  n.generator.sampling = o.sampling;
  n.validate();
  return n;
}

NodeSpec make_instruction_node(const InstructionNodeOptions& o) {
  NodeSpec n;
  n.id = o.id.empty() ? "instruction_" + std::string(to_string(o.mode)) : o.id;
  n.behavior = Behavior::kLlmGenerator;
  n.pre = {{f::kTransformed, FieldKind::kText}};
  n.post = {{f::kInstructionType, FieldKind::kIdentifier},
            {f::kInstructionMode, FieldKind::kIdentifier},
            {f::kInstruction, FieldKind::kText}};
  n.model_role = o.model_role;
  if (o.prompt) {
    n.prompt = o.prompt;
  } else if (o.mode == InstructionMode::kContextual) {
    n.prompt = PromptTemplate{
        "You write tasks for an assistant.",
        "Write one {{instruction_type}} instruction about the document below. The instruction "
        "must quote the full document so it can be answered on its own.\n\n{{transformed_passage}}"};
  } else {
    n.prompt = PromptTemplate{
        "You write tasks for an assistant.",
        "Using the document below only as inspiration, write one self-contained "
        "{{instruction_type}} instruction. Do not copy sentences from it.\n\n{{transformed_passage}}"};
  }
  if (o.instruction_types.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "instruction node needs at least one instruction type");
  }
  n.generator.choices.push_back({f::kInstructionType, o.instruction_types});
  n.generator.constants.emplace(f::kInstructionMode, Value::identifier(std::string(to_string(o.mode))));
  if (o.mode == InstructionMode::kContextual) {
    n.generator.embed_field = f::kTransformed;
  } else {
    n.generator.leak_field = f::kTransformed;
    n.generator.leak_ngram = o.leak_ngram;
  }
  n.generator.sampling = o.sampling;
  n.validate();
  return n;
}

NodeSpec make_answer_node(const AnswerNodeOptions& o) {
  NodeSpec n;
  n.id = o.id;
  n.behavior = Behavior::kLlmGenerator;
  n.pre = {{f::kInstruction, FieldKind::kText}};
  // The instruction is carried through so the judge can follow directly.
  n.post = {{f::kInstruction, FieldKind::kText}, {f::kAnswer, FieldKind::kText}};
  n.model_role = o.model_role;
  n.prompt = o.prompt.value_or(PromptTemplate{"", "{{instruction}}"});
  n.generator.sampling = o.sampling;
  n.validate();
  return n;
}

NodeSpec make_judge_node(const JudgeNodeOptions& o) {
  NodeSpec n;
  n.id = o.id;
  n.behavior = Behavior::kLlmJudge;
  n.pre = {{f::kInstruction, FieldKind::kText}, {f::kAnswer, FieldKind::kText}};
  n.post = {{f::kVerdict, FieldKind::kRecord}};
  n.model_role = o.model_role;
  n.prompt = o.prompt.value_or(PromptTemplate{
      "You grade answers on clarity, accuracy, depth and tone.",
      "Instruction:\n{{instruction}}\n\nAnswer:\n{{answer}}\n\n"
      "Reply with JSON: {\"score\": <0 to 1>, \"notes\": \"<what to improve>\"}."});
  n.judge.threshold = o.threshold;
  n.judge.score_scale = o.score_scale;
  n.judge.verdict_field = f::kVerdict;
  n.generator.sampling = o.sampling;
  n.validate();
  return n;
}

Payload transform_passage(const Payload& payload, const NodeSpec& node, ExecContext& ctx) {
  const Value* passage = payload.find(f::kPassage);
  if (passage == nullptr || passage->kind() != FieldKind::kText ||
      text::trim(passage->as_text()).empty()) {
    throw Error(ErrorCode::kPreconditionViolation, "passage must be non-empty text");
  }
  return apply_node(payload, node, ctx);
}

Payload generate_instruction(const Payload& payload, const NodeSpec& node, ExecContext& ctx) {
  return apply_node(payload, node, ctx);
}

// ---------------------------------------------------------------- judge loop

void require_distinct_roles(const NodeSpec& answer, const NodeSpec& judge) {
  if (!answer.model_role || !judge.model_role) {
    throw Error(ErrorCode::kConfigInvalid, "answer and judge nodes need model roles");
  }
  if (*answer.model_role == *judge.model_role) {
    throw Error(ErrorCode::kSameModelRole,
                "judge '" + judge.id + "' and answer '" + answer.id + "' share model role '" +
                    *answer.model_role + "'");
  }
}

namespace {

JudgeVerdict verdict_of(const Payload& judged, const NodeSpec& judge) {
  return JudgeVerdict::from_json(judged.at(judge.judge.verdict_field).as_record());
}

std::string revision_request(const JudgeVerdict& v) {
  std::ostringstream out;
  out << "A reviewer scored this answer " << v.score << " on a 0 to 1 scale.";
  if (!v.notes.empty()) out << " Their notes: " << v.notes;
  out << "\nWrite an improved answer to the original instruction. Reply with the answer only.";
  return out.str();
}

}  // namespace

JudgeLoopResult run_judge_loop(const Payload& instruction_payload, const NodeSpec& answer,
                               const NodeSpec& judge, int max_iters, ExecContext& ctx,
                               const std::optional<LoopAttempt>& first) {
  require_distinct_roles(answer, judge);
  if (max_iters < 1) throw Error(ErrorCode::kInvalidArgument, "max_iters must be at least 1");
  JudgeLoopResult result;
  const std::optional<std::uint64_t> base = ctx.request_seed_base;
  Messages revision;

  auto record = [&](const Payload& judged, const std::string& answer_text) {
    const JudgeVerdict v = verdict_of(judged, judge);
    if (v.pass != (v.score >= judge.judge.threshold)) {
      throw Error(ErrorCode::kPostconditionUnmet, "verdict pass flag disagrees with threshold");
    }
    result.verdicts.push_back(v);
    result.iterations = static_cast<int>(result.verdicts.size());
    if (v.pass) {
      result.accepted = true;
      result.final_payload = judged;
    } else {
      revision = {{Role::kAssistant, answer_text}, {Role::kUser, revision_request(v)}};
    }
  };

  if (first) {
    if (first->steps.size() != 2) {
      throw Error(ErrorCode::kInvalidArgument, "a prior attempt needs an answer and a judge step");
    }
    const Payload& judged = first->steps[1].payload_after;
    record(judged, judged.at(f::kAnswer).render());
  }
  while (!result.accepted && result.iterations < max_iters) {
    const int iter = result.iterations;
    ExecContext step_ctx = ctx;
    // Revisions get their own sampling seeds so repeated prompts differ.
    if (base && iter > 0) step_ctx.request_seed_base = *base ^ mix64(0x5eedULL + static_cast<std::uint64_t>(iter));
    step_ctx.extra_messages = revision;
    NodeOutcome answered = apply_node_traced(instruction_payload, answer, step_ctx);
    result.steps.push_back({answer.id, answer.behavior, answered.payload, std::move(answered.calls),
                            std::move(answered.inner)});
    step_ctx.extra_messages.clear();
    NodeOutcome judged = apply_node_traced(answered.payload, judge, step_ctx);
    result.steps.push_back({judge.id, judge.behavior, judged.payload, std::move(judged.calls),
                            std::move(judged.inner)});
    record(judged.payload, answered.payload.at(f::kAnswer).render());
  }
  return result;
}

// -------------------------------------------------------------- provenance

namespace {

void flatten_steps(const std::vector<WalkStep>& steps, std::vector<const WalkStep*>& out) {
  for (const auto& s : steps) {
    if (s.behavior == Behavior::kComposedGraph) {
      flatten_steps(s.inner, out);
    } else {
      out.push_back(&s);
    }
  }
}

Conversation call_conversation(const CallRecord& call) {
  Conversation c;
  c.messages = call.request.messages;
  if (call.request.continue_final_message && !c.messages.empty() &&
      c.messages.back().role == Role::kAssistant) {
    c.messages.back().content += call.response.text;
  } else {
    c.messages.push_back({Role::kAssistant, call.response.text});
  }
  c.source_node = call.node_id;
  c.meta["kind"] = "intermediate";
  c.meta["model_role"] = call.request.model_role;
  c.meta["finish_reason"] = std::string(to_string(call.response.finish_reason));
  return c;
}

}  // namespace

std::vector<Conversation> collect_provenance(const WalkTrace& trace, const ProvenanceOptions& o) {
  std::vector<Conversation> out;
  const Payload& final_payload = trace.final_payload();
  if (o.accepted || o.keep_discarded_intermediates) {
    std::size_t k = 0;
    for (const auto& call : trace.all_calls()) {
      Conversation c = call_conversation(call);
      c.id = o.sample_id + "/call-" + std::to_string(k++);
      c.provenance = final_payload.provenance();
      if (!o.accepted) c.meta["discarded"] = true;
      out.push_back(std::move(c));
    }
  }
  if (!o.accepted) return out;

  const Value* instr = final_payload.find(o.instruction_field);
  const Value* ans = final_payload.find(o.answer_field);
  if (instr == nullptr || ans == nullptr) {
    throw Error(ErrorCode::kPostconditionUnmet, "accepted sample lacks instruction or answer");
  }
  std::vector<const WalkStep*> flat;
  flatten_steps(trace.steps, flat);
  std::string producer;
  const Value* prev = trace.seed.find(o.answer_field);
  for (const auto* s : flat) {
    const Value* now = s->payload_after.find(o.answer_field);
    if (now != nullptr && (prev == nullptr || !(*now == *prev))) producer = s->node_id;
    prev = now;
  }
  Conversation qa;
  qa.id = o.sample_id + "/final";
  qa.messages = {{Role::kUser, instr->render()}, {Role::kAssistant, ans->render()}};
  qa.provenance = final_payload.provenance();
  qa.source_node = producer;
  qa.meta["kind"] = "final";
  if (const Value* v = final_payload.find(qa_fields::kVerdict); v && v->kind() == FieldKind::kRecord) {
    qa.meta["verdict"] = v->as_record();
  }
  out.push_back(std::move(qa));
  return out;
}

// ----------------------------------------------------------------- taxonomy

std::size_t TaxonomyNode::leaf_count() const {
  if (children.empty()) return 1;
  std::size_t n = 0;
  for (const auto& c : children) n += c.leaf_count();
  return n;
}

std::size_t TaxonomyNode::prompt_count() const {
  std::size_t n = prompts.size();
  for (const auto& c : children) n += c.prompt_count();
  return n;
}

std::vector<std::string> TaxonomyNode::all_prompts() const {
  std::vector<std::string> out = prompts;
  for (const auto& c : children) {
    auto sub = c.all_prompts();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

json TaxonomyNode::to_json() const {
  json kids = json::array();
  for (const auto& c : children) kids.push_back(c.to_json());
  return {{"label", label}, {"depth", depth}, {"children", kids}, {"prompts", prompts}};
}

TaxonomyNode TaxonomyNode::from_json(const json& j) {
  TaxonomyNode n;
  n.label = j.at("label").get<std::string>();
  n.depth = j.at("depth").get<int>();
  for (const auto& c : j.value("children", json::array())) n.children.push_back(from_json(c));
  n.prompts = j.value("prompts", std::vector<std::string>{});
  return n;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::optional<std::vector<std::string>> parse_labels(std::string_view reply) {
  try {
    const auto j = json::parse(text::strip_code_fence(reply));
    if (!j.is_array()) return std::nullopt;
    std::vector<std::string> out;
    for (const auto& e : j) {
      if (!e.is_string()) return std::nullopt;
      out.emplace_back(text::trim(e.get<std::string>()));
    }
    return out;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> parse_prompt_list(std::string_view reply) {
  if (auto labels = parse_labels(reply)) return *labels;
  std::vector<std::string> out;
  std::istringstream in{std::string(reply)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (text::starts_with(t, "- ") || text::starts_with(t, "* ")) t = t.substr(2);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

bool is_indivisible(std::string_view reply) {
  const std::string lower = text::to_lower(text::trim(text::strip_code_fence(reply)));
  if (lower == "indivisible" || lower == "\"indivisible\"") return true;
  try {
    const auto j = json::parse(lower);
    return j.is_object() && j.value("indivisible", false);
  } catch (const json::exception&) {
    return false;
  }
}

class TaxonomyExpander {
 public:
  TaxonomyExpander(const TaxonomyOptions& o, Gateway& g) : o_(o), gateway_(g) {
    expand_ = o.expand_prompt.value_or(PromptTemplate{
        "You organize knowledge domains into non-overlapping subdomains.",
        "Domain path: {{path}}\nSplit \"{{domain}}\" into at most {{branching}} distinct "
        "subdomains that together cover it without overlap. Reply with a JSON array of "
        "labels, or with the single word INDIVISIBLE if it cannot be split further."});
    leaf_ = o.leaf_prompt.value_or(PromptTemplate{
        "You write realistic user requests.",
        "Domain path: {{path}}\nWrite {{count}} varied requests a user might send about "
        "\"{{domain}}\". Reply with a JSON array of strings."});
  }

  TaxonomyNode run(const std::string& root) {
    TaxonomyNode node;
    node.label = root;
    node.depth = 0;
    expand(node, root);
    return node;
  }

 private:
  CompletionResponse ask(const PromptTemplate& p, const std::map<std::string, std::string>& values,
                         const std::string& path, int kind, int attempt) {
    CompletionRequest req;
    req.model_role = o_.model_role;
    if (o_.sampling) req.sampling = *o_.sampling;
    req.sampling.seed = mix64(o_.seed ^ fnv1a(path) ^ mix64(static_cast<std::uint64_t>(kind * 64 + attempt))) >> 1;
    if (!p.system.empty()) req.messages.push_back({Role::kSystem, render_template(p.system, values)});
    req.messages.push_back({Role::kUser, render_template(p.user, values)});
    return gateway_.complete(req);
  }

  void fill_leaf(TaxonomyNode& node, const std::string& path) {
    const std::map<std::string, std::string> values{
        {"domain", node.label}, {"path", path}, {"count", std::to_string(o_.prompts_per_leaf)}};
    for (int attempt = 0; attempt <= o_.max_retries; ++attempt) {
      auto prompts = parse_prompt_list(ask(leaf_, values, path, 1, attempt).text);
      if (!prompts.empty()) {
        node.prompts = std::move(prompts);
        return;
      }
    }
    throw Error(ErrorCode::kMalformedResponse, "no prompts for leaf '" + path + "'");
  }

  void expand(TaxonomyNode& node, const std::string& path) {
    if (node.depth >= o_.max_depth) {
      fill_leaf(node, path);
      return;
    }
    const std::map<std::string, std::string> values{
        {"domain", node.label}, {"path", path}, {"branching", std::to_string(o_.branching)}};
    std::optional<std::vector<std::string>> labels;
    for (int attempt = 0; attempt <= o_.max_retries && !labels; ++attempt) {
      const auto reply = ask(expand_, values, path, 0, attempt).text;
      if (is_indivisible(reply)) {
        fill_leaf(node, path);
        return;
      }
      auto parsed = parse_labels(reply);
      if (!parsed || parsed->empty() || parsed->size() > static_cast<std::size_t>(o_.branching)) continue;
      std::set<std::string> distinct;
      bool ok = true;
      for (const auto& l : *parsed) {
        if (l.empty() || !distinct.insert(text::to_lower(l)).second) ok = false;
      }
      if (ok) labels = std::move(parsed);
    }
    if (!labels) throw Error(ErrorCode::kMalformedResponse, "malformed subdomain list for '" + path + "'");
    for (const auto& l : *labels) {
      TaxonomyNode child;
      child.label = l;
      child.depth = node.depth + 1;
      expand(child, path + " > " + l);
      node.children.push_back(std::move(child));
    }
  }

  const TaxonomyOptions& o_;
  Gateway& gateway_;
  PromptTemplate expand_;
  PromptTemplate leaf_;
};

}  // namespace

TaxonomyNode expand_taxonomy(const std::string& root_domain, const TaxonomyOptions& options,
                             Gateway& gateway) {
  if (options.max_depth < 0) throw Error(ErrorCode::kPreconditionViolation, "max_depth must be >= 0");
  if (options.branching < 1) throw Error(ErrorCode::kPreconditionViolation, "branching must be >= 1");
  if (options.prompts_per_leaf < 1) throw Error(ErrorCode::kPreconditionViolation, "prompts_per_leaf must be >= 1");
  if (text::trim(root_domain).empty()) throw Error(ErrorCode::kPreconditionViolation, "empty root domain");
  return TaxonomyExpander(options, gateway).run(root_domain);
}

// ------------------------------------------------------------------ personas

json PersonaParameters::to_json() const {
  return {{"task_type_focus", task_type_focus}, {"difficulty", difficulty},
          {"technical_challenges", technical_challenges}, {"project_nature", project_nature},
          {"tone", tone}, {"typo_directive", typo_directive}, {"token_limit", token_limit}};
}

PersonaParameters PersonaParameters::from_json(const json& j) {
  PersonaParameters p;
  p.task_type_focus = j.value("task_type_focus", std::string{});
  p.difficulty = j.value("difficulty", std::string{});
  p.technical_challenges = j.value("technical_challenges", std::string{});
  p.project_nature = j.value("project_nature", std::string{});
  p.tone = j.value("tone", std::string{});
  p.typo_directive = j.value("typo_directive", std::string{});
  p.token_limit = j.value("token_limit", std::int64_t{0});
  return p;
}

PersonaCatalog PersonaCatalog::defaults() {
  PersonaCatalog c;
  c.task_type_focus = {"a command-line inventory tracker", "a text adventure engine",
                       "a rate limiter for a web service", "a spreadsheet formula parser",
                       "a scheduling assistant for shift workers"};
  c.difficulty = {"a quick fix a junior developer could do in an hour",
                  "a moderately sized feature with tests",
                  "a design-heavy change touching several modules"};
  c.technical_challenges = {"accessibility of UI components", "profiling a slow code path",
                            "choosing a suitable design pattern", "concurrent access to shared state",
                            "input validation and error reporting"};
  c.project_nature = {"add a feature to an existing module", "fix a bug in existing code",
                      "write tests for legacy code", "start a small project from scratch"};
  c.tone = {"formal", "casual", "impatient", "the writer's choice"};
  c.typo_directive = {"write carefully with no typos",
                      "include a few realistic typos and clipped phrasing"};
  c.token_limit = {80, 150, 300, 600};
  return c;
}

PersonaCatalog PersonaCatalog::from_json(const json& j) {
  PersonaCatalog c = defaults();
  auto pick = [&](const char* key, std::vector<std::string>& into) {
    if (j.contains(key)) into = j[key].get<std::vector<std::string>>();
  };
  pick("task_type_focus", c.task_type_focus);
  pick("difficulty", c.difficulty);
  pick("technical_challenges", c.technical_challenges);
  pick("project_nature", c.project_nature);
  pick("tone", c.tone);
  pick("typo_directive", c.typo_directive);
  if (j.contains("token_limit")) c.token_limit = j["token_limit"].get<std::vector<std::int64_t>>();
  return c;
}

PersonaParameters PersonaCatalog::draw(Rng& rng) const {
  auto one = [&](const std::vector<std::string>& v, const char* name) {
    if (v.empty()) throw Error(ErrorCode::kConfigInvalid, std::string("empty persona catalog '") + name + "'");
    return v[uniform_index(rng, v.size())];
  };
  PersonaParameters p;
  p.task_type_focus = one(task_type_focus, "task_type_focus");
  p.difficulty = one(difficulty, "difficulty");
  p.technical_challenges = one(technical_challenges, "technical_challenges");
  p.project_nature = one(project_nature, "project_nature");
  p.tone = one(tone, "tone");
  p.typo_directive = one(typo_directive, "typo_directive");
  if (token_limit.empty()) throw Error(ErrorCode::kConfigInvalid, "empty persona catalog 'token_limit'");
  p.token_limit = token_limit[uniform_index(rng, token_limit.size())];
  return p;
}

json PersonaTask::to_json() const {
  return {{"persona", persona}, {"parameters", parameters.to_json()}, {"task", task}};
}

PromptTemplate default_persona_prompt() {
  return PromptTemplate{
      "",
      "You are drafting a programming request as if written by the person described below.\n\n"
      "Request settings\n"
      "Theme to riff on loosely: {{task_type_focus}}\n"
      "Scope and difficulty: {{difficulty}}\n"
      "Technical angle to work in: {{technical_challenges}}\n"
      "Kind of work and starting point: {{project_nature}}. If existing code is involved, "
      "include a short snippet of it and say what it currently does.\n"
      "Voice: {{tone}}\n"
      "Spelling: {{typo_directive}}\n\n"
      "About the author: {{persona}}\n\n"
      "Name one to three languages or frameworks that fit the request. Let the author's "
      "background show through where it fits. Describe the work to be done but do not solve it. "
      "Keep it to about {{token_limit}} tokens, in plain paragraphs. Output only the request."};
}

PersonaTask synthesize_persona_task(const std::string& persona, const PersonaParameters& p,
                                    Gateway& gateway, const PersonaOptions& options) {
  const std::map<std::string, std::string> values{
      {"persona", persona},
      {"task_type_focus", p.task_type_focus},
      {"difficulty", p.difficulty},
      {"technical_challenges", p.technical_challenges},
      {"project_nature", p.project_nature},
      {"tone", p.tone},
      {"typo_directive", p.typo_directive},
      {"token_limit", p.token_limit > 0 ? std::to_string(p.token_limit) : std::string{}}};
  for (const auto& [name, value] : values) {
    if (text::trim(value).empty()) throw Error(ErrorCode::kMissingSlot, "slot '" + name + "' is empty");
  }
  const PromptTemplate tmpl = options.prompt.value_or(default_persona_prompt());
  CompletionRequest req;
  req.model_role = options.model_role;
  if (options.sampling) req.sampling = *options.sampling;
  if (options.seed) req.sampling.seed = *options.seed >> 1;
  if (!tmpl.system.empty()) req.messages.push_back({Role::kSystem, render_template(tmpl.system, values)});
  req.messages.push_back({Role::kUser, render_template(tmpl.user, values)});
  const auto reply = gateway.complete(req);
  return {persona, p, std::string(text::trim(reply.text))};
}

}  // namespace synthforge
