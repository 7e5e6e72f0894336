#include "synthforge/dataflow.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "synthforge/errors.hpp"
#include "synthforge/graph.hpp"
#include "synthforge/text.hpp"
#include "synthforge/trace.hpp"
#include "synthforge/verdict.hpp"

namespace synthforge {

using nlohmann::json;

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::kText: return "text";
    case FieldKind::kTextList: return "text-list";
    case FieldKind::kRecord: return "record";
    case FieldKind::kIdentifier: return "identifier";
    case FieldKind::kInteger: return "integer";
    case FieldKind::kReal: return "real";
  }
  return "text";
}

FieldKind parse_field_kind(std::string_view name) {
  if (name == "text") return FieldKind::kText;
  if (name == "text-list") return FieldKind::kTextList;
  if (name == "record") return FieldKind::kRecord;
  if (name == "identifier") return FieldKind::kIdentifier;
  if (name == "integer") return FieldKind::kInteger;
  if (name == "real") return FieldKind::kReal;
  throw Error(ErrorCode::kConfigInvalid, "unknown field kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Value

Value Value::record(json record) {
  if (!record.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "record values must be JSON objects");
  }
  return Value(Storage(std::move(record)));
}

namespace {

[[noreturn]] void wrong_kind(FieldKind want, FieldKind have) {
  throw Error(ErrorCode::kInvalidArgument, "value is " + std::string(to_string(have)) +
                                               ", not " + std::string(to_string(want)));
}

}  // namespace

const std::string& Value::as_text() const {
  if (kind() != FieldKind::kText) wrong_kind(FieldKind::kText, kind());
  return std::get<std::string>(storage_);
}

const std::vector<std::string>& Value::as_text_list() const {
  if (kind() != FieldKind::kTextList) wrong_kind(FieldKind::kTextList, kind());
  return std::get<std::vector<std::string>>(storage_);
}

const json& Value::as_record() const {
  if (kind() != FieldKind::kRecord) wrong_kind(FieldKind::kRecord, kind());
  return std::get<json>(storage_);
}

const std::string& Value::as_identifier() const {
  if (kind() != FieldKind::kIdentifier) wrong_kind(FieldKind::kIdentifier, kind());
  return std::get<Identifier>(storage_).value;
}

std::int64_t Value::as_integer() const {
  if (kind() != FieldKind::kInteger) wrong_kind(FieldKind::kInteger, kind());
  return std::get<std::int64_t>(storage_);
}

double Value::as_real() const {
  if (kind() != FieldKind::kReal) wrong_kind(FieldKind::kReal, kind());
  return std::get<double>(storage_);
}

std::string Value::render() const {
  switch (kind()) {
    case FieldKind::kText: return as_text();
    case FieldKind::kIdentifier: return as_identifier();
    case FieldKind::kInteger: return std::to_string(as_integer());
    case FieldKind::kReal: return json(as_real()).dump();
    case FieldKind::kRecord: return as_record().dump();
    case FieldKind::kTextList: {
      std::string out;
      for (const auto& item : as_text_list()) {
        if (!out.empty()) out += '\n';
        out += "- " + item;
      }
      return out;
    }
  }
  return {};
}

json Value::to_json() const {
  switch (kind()) {
    case FieldKind::kText: return as_text();
    case FieldKind::kTextList: return as_text_list();
    case FieldKind::kRecord: return as_record();
    case FieldKind::kIdentifier: return as_identifier();
    case FieldKind::kInteger: return as_integer();
    case FieldKind::kReal: return as_real();
  }
  return nullptr;
}

Value Value::from_json(FieldKind kind, const json& j) {
  auto mismatch = [&] {
    return Error(ErrorCode::kInvalidArgument,
                 "JSON value does not fit kind " + std::string(to_string(kind)));
  };
  switch (kind) {
    case FieldKind::kText:
      if (!j.is_string()) throw mismatch();
      return text(j.get<std::string>());
    case FieldKind::kIdentifier:
      if (!j.is_string()) throw mismatch();
      return identifier(j.get<std::string>());
    case FieldKind::kTextList: {
      if (!j.is_array()) throw mismatch();
      std::vector<std::string> items;
      for (const auto& e : j) {
        if (!e.is_string()) throw mismatch();
        items.push_back(e.get<std::string>());
      }
      return text_list(std::move(items));
    }
    case FieldKind::kRecord:
      if (!j.is_object()) throw mismatch();
      return record(j);
    case FieldKind::kInteger:
      if (!j.is_number_integer()) throw mismatch();
      return integer(j.get<std::int64_t>());
    case FieldKind::kReal:
      if (!j.is_number()) throw mismatch();
      return real(j.get<double>());
  }
  throw mismatch();
}

// ---------------------------------------------------------------------------
// Condition

Condition::Condition(std::initializer_list<std::pair<std::string, FieldKind>> fields) {
  for (const auto& [name, kind] : fields) add(name, kind);
}

void Condition::add(std::string name, FieldKind kind) {
  if (name.empty()) throw Error(ErrorCode::kConfigInvalid, "empty field name");
  if (!fields_.emplace(std::move(name), kind).second) {
    throw Error(ErrorCode::kConfigInvalid, "duplicate field in condition");
  }
}

bool Condition::satisfied_by(const Condition& provided) const {
  for (const auto& [name, kind] : fields_) {
    auto it = provided.fields_.find(name);
    if (it == provided.fields_.end() || it->second != kind) return false;
  }
  return true;
}

Condition Condition::merge(const Condition& base, const Condition& overriding) {
  Condition out = base;
  for (const auto& [name, kind] : overriding.fields_) out.fields_[name] = kind;
  return out;
}

json Condition::to_json() const {
  json out = json::array();
  for (const auto& [name, kind] : fields_) {
    out.push_back({{"name", name}, {"kind", to_string(kind)}});
  }
  return out;
}

Condition Condition::from_json(const json& j) {
  Condition c;
  if (j.is_null()) return c;
  if (j.is_object()) {
    // {"name": "kind", ...}
    for (const auto& [name, kind] : j.items()) {
      c.add(name, parse_field_kind(kind.get<std::string>()));
    }
    return c;
  }
  for (const auto& f : j) {
    c.add(f.at("name").get<std::string>(),
          parse_field_kind(f.value("kind", std::string("text"))));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Payload

const Value* Payload::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

const Value& Payload::at(const std::string& name) const {
  if (const Value* v = find(name)) return *v;
  throw Error(ErrorCode::kInvalidArgument, "payload has no field '" + name + "'");
}

Payload Payload::with(std::string name, Value v) const {
  Payload out = *this;
  out.entries_.insert_or_assign(std::move(name), std::move(v));
  return out;
}

Payload Payload::with_invocation(std::string invocation_id) const {
  Payload out = *this;
  out.provenance_.push_back(std::move(invocation_id));
  return out;
}

Condition Payload::shape() const {
  Condition c;
  for (const auto& [name, value] : entries_) c.add(name, value.kind());
  return c;
}

json Payload::to_json() const {
  json entries = json::object();
  for (const auto& [name, value] : entries_) {
    entries[name] = {{"kind", to_string(value.kind())}, {"value", value.to_json()}};
  }
  return {{"entries", entries}, {"provenance", provenance_}};
}

Payload Payload::from_json(const json& j) {
  Payload p;
  for (const auto& [name, e] : j.at("entries").items()) {
    p.entries_.emplace(name, Value::from_json(parse_field_kind(e.at("kind").get<std::string>()),
                                              e.at("value")));
  }
  p.provenance_ = j.value("provenance", std::vector<std::string>{});
  return p;
}

// ---------------------------------------------------------------------------
// Templates and node contracts

std::string_view to_string(Behavior behavior) {
  switch (behavior) {
    case Behavior::kLlmGenerator: return "llm-generator";
    case Behavior::kLlmJudge: return "llm-judge";
    case Behavior::kPureTransform: return "pure-transform";
    case Behavior::kComposedGraph: return "composed-graph";
  }
  return "pure-transform";
}

Behavior parse_behavior(std::string_view name) {
  if (name == "llm-generator") return Behavior::kLlmGenerator;
  if (name == "llm-judge") return Behavior::kLlmJudge;
  if (name == "pure-transform") return Behavior::kPureTransform;
  if (name == "composed-graph") return Behavior::kComposedGraph;
  throw Error(ErrorCode::kConfigInvalid, "unknown behavior '" + std::string(name) + "'");
}

namespace {

void collect_slots(std::string_view text, std::vector<std::string>& out) {
  std::size_t pos = 0;
  while ((pos = text.find("{{", pos)) != std::string_view::npos) {
    const auto close = text.find("}}", pos + 2);
    if (close == std::string_view::npos) break;
    std::string name(text::trim(text.substr(pos + 2, close - pos - 2)));
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    pos = close + 2;
  }
}

}  // namespace

std::vector<std::string> PromptTemplate::slots() const {
  std::vector<std::string> out;
  collect_slots(system, out);
  collect_slots(user, out);
  return out;
}

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(text::trim(tmpl.substr(open + 2, close - open - 2)));
    auto it = values.find(name);
    if (it == values.end()) {
      throw Error(ErrorCode::kMissingSlot, "no value for slot '" + name + "'");
    }
    out += it->second;
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

Condition NodeSpec::drawn_fields() const {
  Condition drawn;
  for (const auto& choice : generator.choices) drawn.add(choice.field, FieldKind::kIdentifier);
  for (const auto& [name, value] : generator.constants) {
    if (!drawn.contains(name)) drawn.add(name, value.kind());
  }
  return drawn;
}

void NodeSpec::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kConfigInvalid, "node '" + id + "': " + why);
  };
  if (id.empty()) throw Error(ErrorCode::kConfigInvalid, "node without id");
  if (id.find('/') != std::string::npos) fail("ids may not contain '/'");
  switch (behavior) {
    case Behavior::kLlmGenerator:
    case Behavior::kLlmJudge: {
      if (!prompt) fail("LLM nodes need a prompt template");
      if (!model_role || model_role->empty()) fail("LLM nodes need a model role");
      const Condition available = Condition::merge(pre, drawn_fields());
      for (const auto& slot : prompt->slots()) {
        if (!available.contains(slot)) fail("slot '" + slot + "' is not a precondition");
      }
      for (const auto& choice : generator.choices) {
        if (choice.options.empty()) fail("catalog '" + choice.field + "' is empty");
        if (post.fields().count(choice.field) == 0 ||
            post.fields().at(choice.field) != FieldKind::kIdentifier) {
          fail("drawn field '" + choice.field + "' must be an identifier postcondition");
        }
      }
      for (const auto& [name, value] : generator.constants) {
        auto it = post.fields().find(name);
        if (it == post.fields().end() || it->second != value.kind()) {
          fail("constant '" + name + "' must be a postcondition of the same kind");
        }
      }
      if (behavior == Behavior::kLlmJudge) {
        auto it = post.fields().find(judge.verdict_field);
        if (it == post.fields().end() || it->second != FieldKind::kRecord) {
          fail("judge must post record field '" + judge.verdict_field + "'");
        }
        if (!(judge.threshold >= 0.0 && judge.threshold <= 1.0)) fail("threshold outside [0,1]");
        if (!(judge.score_scale > 0.0)) fail("score scale must be positive");
      }
      break;
    }
    case Behavior::kPureTransform:
      if (!transform) fail("pure-transform node without a transform");
      break;
    case Behavior::kComposedGraph:
      if (!subgraph) fail("composed-graph node without a graph");
      break;
  }
}

bool check_preconditions(const Payload& payload, const NodeSpec& node) {
  for (const auto& [name, kind] : node.pre.fields()) {
    const Value* v = payload.find(name);
    if (v == nullptr || v->kind() != kind) return false;
  }
  return true;
}

std::string invocation_id(const NodeSpec& node, const Payload& input) {
  return node.id + "#" + std::to_string(input.provenance().size());
}

// ---------------------------------------------------------------------------
// Node application

namespace {

std::map<std::string, std::string> slot_values(const Payload& p) {
  std::map<std::string, std::string> values;
  for (const auto& [name, value] : p.entries()) values.emplace(name, value.render());
  return values;
}

CompletionRequest build_request(const NodeSpec& node, const Payload& working,
                                const ExecContext& ctx, const Payload& input) {
  CompletionRequest req;
  req.model_role = *node.model_role;
  if (node.generator.sampling) req.sampling = *node.generator.sampling;
  if (ctx.request_seed_base) {
    req.sampling.seed =
        mix64(*ctx.request_seed_base ^ mix64(input.provenance().size() + 1)) >> 1;
  }
  const auto values = slot_values(working);
  if (!node.prompt->system.empty()) {
    req.messages.push_back({Role::kSystem, render_template(node.prompt->system, values)});
  }
  req.messages.push_back({Role::kUser, render_template(node.prompt->user, values)});
  for (const auto& m : ctx.extra_messages) req.messages.push_back(m);
  return req;
}

CompletionResponse call(const NodeSpec& node, const CompletionRequest& req,
                        ExecContext& ctx, std::vector<CallRecord>& calls) {
  if (ctx.gateway == nullptr) {
    throw Error(ErrorCode::kConfigInvalid, "node '" + node.id + "' needs a gateway");
  }
  CompletionResponse resp = ctx.gateway->complete(req);
  calls.push_back({node.id, req, resp});
  return resp;
}

json parse_object(std::string_view completion, const std::string& node_id) {
  try {
    auto j = json::parse(text::strip_code_fence(completion));
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  throw Error(ErrorCode::kPostconditionUnmet,
              "node '" + node_id + "' expected a JSON object response");
}

Value parse_list(std::string_view completion) {
  try {
    auto j = json::parse(text::strip_code_fence(completion));
    if (j.is_array()) return Value::from_json(FieldKind::kTextList, j);
  } catch (const json::exception&) {
  } catch (const Error&) {
  }
  std::vector<std::string> items;
  std::istringstream in{std::string(completion)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (text::starts_with(t, "- ") || text::starts_with(t, "* ")) t = t.substr(2);
    if (!t.empty()) items.emplace_back(t);
  }
  return Value::text_list(std::move(items));
}

// Maps a completion onto the node's output fields.
Payload map_generation(const NodeSpec& node, const Payload& working,
                       const Condition& outputs, std::string_view completion) {
  Payload out = working;
  if (outputs.fields().size() == 1) {
    const auto& [name, kind] = *outputs.fields().begin();
    if (kind == FieldKind::kText) return out.with(name, Value::text(std::string(completion)));
    if (kind == FieldKind::kTextList) return out.with(name, parse_list(completion));
  }
  if (outputs.empty()) return out;
  const json obj = parse_object(completion, node.id);
  for (const auto& [name, kind] : outputs.fields()) {
    if (!obj.contains(name)) {
      throw Error(ErrorCode::kPostconditionUnmet,
                  "node '" + node.id + "' response omits '" + name + "'");
    }
    try {
      out = out.with(name, Value::from_json(kind, obj.at(name)));
    } catch (const Error&) {
      throw Error(ErrorCode::kPostconditionUnmet,
                  "node '" + node.id + "' response field '" + name + "' is not " +
                      std::string(to_string(kind)));
    }
  }
  return out;
}

// Post fields the model must write: not drawn, and not merely carried
// through from the input (a post field that repeats a pre field of the same
// kind declares that the node preserves it).
Condition output_fields(const NodeSpec& node) {
  const Condition drawn = node.drawn_fields();
  Condition outputs;
  for (const auto& [name, kind] : node.post.fields()) {
    if (drawn.contains(name)) continue;
    auto in = node.pre.fields().find(name);
    if (in != node.pre.fields().end() && in->second == kind) continue;
    outputs.add(name, kind);
  }
  return outputs;
}

NodeOutcome run_generator(const Payload& input, const NodeSpec& node, ExecContext& ctx) {
  NodeOutcome outcome;
  Payload working = input;
  for (const auto& choice : node.generator.choices) {
    if (ctx.rng == nullptr) {
      throw Error(ErrorCode::kConfigInvalid, "node '" + node.id + "' draws but has no rng");
    }
    const auto& pick = choice.options[uniform_index(*ctx.rng, choice.options.size())];
    working = working.with(choice.field, Value::identifier(pick));
  }
  for (const auto& [name, value] : node.generator.constants) {
    working = working.with(name, value);
  }
  const Condition outputs = output_fields(node);

  const auto& g = node.generator;
  if (!g.passthrough_field.empty() && working.has(g.passthrough_field) &&
      working.at(g.passthrough_field).render() == g.passthrough_value &&
      outputs.fields().size() == 1) {
    const auto& name = outputs.fields().begin()->first;
    outcome.payload = working.with(name, input.at(g.passthrough_from));
    return outcome;
  }

  const CompletionRequest req = build_request(node, working, ctx, input);
  const CompletionResponse resp = call(node, req, ctx, outcome.calls);
  Payload out = map_generation(node, working, outputs, resp.text);

  if (outputs.fields().size() == 1 &&
      outputs.fields().begin()->second == FieldKind::kText) {
    const auto& name = outputs.fields().begin()->first;
    std::string produced = out.at(name).as_text();
    if (!g.embed_field.empty() && input.has(g.embed_field)) {
      const std::string source = input.at(g.embed_field).render();
      if (produced.find(source) == std::string::npos) {
        produced = text::trim(produced).empty() ? source : produced + "\n\n" + source;
        out = out.with(name, Value::text(produced));
      }
    }
    if (!g.leak_field.empty() && input.has(g.leak_field) &&
        text::shares_token_ngram(produced, input.at(g.leak_field).render(), g.leak_ngram)) {
      throw Error(ErrorCode::kStandaloneLeak,
                  "node '" + node.id + "' output repeats a " + std::to_string(g.leak_ngram) +
                      "-token span of '" + g.leak_field + "'");
    }
  }
  outcome.payload = std::move(out);
  return outcome;
}

NodeOutcome run_judge(const Payload& input, const NodeSpec& node, ExecContext& ctx) {
  NodeOutcome outcome;
  Payload working = input;
  for (const auto& [name, value] : node.generator.constants) working = working.with(name, value);
  const CompletionRequest req = build_request(node, working, ctx, input);
  const CompletionResponse resp = call(node, req, ctx, outcome.calls);
  JudgeVerdict verdict;
  try {
    verdict = parse_judge_verdict(resp.text, node.judge.threshold, node.judge.score_scale);
  } catch (const Error& e) {
    throw Error(ErrorCode::kPostconditionUnmet,
                "judge '" + node.id + "' gave no usable verdict: " + e.what());
  }
  outcome.payload = working.with(node.judge.verdict_field, Value::record(verdict.to_json()));
  return outcome;
}

void check_postconditions(const Payload& out, const NodeSpec& node) {
  for (const auto& [name, kind] : node.post.fields()) {
    const Value* v = out.find(name);
    if (v == nullptr) {
      throw Error(ErrorCode::kPostconditionUnmet,
                  "node '" + node.id + "' did not produce '" + name + "'");
    }
    if (v->kind() != kind) {
      throw Error(ErrorCode::kPostconditionUnmet,
                  "node '" + node.id + "' produced '" + name + "' as " +
                      std::string(to_string(v->kind())));
    }
  }
}

}  // namespace

// Defined in graph.cpp; runs the sub-walk of a composed node.
NodeOutcome run_composed(const Payload& input, const NodeSpec& node, ExecContext& ctx);

NodeOutcome apply_node_traced(const Payload& payload, const NodeSpec& node,
                              ExecContext& ctx) {
  if (!check_preconditions(payload, node)) {
    throw Error(ErrorCode::kPreconditionViolation,
                "payload does not satisfy preconditions of '" + node.id + "'");
  }
  NodeOutcome outcome;
  switch (node.behavior) {
    case Behavior::kPureTransform: {
      if (!node.transform) {
        throw Error(ErrorCode::kConfigInvalid, "node '" + node.id + "' has no transform");
      }
      Payload out = payload;
      for (auto& [name, value] : node.transform(payload)) out = out.with(name, std::move(value));
      outcome.payload = std::move(out);
      break;
    }
    case Behavior::kLlmGenerator:
      outcome = run_generator(payload, node, ctx);
      break;
    case Behavior::kLlmJudge:
      outcome = run_judge(payload, node, ctx);
      break;
    case Behavior::kComposedGraph:
      outcome = run_composed(payload, node, ctx);
      check_postconditions(outcome.payload, node);
      return outcome;
  }
  check_postconditions(outcome.payload, node);
  outcome.payload = outcome.payload.with_invocation(invocation_id(node, payload));
  return outcome;
}

Payload apply_node(const Payload& payload, const NodeSpec& node, ExecContext& ctx) {
  return apply_node_traced(payload, node, ctx).payload;
}

}  // namespace synthforge
