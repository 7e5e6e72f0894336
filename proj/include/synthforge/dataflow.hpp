#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "synthforge/gateway.hpp"
#include "synthforge/rng.hpp"

namespace synthforge {

enum class FieldKind { kText, kTextList, kRecord, kIdentifier, kInteger, kReal };

std::string_view to_string(FieldKind kind);
/// Throws Error(kConfigInvalid) for names outside the closed set.
FieldKind parse_field_kind(std::string_view name);

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::kText;
  std::string description;
};

struct Identifier {
  std::string value;
  friend bool operator==(const Identifier&, const Identifier&) = default;
};

/// A typed payload value. Text and identifiers are both strings but are kept
/// apart so conditions can distinguish free text from catalog labels.
class Value {
 public:
  using Storage = std::variant<std::string, std::vector<std::string>,
                               nlohmann::json, Identifier, std::int64_t,
                               double>;

  Value() = default;
  static Value text(std::string s) { return Value(Storage(std::move(s))); }
  static Value text_list(std::vector<std::string> items) {
    return Value(Storage(std::move(items)));
  }
  /// Throws Error(kInvalidArgument) unless `record` is a JSON object.
  static Value record(nlohmann::json record);
  static Value identifier(std::string id) {
    return Value(Storage(Identifier{std::move(id)}));
  }
  static Value integer(std::int64_t v) { return Value(Storage(v)); }
  static Value real(double v) { return Value(Storage(v)); }

  FieldKind kind() const { return static_cast<FieldKind>(storage_.index()); }
  const Storage& storage() const { return storage_; }

  const std::string& as_text() const;
  const std::vector<std::string>& as_text_list() const;
  const nlohmann::json& as_record() const;
  const std::string& as_identifier() const;
  std::int64_t as_integer() const;
  double as_real() const;

  /// Rendering used when the value fills a prompt slot.
  std::string render() const;

  nlohmann::json to_json() const;
  static Value from_json(FieldKind kind, const nlohmann::json& j);

  friend bool operator==(const Value&, const Value&) = default;

 private:
  explicit Value(Storage s) : storage_(std::move(s)) {}
  Storage storage_{std::string{}};
};

/// Set of named, kinded fields. Satisfaction is a name+kind lookup only.
class Condition {
 public:
  Condition() = default;
  Condition(std::initializer_list<std::pair<std::string, FieldKind>> fields);

  /// Throws Error(kConfigInvalid) on a duplicate name.
  void add(std::string name, FieldKind kind);

  const std::map<std::string, FieldKind>& fields() const { return fields_; }
  bool empty() const { return fields_.empty(); }
  bool contains(const std::string& name) const {
    return fields_.count(name) != 0;
  }

  /// True iff every field of `this` is present in `provided` with the same
  /// kind.
  bool satisfied_by(const Condition& provided) const;

  /// Union; on a name clash the kind from `overriding` wins.
  static Condition merge(const Condition& base, const Condition& overriding);

  nlohmann::json to_json() const;
  static Condition from_json(const nlohmann::json& j);

  friend bool operator==(const Condition&, const Condition&) = default;

 private:
  std::map<std::string, FieldKind> fields_;
};

/// The datum carried along a walk. Treated as an immutable value: node
/// application returns a new payload.
class Payload {
 public:
  const std::map<std::string, Value>& entries() const { return entries_; }
  const std::vector<std::string>& provenance() const { return provenance_; }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const Value* find(const std::string& name) const;
  const Value& at(const std::string& name) const;

  Payload with(std::string name, Value v) const;
  Payload with_invocation(std::string invocation_id) const;

  /// Name+kind view of the entries.
  Condition shape() const;

  nlohmann::json to_json() const;
  static Payload from_json(const nlohmann::json& j);
  /// Canonical serialization; equal payloads give equal strings.
  std::string canonical() const { return to_json().dump(); }

  friend bool operator==(const Payload&, const Payload&) = default;

 private:
  std::map<std::string, Value> entries_;
  std::vector<std::string> provenance_;
};

enum class Behavior { kLlmGenerator, kLlmJudge, kPureTransform, kComposedGraph };

std::string_view to_string(Behavior behavior);
Behavior parse_behavior(std::string_view name);

struct PromptTemplate {
  std::string system;
  std::string user;

  /// Slot names referenced as {{name}} in either part.
  std::vector<std::string> slots() const;
};

/// Replace {{slot}} markers. Throws Error(kMissingSlot) when a slot has no
/// value.
std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& values);

/// A field filled by a uniform draw from a catalog before prompting.
struct CatalogChoice {
  std::string field;
  std::vector<std::string> options;
};

struct GeneratorOptions {
  std::vector<CatalogChoice> choices;
  std::map<std::string, Value> constants;
  // When the drawn `passthrough_field` equals `passthrough_value`, copy
  // `passthrough_from` into the output field without a gateway call.
  std::string passthrough_field;
  std::string passthrough_value;
  std::string passthrough_from;
  // Contextual embedding: the output text always contains `embed_field`.
  std::string embed_field;
  // Standalone guard: reject when output shares a token n-gram of at least
  // `leak_ngram` with `leak_field`.
  std::string leak_field;
  int leak_ngram = 12;
  std::optional<Sampling> sampling;
};

struct JudgeOptions {
  double threshold = 0.7;
  // Raw judge scores are divided by this to land in [0, 1].
  double score_scale = 1.0;
  std::string verdict_field = "verdict";
};

class Graph;
struct CallRecord;
struct WalkStep;

using TransformFn =
    std::function<std::map<std::string, Value>(const Payload& input)>;

struct NodeSpec {
  std::string id;
  Condition pre;
  Condition post;
  Behavior behavior = Behavior::kPureTransform;
  std::optional<PromptTemplate> prompt;
  std::optional<std::string> model_role;
  GeneratorOptions generator;
  JudgeOptions judge;
  TransformFn transform;
  std::shared_ptr<const Graph> subgraph;

  /// Static contract checks (slot coverage, required parts per behavior).
  /// Throws Error(kConfigInvalid).
  void validate() const;

  /// Fields whose values are produced without reading a payload entry.
  Condition drawn_fields() const;
};

/// Everything a node application may touch besides its input payload.
struct ExecContext {
  Gateway* gateway = nullptr;
  Rng* rng = nullptr;
  // Mixed with the provenance length into per-request sampling seeds.
  std::optional<std::uint64_t> request_seed_base;
  // Appended after the rendered prompt, used for answer revisions.
  Messages extra_messages;
};

struct NodeOutcome {
  Payload payload;
  std::vector<CallRecord> calls;
  std::vector<WalkStep> inner;  // filled for composed-graph nodes
};

bool check_preconditions(const Payload& payload, const NodeSpec& node);

/// Applies `node`, returning the extended payload plus the gateway calls it
/// issued. Preconditions are checked before any external call.
NodeOutcome apply_node_traced(const Payload& payload, const NodeSpec& node,
                              ExecContext& ctx);

Payload apply_node(const Payload& payload, const NodeSpec& node,
                   ExecContext& ctx);

/// Invocation ids are "<node id>#<provenance index>".
std::string invocation_id(const NodeSpec& node, const Payload& input);

}  // namespace synthforge
