#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synthforge/conversation.hpp"
#include "synthforge/rng.hpp"

namespace synthforge {

enum class SchemaKind { kString, kInteger, kNumber, kBoolean, kObject, kArray };

std::string_view to_string(SchemaKind kind);

struct SchemaSpec;

struct SchemaField {
  std::string name;
  SchemaKind kind = SchemaKind::kString;
  bool required = true;
  std::optional<std::size_t> min_length;  // strings
  std::optional<std::size_t> max_length;
  std::optional<double> minimum;          // numbers
  std::optional<double> maximum;
  std::optional<std::string> format;      // email, date, uuid, uri
  std::optional<std::string> pattern;     // ECMAScript regex, full match
  std::vector<nlohmann::json> enum_values;
  std::optional<std::size_t> min_items;   // arrays
  std::optional<std::size_t> max_items;
  std::shared_ptr<SchemaField> items;     // arrays: element schema, name unused
  std::shared_ptr<SchemaSpec> properties; // objects
};

struct SchemaSpec {
  std::vector<SchemaField> fields;
  bool closed = true;  // extraneous fields rejected

  /// JSON Schema subset: type, properties, required, additionalProperties,
  /// minLength, maxLength, minimum, maximum, format, pattern, enum, items,
  /// minItems, maxItems. Throws Error(kConfigInvalid) on anything else.
  static SchemaSpec from_json_schema(const nlohmann::json& j);
  nlohmann::json to_json_schema() const;
};

struct SchemaViolation {
  std::string path;  // JSON pointer
  std::string what;
};

std::vector<SchemaViolation> validate_record(const nlohmann::json& record, const SchemaSpec& schema);

/// Supported format names for SchemaField::format.
bool check_string_format(std::string_view format, std::string_view value);

struct LengthPenalty {
  std::size_t max_chars = 0;  // 0 disables
  double weight = 0.5;
};

/// Parses `candidate` (answer segment, optional code fence) as JSON and
/// validates it. Never throws on bad input: parse failures are reward 0.0.
RewardRecord verify_schema(std::string_view candidate, const SchemaSpec& schema,
                           const LengthPenalty& penalty = {});

enum class InjectionKind { kTypeMismatch, kConstraintViolation, kFormatError, kExtraneousField };

std::string_view to_string(InjectionKind kind);

struct Injection {
  InjectionKind kind = InjectionKind::kTypeMismatch;
  std::string path;         // JSON pointer of the touched member
  nlohmann::json original;  // value before injection; unused for extraneous fields
  nlohmann::json injected;

  nlohmann::json to_json() const;
};

struct InjectionResult {
  nlohmann::json record;
  std::vector<Injection> injections;
};

/// Applies up to `count` injections at distinct paths, each chosen so the
/// record stops validating. Throws Error(kPreconditionViolation) when the
/// input does not validate and Error(kUninjectableSchema) when no member
/// can be corrupted.
InjectionResult inject_schema_errors(const nlohmann::json& valid_record, const SchemaSpec& schema,
                                     Rng& rng, std::size_t count = 1);

/// Undoes the listed injections in reverse order.
nlohmann::json revert_injections(nlohmann::json record, std::span<const Injection> injections);

}  // namespace synthforge
