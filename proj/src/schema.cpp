#include "synthforge/schema.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "synthforge/errors.hpp"
#include "synthforge/text.hpp"
#include "synthforge/verifiers.hpp"

namespace synthforge {

using nlohmann::json;

std::string_view to_string(SchemaKind kind) {
  switch (kind) {
    case SchemaKind::kString: return "string";
    case SchemaKind::kInteger: return "integer";
    case SchemaKind::kNumber: return "number";
    case SchemaKind::kBoolean: return "boolean";
    case SchemaKind::kObject: return "object";
    case SchemaKind::kArray: return "array";
  }
  return "string";
}

std::string_view to_string(InjectionKind kind) {
  switch (kind) {
    case InjectionKind::kTypeMismatch: return "type-mismatch";
    case InjectionKind::kConstraintViolation: return "constraint-violation";
    case InjectionKind::kFormatError: return "format-error";
    case InjectionKind::kExtraneousField: return "extraneous-field";
  }
  return "type-mismatch";
}

json Injection::to_json() const {
  return {{"kind", to_string(kind)}, {"path", path}, {"original", original}, {"injected", injected}};
}

namespace {

const std::set<std::string, std::less<>> kFormats = {"email", "date", "uuid", "uri"};

SchemaKind parse_kind(const std::string& s) {
  if (s == "string") return SchemaKind::kString;
  if (s == "integer") return SchemaKind::kInteger;
  if (s == "number") return SchemaKind::kNumber;
  if (s == "boolean") return SchemaKind::kBoolean;
  if (s == "object") return SchemaKind::kObject;
  if (s == "array") return SchemaKind::kArray;
  throw Error(ErrorCode::kConfigInvalid, "unsupported schema type '" + s + "'");
}

SchemaSpec parse_object(const json& j);

void check_keywords(const json& j) {
  static const std::set<std::string> known = {
      "type", "properties", "required", "additionalProperties", "minLength", "maxLength",
      "minimum", "maximum", "format", "pattern", "enum", "items", "minItems", "maxItems",
      "description", "title", "$schema"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error(ErrorCode::kConfigInvalid, "unsupported schema keyword '" + k + "'");
  }
}

SchemaField parse_field(const std::string& name, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, "schema for '" + name + "' is not an object");
  check_keywords(j);
  SchemaField f;
  f.name = name;
  f.kind = parse_kind(j.at("type").get<std::string>());
  if (j.contains("minLength")) f.min_length = j["minLength"].get<std::size_t>();
  if (j.contains("maxLength")) f.max_length = j["maxLength"].get<std::size_t>();
  if (j.contains("minimum")) f.minimum = j["minimum"].get<double>();
  if (j.contains("maximum")) f.maximum = j["maximum"].get<double>();
  if (j.contains("format")) {
    f.format = j["format"].get<std::string>();
    if (!kFormats.count(*f.format)) throw Error(ErrorCode::kConfigInvalid, "unsupported format '" + *f.format + "'");
  }
  if (j.contains("pattern")) {
    f.pattern = j["pattern"].get<std::string>();
    try {
      std::regex re(*f.pattern);
    } catch (const std::regex_error&) {
      throw Error(ErrorCode::kConfigInvalid, "bad pattern for '" + name + "'");
    }
  }
  if (j.contains("enum")) f.enum_values = j["enum"].get<std::vector<json>>();
  if (j.contains("minItems")) f.min_items = j["minItems"].get<std::size_t>();
  if (j.contains("maxItems")) f.max_items = j["maxItems"].get<std::size_t>();
  if (f.kind == SchemaKind::kArray && j.contains("items")) {
    f.items = std::make_shared<SchemaField>(parse_field(name + "[]", j["items"]));
  }
  if (f.kind == SchemaKind::kObject) f.properties = std::make_shared<SchemaSpec>(parse_object(j));
  return f;
}

SchemaSpec parse_object(const json& j) {
  SchemaSpec s;
  const auto required = j.value("required", std::vector<std::string>{});
  if (j.contains("properties")) {
    for (const auto& [name, sub] : j["properties"].items()) {
      SchemaField f = parse_field(name, sub);
      f.required = std::find(required.begin(), required.end(), name) != required.end();
      s.fields.push_back(std::move(f));
    }
  }
  s.closed = j.contains("additionalProperties") && j["additionalProperties"].is_boolean() &&
             !j["additionalProperties"].get<bool>();
  return s;
}

json field_to_schema(const SchemaField& f);

json object_to_schema(const SchemaSpec& s) {
  json props = json::object();
  json required = json::array();
  for (const auto& f : s.fields) {
    props[f.name] = field_to_schema(f);
    if (f.required) required.push_back(f.name);
  }
  return {{"type", "object"}, {"properties", props}, {"required", required},
          {"additionalProperties", !s.closed}};
}

json field_to_schema(const SchemaField& f) {
  json j = f.kind == SchemaKind::kObject && f.properties ? object_to_schema(*f.properties)
                                                         : json{{"type", to_string(f.kind)}};
  if (f.min_length) j["minLength"] = *f.min_length;
  if (f.max_length) j["maxLength"] = *f.max_length;
  if (f.minimum) j["minimum"] = *f.minimum;
  if (f.maximum) j["maximum"] = *f.maximum;
  if (f.format) j["format"] = *f.format;
  if (f.pattern) j["pattern"] = *f.pattern;
  if (!f.enum_values.empty()) j["enum"] = f.enum_values;
  if (f.min_items) j["minItems"] = *f.min_items;
  if (f.max_items) j["maxItems"] = *f.max_items;
  if (f.items) j["items"] = field_to_schema(*f.items);
  return j;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string escape_pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

bool kind_matches(const json& v, SchemaKind kind) {
  switch (kind) {
    case SchemaKind::kString: return v.is_string();
    case SchemaKind::kInteger: return v.is_number_integer();
    case SchemaKind::kNumber: return v.is_number();
    case SchemaKind::kBoolean: return v.is_boolean();
    case SchemaKind::kObject: return v.is_object();
    case SchemaKind::kArray: return v.is_array();
  }
  return false;
}

void validate_object(const json& record, const SchemaSpec& schema, const std::string& path,
                     std::vector<SchemaViolation>& out);

void validate_value(const json& v, const SchemaField& f, const std::string& path,
                    std::vector<SchemaViolation>& out) {
  auto bad = [&](std::string what) { out.push_back({path, std::move(what)}); };
  if (!kind_matches(v, f.kind)) {
    bad("expected " + std::string(to_string(f.kind)) + ", found " + v.type_name());
    return;
  }
  if (!f.enum_values.empty() &&
      std::find(f.enum_values.begin(), f.enum_values.end(), v) == f.enum_values.end()) {
    bad("value not in enum");
  }
  switch (f.kind) {
    case SchemaKind::kString: {
      const auto& s = v.get_ref<const std::string&>();
      const auto len = utf8_length(s);
      if (f.min_length && len < *f.min_length) bad("shorter than " + std::to_string(*f.min_length));
      if (f.max_length && len > *f.max_length) bad("longer than " + std::to_string(*f.max_length));
      if (f.format && !check_string_format(*f.format, s)) bad("not a valid " + *f.format);
      if (f.pattern && !std::regex_match(s, std::regex(*f.pattern))) bad("does not match pattern");
      break;
    }
    case SchemaKind::kInteger:
    case SchemaKind::kNumber: {
      const double d = v.get<double>();
      if (f.minimum && d < *f.minimum) bad("below minimum");
      if (f.maximum && d > *f.maximum) bad("above maximum");
      break;
    }
    case SchemaKind::kArray: {
      if (f.min_items && v.size() < *f.min_items) bad("too few items");
      if (f.max_items && v.size() > *f.max_items) bad("too many items");
      if (f.items) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          validate_value(v[i], *f.items, path + "/" + std::to_string(i), out);
        }
      }
      break;
    }
    case SchemaKind::kObject:
      if (f.properties) validate_object(v, *f.properties, path, out);
      break;
    case SchemaKind::kBoolean:
      break;
  }
}

void validate_object(const json& record, const SchemaSpec& schema, const std::string& path,
                     std::vector<SchemaViolation>& out) {
  if (!record.is_object()) {
    out.push_back({path, "expected object"});
    return;
  }
  std::set<std::string> declared;
  for (const auto& f : schema.fields) {
    declared.insert(f.name);
    const std::string child = path + "/" + escape_pointer_token(f.name);
    auto it = record.find(f.name);
    if (it == record.end()) {
      if (f.required) out.push_back({child, "missing required field"});
      continue;
    }
    validate_value(*it, f, child, out);
  }
  if (schema.closed) {
    for (const auto& [k, v] : record.items()) {
      if (!declared.count(k)) out.push_back({path + "/" + escape_pointer_token(k), "extraneous field"});
    }
  }
}

// ---------------------------------------------------------- injection

struct Candidate {
  Injection injection;
};

json wrong_type(SchemaKind kind) {
  switch (kind) {
    case SchemaKind::kString: return 12345;
    case SchemaKind::kInteger: return "12345";
    case SchemaKind::kNumber: return "not a number";
    case SchemaKind::kBoolean: return "true";
    case SchemaKind::kObject: return json::array();
    case SchemaKind::kArray: return json::object();
  }
  return nullptr;
}

void constraint_candidates(const json& value, const SchemaField& f, std::vector<json>& out) {
  switch (f.kind) {
    case SchemaKind::kString:
      if (f.max_length) out.push_back(std::string(*f.max_length + 1, 'x'));
      if (f.min_length && *f.min_length > 0) out.push_back(std::string(*f.min_length - 1, 'x'));
      if (!f.enum_values.empty()) out.push_back("__not_in_enum__");
      break;
    case SchemaKind::kInteger:
      if (f.maximum) out.push_back(static_cast<std::int64_t>(std::floor(*f.maximum)) + 1);
      if (f.minimum) out.push_back(static_cast<std::int64_t>(std::ceil(*f.minimum)) - 1);
      if (!f.enum_values.empty()) out.push_back(std::int64_t{1'000'000'007});
      break;
    case SchemaKind::kNumber:
      if (f.maximum) out.push_back(*f.maximum + 1.0);
      if (f.minimum) out.push_back(*f.minimum - 1.0);
      if (!f.enum_values.empty()) out.push_back(1.0e9 + 0.5);
      break;
    case SchemaKind::kArray:
      if (f.min_items && *f.min_items > 0) out.push_back(json::array());
      if (f.max_items && !value.empty()) {
        out.push_back(json(std::vector<json>(*f.max_items + 1, value.front())));
      }
      break;
    case SchemaKind::kBoolean:
    case SchemaKind::kObject:
      break;
  }
}

void format_candidates(const SchemaField& f, std::vector<json>& out) {
  if (f.kind != SchemaKind::kString) return;
  if (f.format) out.push_back("not a valid " + *f.format);
  if (f.pattern) {
    const std::regex re(*f.pattern);
    for (const char* probe : {"~~ ~~", "", "0", "not matching"}) {
      if (!std::regex_match(probe, re)) {
        out.push_back(probe);
        break;
      }
    }
  }
}

void gather(const json& record, const SchemaSpec& schema, const std::string& path,
            std::vector<Candidate>& out) {
  for (const auto& f : schema.fields) {
    auto it = record.find(f.name);
    if (it == record.end()) continue;
    const std::string child = path + "/" + escape_pointer_token(f.name);
    out.push_back({{InjectionKind::kTypeMismatch, child, *it, wrong_type(f.kind)}});
    std::vector<json> values;
    constraint_candidates(*it, f, values);
    for (auto& v : values) out.push_back({{InjectionKind::kConstraintViolation, child, *it, std::move(v)}});
    values.clear();
    format_candidates(f, values);
    for (auto& v : values) out.push_back({{InjectionKind::kFormatError, child, *it, std::move(v)}});
    if (f.kind == SchemaKind::kObject && f.properties) gather(*it, *f.properties, child, out);
  }
  if (schema.closed) {
    std::string key = "unexpected_field";
    for (int k = 2; record.contains(key); ++k) key = "unexpected_field_" + std::to_string(k);
    out.push_back({{InjectionKind::kExtraneousField, path + "/" + escape_pointer_token(key), nullptr,
                    "injected"}});
  }
}

void apply_injection(json& record, const Injection& inj) {
  record[json::json_pointer(inj.path)] = inj.injected;
}

bool overlaps(const std::string& a, const std::string& b) {
  auto prefix = [](const std::string& p, const std::string& q) {
    return q.size() >= p.size() && q.compare(0, p.size(), p) == 0 &&
           (q.size() == p.size() || q[p.size()] == '/');
  };
  return prefix(a, b) || prefix(b, a);
}

}  // namespace

bool check_string_format(std::string_view format, std::string_view value) {
  const std::string v(value);
  if (format == "email") {
    static const std::regex re(R"(^[^@\s]+@[^@\s]+\.[^@\s]+$)");
    return std::regex_match(v, re);
  }
  if (format == "date") {
    static const std::regex re(R"(^(\d{4})-(\d{2})-(\d{2})$)");
    std::smatch m;
    if (!std::regex_match(v, m, re)) return false;
    const int year = std::stoi(m[1]);
    const int month = std::stoi(m[2]);
    const int day = std::stoi(m[3]);
    if (month < 1 || month > 12 || day < 1) return false;
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return day <= kDays[month - 1] + (month == 2 && leap ? 1 : 0);
  }
  if (format == "uuid") {
    static const std::regex re(
        R"(^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$)");
    return std::regex_match(v, re);
  }
  if (format == "uri") {
    static const std::regex re(R"(^[A-Za-z][A-Za-z0-9+.\-]*://\S+$)");
    return std::regex_match(v, re);
  }
  throw Error(ErrorCode::kConfigInvalid, "unsupported format '" + std::string(format) + "'");
}

SchemaSpec SchemaSpec::from_json_schema(const json& j) {
  try {
    if (!j.is_object() || j.value("type", std::string("object")) != "object") {
      throw Error(ErrorCode::kConfigInvalid, "schema root must be an object type");
    }
    check_keywords(j);
    return parse_object(j);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfigInvalid, ex.what());
  }
}

json SchemaSpec::to_json_schema() const { return object_to_schema(*this); }

std::vector<SchemaViolation> validate_record(const json& record, const SchemaSpec& schema) {
  std::vector<SchemaViolation> out;
  validate_object(record, schema, "", out);
  return out;
}

RewardRecord verify_schema(std::string_view candidate, const SchemaSpec& schema,
                           const LengthPenalty& penalty) {
  RewardRecord r;
  r.verifier_id = "schema";
  const std::string_view body = text::strip_code_fence(answer_segment(candidate));
  if (penalty.max_chars > 0 && body.size() > penalty.max_chars) {
    const double excess = static_cast<double>(body.size() - penalty.max_chars) /
                          static_cast<double>(penalty.max_chars);
    r.penalty = -penalty.weight * std::min(1.0, excess);
  }
  json record;
  try {
    record = json::parse(body);
  } catch (const json::exception& ex) {
    r.detail = std::string("parse failure: ") + ex.what();
    return r;
  }
  const auto violations = validate_record(record, schema);
  if (!violations.empty()) {
    r.detail = violations.front().path + ": " + violations.front().what;
    for (std::size_t i = 1; i < violations.size(); ++i) {
      r.detail += "; " + violations[i].path + ": " + violations[i].what;
    }
    return r;
  }
  r.reward = 1.0;
  return r;
}

InjectionResult inject_schema_errors(const json& valid_record, const SchemaSpec& schema, Rng& rng,
                                     std::size_t count) {
  if (!validate_record(valid_record, schema).empty()) {
    throw Error(ErrorCode::kPreconditionViolation, "record does not validate before injection");
  }
  std::vector<Candidate> candidates;
  gather(valid_record, schema, "", candidates);
  // Keep only candidates that break validation on their own.
  std::vector<Candidate> effective;
  for (auto& c : candidates) {
    json probe = valid_record;
    apply_injection(probe, c.injection);
    if (!validate_record(probe, schema).empty()) effective.push_back(std::move(c));
  }
  if (effective.empty()) throw Error(ErrorCode::kUninjectableSchema, "no corruptible member");

  shuffle_in_place(effective, rng);
  InjectionResult result;
  result.record = valid_record;
  for (auto& c : effective) {
    if (result.injections.size() >= std::max<std::size_t>(count, 1)) break;
    const bool clash = std::any_of(result.injections.begin(), result.injections.end(),
                                   [&](const Injection& i) { return overlaps(i.path, c.injection.path); });
    if (clash) continue;
    apply_injection(result.record, c.injection);
    result.injections.push_back(std::move(c.injection));
  }
  return result;
}

json revert_injections(json record, std::span<const Injection> injections) {
  for (auto it = injections.rbegin(); it != injections.rend(); ++it) {
    const json::json_pointer ptr(it->path);
    if (it->kind == InjectionKind::kExtraneousField) {
      record[ptr.parent_pointer()].erase(ptr.back());
    } else {
      record[ptr] = it->original;
    }
  }
  return record;
}

}  // namespace synthforge
