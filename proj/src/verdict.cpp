#include "synthforge/verdict.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "synthforge/errors.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

json JudgeVerdict::to_json() const {
  return {{"score", score}, {"pass", pass}, {"rubric_notes", notes}};
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  if (!j.is_object() || !j.contains("score") || !j.contains("pass")) {
    throw Error(ErrorCode::kMalformedResponse, "verdict record needs score and pass");
  }
  JudgeVerdict v;
  v.score = j.at("score").get<double>();
  v.pass = j.at("pass").get<bool>();
  v.notes = j.value("rubric_notes", std::string{});
  return v;
}

namespace {

std::optional<double> score_from_text(std::string_view s) {
  const std::string lower = text::to_lower(s);
  const auto pos = lower.find("score");
  if (pos == std::string::npos) return std::nullopt;
  std::size_t i = pos + 5;
  while (i < lower.size() && (lower[i] == ' ' || lower[i] == ':' || lower[i] == '=' ||
                              lower[i] == '*' || lower[i] == '"')) {
    ++i;
  }
  const char* begin = lower.c_str() + i;
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) return std::nullopt;
  return v;
}

}  // namespace

JudgeVerdict parse_judge_verdict(std::string_view completion, double threshold,
                                 double scale) {
  std::optional<double> raw;
  std::string notes;
  try {
    const auto j = json::parse(text::strip_code_fence(completion));
    if (j.is_object() && j.contains("score") && j["score"].is_number()) {
      raw = j["score"].get<double>();
      if (j.contains("max_score") && j["max_score"].is_number()) {
        scale = j["max_score"].get<double>();
      }
      if (j.contains("rubric_notes") && j["rubric_notes"].is_string()) {
        notes = j["rubric_notes"].get<std::string>();
      } else if (j.contains("notes") && j["notes"].is_string()) {
        notes = j["notes"].get<std::string>();
      }
    }
  } catch (const json::exception&) {
  }
  if (!raw) {
    raw = score_from_text(completion);
    notes = std::string(text::trim(completion));
  }
  if (!raw || !std::isfinite(*raw)) {
    throw Error(ErrorCode::kMalformedResponse, "judge output carries no score");
  }
  if (!(scale > 0.0)) throw Error(ErrorCode::kMalformedResponse, "non-positive score scale");
  const double score = *raw / scale;
  if (score < 0.0 || score > 1.0) {
    throw Error(ErrorCode::kMalformedResponse,
                "normalized score " + std::to_string(score) + " outside [0, 1]");
  }
  return JudgeVerdict{score, score >= threshold, std::move(notes)};
}

}  // namespace synthforge
