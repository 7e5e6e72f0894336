#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace synthforge {

struct JudgeVerdict {
  double score = 0.0;  // normalized to [0, 1]
  bool pass = false;   // score >= threshold
  std::string notes;

  nlohmann::json to_json() const;
  /// Throws Error(kMalformedResponse) for a record missing score/pass.
  static JudgeVerdict from_json(const nlohmann::json& j);
};

/// Reads a judge completion. Accepts a JSON object with "score" (and
/// optional "notes"/"rubric_notes"), possibly fenced, or a plain-text line
/// of the form "score: <number>". The raw score is divided by `scale`.
/// Throws Error(kMalformedResponse) when no score can be read or the
/// normalized score falls outside [0, 1].
JudgeVerdict parse_judge_verdict(std::string_view completion, double threshold,
                                 double scale = 1.0);

}  // namespace synthforge
