#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/dataflow.hpp"
#include "synthforge/gateway.hpp"

namespace synthforge {

struct CallRecord {
  std::string node_id;
  CompletionRequest request;
  CompletionResponse response;

  nlohmann::json to_json() const;
  static CallRecord from_json(const nlohmann::json& j);
};

struct WalkStep {
  std::string node_id;
  Behavior behavior = Behavior::kPureTransform;
  Payload payload_after;
  std::vector<CallRecord> calls;
  std::vector<WalkStep> inner;  // sub-walk of a composed-graph node

  nlohmann::json to_json() const;
  static WalkStep from_json(const nlohmann::json& j);
};

struct WalkTrace {
  std::uint64_t rng_seed = 0;
  Payload seed;
  std::vector<WalkStep> steps;

  std::vector<std::string> path() const;
  /// Path with composed nodes replaced by their sub-walks; inner ids are
  /// qualified as "outer/inner".
  std::vector<std::string> flattened_path() const;
  /// Every gateway call in execution order, across nesting levels.
  std::vector<CallRecord> all_calls() const;
  const Payload& final_payload() const;

  nlohmann::json to_json() const;
  static WalkTrace from_json(const nlohmann::json& j);
};

}  // namespace synthforge
