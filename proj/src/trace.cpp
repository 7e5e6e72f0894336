#include "synthforge/trace.hpp"

#include "synthforge/errors.hpp"

namespace synthforge {

using nlohmann::json;

json CallRecord::to_json() const {
  return {{"node", node_id}, {"request", request.to_json()}, {"response", response.to_json()}};
}

CallRecord CallRecord::from_json(const json& j) {
  return {j.at("node").get<std::string>(), CompletionRequest::from_json(j.at("request")),
          CompletionResponse::from_json(j.at("response"))};
}

json WalkStep::to_json() const {
  json calls_j = json::array();
  for (const auto& c : calls) calls_j.push_back(c.to_json());
  json inner_j = json::array();
  for (const auto& s : inner) inner_j.push_back(s.to_json());
  return {{"node", node_id},
          {"behavior", to_string(behavior)},
          {"payload", payload_after.to_json()},
          {"calls", calls_j},
          {"inner", inner_j}};
}

WalkStep WalkStep::from_json(const json& j) {
  WalkStep s;
  s.node_id = j.at("node").get<std::string>();
  s.behavior = parse_behavior(j.at("behavior").get<std::string>());
  s.payload_after = Payload::from_json(j.at("payload"));
  for (const auto& c : j.value("calls", json::array())) s.calls.push_back(CallRecord::from_json(c));
  for (const auto& i : j.value("inner", json::array())) s.inner.push_back(WalkStep::from_json(i));
  return s;
}

namespace {

void flatten(const std::vector<WalkStep>& steps, const std::string& prefix,
             std::vector<std::string>& out) {
  for (const auto& s : steps) {
    if (s.behavior == Behavior::kComposedGraph) {
      flatten(s.inner, prefix + s.node_id + "/", out);
    } else {
      out.push_back(prefix + s.node_id);
    }
  }
}

void gather_calls(const std::vector<WalkStep>& steps, std::vector<CallRecord>& out) {
  for (const auto& s : steps) {
    out.insert(out.end(), s.calls.begin(), s.calls.end());
    gather_calls(s.inner, out);
  }
}

}  // namespace

std::vector<std::string> WalkTrace::path() const {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.node_id);
  return out;
}

std::vector<std::string> WalkTrace::flattened_path() const {
  std::vector<std::string> out;
  flatten(steps, "", out);
  return out;
}

std::vector<CallRecord> WalkTrace::all_calls() const {
  std::vector<CallRecord> out;
  gather_calls(steps, out);
  return out;
}

const Payload& WalkTrace::final_payload() const {
  return steps.empty() ? seed : steps.back().payload_after;
}

json WalkTrace::to_json() const {
  json steps_j = json::array();
  for (const auto& s : steps) steps_j.push_back(s.to_json());
  return {{"rng_seed", rng_seed}, {"seed", seed.to_json()}, {"steps", steps_j}};
}

WalkTrace WalkTrace::from_json(const json& j) {
  WalkTrace t;
  t.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  t.seed = Payload::from_json(j.at("seed"));
  for (const auto& s : j.at("steps")) t.steps.push_back(WalkStep::from_json(s));
  return t;
}

}  // namespace synthforge
