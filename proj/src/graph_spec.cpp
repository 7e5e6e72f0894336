#include "synthforge/graph_spec.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "synthforge/errors.hpp"
#include "synthforge/synthesis.hpp"
#include "synthforge/text.hpp"

namespace synthforge {

using nlohmann::json;

Sampling parse_sampling(const json& j, Sampling base) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, "sampling must be an object");
  try {
    if (j.contains("temperature")) base.temperature = j["temperature"].get<double>();
    if (j.contains("top_p")) base.top_p = j["top_p"].get<double>();
    if (j.contains("top_k")) base.top_k = j["top_k"].get<int>();
    if (j.contains("max_tokens")) base.max_tokens = j["max_tokens"].get<int>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfigInvalid, std::string("sampling: ") + ex.what());
  }
  return base;
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfigInvalid, "cannot read prompt file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string str(const json& j, const char* key, std::string fallback = {}) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw Error(ErrorCode::kConfigInvalid, std::string("'") + key + "' must be a string");
  return j[key].get<std::string>();
}

std::optional<PromptTemplate> opt_prompt(const json& j, const std::filesystem::path& base_dir) {
  if (!j.contains("prompt")) return std::nullopt;
  return parse_prompt(j["prompt"], base_dir);
}

std::optional<Sampling> opt_sampling(const json& j) {
  if (!j.contains("sampling")) return std::nullopt;
  return parse_sampling(j["sampling"]);
}

NodeSpec library_node(const json& j, const std::filesystem::path& base_dir) {
  const std::string use = str(j, "use");
  if (use == "transform") {
    TransformNodeOptions o;
    o.id = str(j, "id", o.id);
    o.target_types = j.value("target_types", std::vector<std::string>{});
    o.identity_type = str(j, "identity_type", o.identity_type);
    o.model_role = str(j, "model_role", o.model_role);
    o.prompt = opt_prompt(j, base_dir);
    o.sampling = opt_sampling(j);
    return make_transform_node(o);
  }
  if (use == "instruction") {
    InstructionNodeOptions o;
    o.id = str(j, "id");
    o.instruction_types = j.value("instruction_types", std::vector<std::string>{});
    o.mode = parse_instruction_mode(str(j, "mode", "contextual"));
    o.model_role = str(j, "model_role", o.model_role);
    o.leak_ngram = j.value("leak_ngram", o.leak_ngram);
    o.prompt = opt_prompt(j, base_dir);
    o.sampling = opt_sampling(j);
    return make_instruction_node(o);
  }
  if (use == "answer") {
    AnswerNodeOptions o;
    o.id = str(j, "id", o.id);
    o.model_role = str(j, "model_role", o.model_role);
    o.prompt = opt_prompt(j, base_dir);
    o.sampling = opt_sampling(j);
    return make_answer_node(o);
  }
  if (use == "judge") {
    JudgeNodeOptions o;
    o.id = str(j, "id", o.id);
    o.model_role = str(j, "model_role", o.model_role);
    o.threshold = j.value("threshold", o.threshold);
    o.score_scale = j.value("score_scale", o.score_scale);
    o.prompt = opt_prompt(j, base_dir);
    o.sampling = opt_sampling(j);
    return make_judge_node(o);
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown library node '" + use + "'");
}

// Names of graphs referenced by composed nodes in a node list.
std::set<std::string> references(const json& spec) {
  std::set<std::string> out;
  for (const auto& n : spec.value("nodes", json::array())) {
    if (n.contains("graph") && n["graph"].is_string()) out.insert(n["graph"].get<std::string>());
  }
  return out;
}

}  // namespace

PromptTemplate parse_prompt(const json& j, const std::filesystem::path& base_dir) {
  if (j.is_string()) return PromptTemplate{"", j.get<std::string>()};
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, "prompt must be a string or an object");
  PromptTemplate p;
  p.system = j.contains("system_file") ? slurp(base_dir / str(j, "system_file")) : str(j, "system");
  p.user = j.contains("user_file") ? slurp(base_dir / str(j, "user_file")) : str(j, "user");
  if (p.user.empty()) throw Error(ErrorCode::kConfigInvalid, "prompt needs a user part");
  return p;
}

TransformFn builtin_transform(const json& spec) {
  const std::string op = str(spec, "op");
  if (op == "identity") {
    return [](const Payload&) { return std::map<std::string, Value>{}; };
  }
  if (op == "copy") {
    const std::string from = str(spec, "from");
    const std::string to = str(spec, "to");
    return [from, to](const Payload& p) { return std::map<std::string, Value>{{to, p.at(from)}}; };
  }
  if (op == "lowercase") {
    const std::string field = str(spec, "field");
    const std::string to = str(spec, "to", field);
    return [field, to](const Payload& p) {
      return std::map<std::string, Value>{{to, Value::text(text::to_lower(p.at(field).as_text()))}};
    };
  }
  if (op == "set") {
    std::map<std::string, Value> values;
    for (const auto& [name, v] : spec.at("values").items()) {
      values.emplace(name, Value::from_json(parse_field_kind(v.at("kind").get<std::string>()), v.at("value")));
    }
    return [values](const Payload&) { return values; };
  }
  if (op == "concat") {
    const auto fields = spec.at("fields").get<std::vector<std::string>>();
    const std::string to = str(spec, "to");
    const std::string sep = str(spec, "separator", "\n\n");
    return [fields, to, sep](const Payload& p) {
      std::string out;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += sep;
        out += p.at(fields[i]).render();
      }
      return std::map<std::string, Value>{{to, Value::text(out)}};
    };
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown transform op '" + op + "'");
}

NodeSpec parse_node_spec(const json& j, const GraphTable& known, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, "node must be an object");
  try {
    if (j.contains("use")) return library_node(j, base_dir);
    const std::string id = str(j, "id");
    if (id.empty()) throw Error(ErrorCode::kConfigInvalid, "node needs an id");
    const Behavior behavior = parse_behavior(str(j, "behavior", "pure-transform"));
    if (behavior == Behavior::kComposedGraph) {
      const std::string ref = str(j, "graph");
      auto it = known.find(ref);
      if (it == known.end()) throw Error(ErrorCode::kConfigInvalid, "node '" + id + "' names unknown graph '" + ref + "'");
      return compose_graph(it->second, id);
    }
    NodeSpec n;
    n.id = id;
    n.behavior = behavior;
    n.pre = Condition::from_json(j.value("pre", json::object()));
    n.post = Condition::from_json(j.value("post", json::object()));
    if (j.contains("model_role")) n.model_role = str(j, "model_role");
    n.prompt = opt_prompt(j, base_dir);
    n.generator.sampling = opt_sampling(j);
    const json choices = j.value("choices", json::object());
    const json constants = j.value("constants", json::object());
    for (const auto& [field, options] : choices.items()) {
      n.generator.choices.push_back({field, options.get<std::vector<std::string>>()});
    }
    for (const auto& [name, v] : constants.items()) {
      n.generator.constants.emplace(name, Value::from_json(parse_field_kind(v.at("kind").get<std::string>()), v.at("value")));
    }
    if (j.contains("passthrough")) {
      const auto& pt = j["passthrough"];
      n.generator.passthrough_field = str(pt, "field");
      n.generator.passthrough_value = str(pt, "value");
      n.generator.passthrough_from = str(pt, "from");
    }
    n.generator.embed_field = str(j, "embed_field");
    n.generator.leak_field = str(j, "leak_field");
    n.generator.leak_ngram = j.value("leak_ngram", n.generator.leak_ngram);
    if (j.contains("judge")) {
      const auto& jj = j["judge"];
      n.judge.threshold = jj.value("threshold", n.judge.threshold);
      n.judge.score_scale = jj.value("score_scale", n.judge.score_scale);
      n.judge.verdict_field = str(jj, "verdict_field", n.judge.verdict_field);
    }
    if (behavior == Behavior::kPureTransform) {
      n.transform = builtin_transform(j.value("transform", json{{"op", "identity"}}));
    }
    n.validate();
    return n;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kConfigInvalid, std::string("node spec: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::kInvalidArgument) throw Error(ErrorCode::kConfigInvalid, ex.what());
    throw;
  }
}

GraphTable load_graphs(const json& graphs, const std::filesystem::path& base_dir, bool require_valid) {
  if (!graphs.is_object()) throw Error(ErrorCode::kConfigInvalid, "graphs must be an object of named graphs");
  for (const auto& [name, spec] : graphs.items()) {
    if (spec.contains("edges")) {
      throw Error(ErrorCode::kConfigInvalid, "graph '" + name + "' declares edges; edges are inferred");
    }
    if (!spec.contains("nodes") || !spec["nodes"].is_array()) {
      throw Error(ErrorCode::kConfigInvalid, "graph '" + name + "' needs a node list");
    }
    for (const auto& ref : references(spec)) {
      if (!graphs.contains(ref)) {
        throw Error(ErrorCode::kConfigInvalid, "graph '" + name + "' references unknown graph '" + ref + "'");
      }
    }
  }
  GraphTable table;
  std::set<std::string> visiting;
  std::function<void(const std::string&)> build = [&](const std::string& name) {
    if (table.count(name)) return;
    if (!visiting.insert(name).second) {
      throw Error(ErrorCode::kConfigInvalid, "graph '" + name + "' contains itself");
    }
    const auto& spec = graphs.at(name);
    for (const auto& ref : references(spec)) build(ref);
    std::vector<NodeSpec> nodes;
    for (const auto& n : spec["nodes"]) nodes.push_back(parse_node_spec(n, table, base_dir));
    auto g = std::make_shared<const Graph>(Graph::build(std::move(nodes)));
    // Composition and walks both need validity; report it with the name.
    if (require_valid && !g->valid()) {
      throw Error(ErrorCode::kInvalidGraph, "graph '" + name + "': " + g->report().describe());
    }
    visiting.erase(name);
    table.emplace(name, std::move(g));
  };
  for (const auto& [name, spec] : graphs.items()) build(name);
  return table;
}

}  // namespace synthforge
